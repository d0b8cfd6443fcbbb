//! Prover side of an update session.

use crate::fuzzy::{fe_rec, FeConfig};
use crate::gen2::{self, reader_split, CommandView, Gen2Frame, UpdateSetup};
use crate::mac;

use super::image::FirmwareImage;
use super::{Endpoint, LinkFault, ProtocolError, ProverDb, Reply};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UpdateOutcome {
    Committed,
    RejectedByToken,
    KeyRecoveryFailure,
    BrownoutAborted,
    Timeout,
}

impl UpdateOutcome {
    pub const ALL: [UpdateOutcome; 5] = [
        UpdateOutcome::Committed,
        UpdateOutcome::RejectedByToken,
        UpdateOutcome::KeyRecoveryFailure,
        UpdateOutcome::BrownoutAborted,
        UpdateOutcome::Timeout,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            UpdateOutcome::Committed => "committed",
            UpdateOutcome::RejectedByToken => "rejected_by_token",
            UpdateOutcome::KeyRecoveryFailure => "key_recovery_failure",
            UpdateOutcome::BrownoutAborted => "brownout_aborted",
            UpdateOutcome::Timeout => "timeout",
        }
    }

    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            UpdateOutcome::Committed => 0,
            UpdateOutcome::RejectedByToken => 10,
            UpdateOutcome::KeyRecoveryFailure => 11,
            UpdateOutcome::BrownoutAborted => 12,
            UpdateOutcome::Timeout => 13,
        }
    }

    fn retryable(&self) -> bool {
        matches!(self, UpdateOutcome::BrownoutAborted | UpdateOutcome::KeyRecoveryFailure)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProverConfig {
    pub fe: FeConfig,
    pub chunk_words: usize,
    /// Send every chunk as single-word writes.
    pub reader_split: bool,
    pub max_attempts: usize,
    pub start_block: u16,
    pub csi: u8,
    pub rn: u16,
}

impl Default for ProverConfig {
    fn default() -> Self {
        ProverConfig {
            fe: FeConfig::default_config(),
            chunk_words: 32,
            reader_split: false,
            max_attempts: 3,
            start_block: 0,
            csi: 1,
            rn: 0x5A5A,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    pub outcome: UpdateOutcome,
    pub attempts: usize,
    /// Every frame the prover sent, in order.
    pub transcript: Vec<Gen2Frame>,
    /// `(nonce, MAC'd bytes)` per attempt that reached SecureComm.
    pub signed: Vec<(u128, Vec<u8>)>,
}

fn fault(f: LinkFault) -> UpdateOutcome {
    match f {
        LinkFault::Timeout => UpdateOutcome::Timeout,
        LinkFault::Brownout => UpdateOutcome::BrownoutAborted,
    }
}

struct Attempt<'a, E> {
    link: &'a mut E,
    cfg: &'a ProverConfig,
    transcript: &'a mut Vec<Gen2Frame>,
}

impl<E: Endpoint> Attempt<'_, E> {
    fn send(&mut self, cmd: &CommandView) -> Result<Reply, UpdateOutcome> {
        let frame = gen2::encode(cmd, self.cfg.rn).expect("prover builds valid commands");
        self.transcript.push(frame.clone());
        self.link.transact(&frame).map_err(fault)
    }

    fn expect_ack(&mut self, cmd: &CommandView) -> Result<(), UpdateOutcome> {
        match self.send(cmd)? {
            Reply::Ack => Ok(()),
            _ => Err(UpdateOutcome::RejectedByToken),
        }
    }
}

fn run_attempt<E: Endpoint>(
    record: &crate::enroll::EnrollmentRecord,
    image: &FirmwareImage,
    flat: &[u8],
    attempt: &mut Attempt<'_, E>,
    signed: &mut Vec<(u128, Vec<u8>)>,
) -> UpdateOutcome {
    let cfg = attempt.cfg;
    let result = (|| {
        attempt.expect_ack(&CommandView::TagPrivilege)?;
        let setup = UpdateSetup {
            size: flat.len() as u32,
            start_block: cfg.start_block,
            mac_method: gen2::MAC_METHOD_CMAC,
        };
        let (nonce, challenge, helper) = match attempt.send(&CommandView::Authenticate {
            csi: cfg.csi,
            setup: Some(setup),
        })? {
            Reply::AuthData {
                nonce,
                challenge,
                helper,
            } => (nonce, challenge, helper),
            _ => return Err(UpdateOutcome::RejectedByToken),
        };
        let reference = cfg.fe.fit_response(record.reference(challenge)).ok_or(UpdateOutcome::KeyRecoveryFailure)?;
        let sk = fe_rec(&reference, &helper, &cfg.fe).map_err(|_| UpdateOutcome::KeyRecoveryFailure)?;

        for chunk in image.chunks(cfg.chunk_words) {
            let cmd = CommandView::BlockWrite {
                membank: gen2::MEMBANK_USER,
                wordptr: chunk.wordptr,
                words: chunk.words,
            };
            let parts = if cfg.reader_split { reader_split(&cmd) } else { vec![cmd] };
            for part in &parts {
                attempt.expect_ack(part)?;
            }
        }

        let tag = mac::mac_firmware(flat, nonce, &sk).map_err(|_| UpdateOutcome::KeyRecoveryFailure)?;
        signed.push((nonce, flat.to_vec()));
        let ciphertext = mac::sc_encrypt(tag.0, &sk).map_err(|_| UpdateOutcome::KeyRecoveryFailure)?;
        attempt.expect_ack(&CommandView::SecureComm {
            inner_wordptr: 0,
            ciphertext,
        })
    })();
    match result {
        Ok(()) => UpdateOutcome::Committed,
        Err(o) => o,
    }
}

/// Runs update attempts until one commits, the token rejects, or the
/// attempt budget runs out. Brownouts and key-recovery failures retry.
pub fn prover_update<E: Endpoint>(
    db: &ProverDb,
    token_id: u32,
    image: &FirmwareImage,
    link: &mut E,
    cfg: &ProverConfig,
) -> Result<UpdateReport, ProtocolError> {
    let record = db.get(token_id)?;
    // size limits are the token's call
    image.check_segments()?;
    if image.total_bytes() > u32::MAX as usize {
        return Err(ProtocolError::InvalidImage("image too large to describe".into()));
    }
    let flat = image.flatten();
    let mut transcript = Vec::new();
    let mut signed = Vec::new();
    let mut outcome = UpdateOutcome::Timeout;
    let mut attempts = 0;
    while attempts < cfg.max_attempts.max(1) {
        attempts += 1;
        link.begin_session();
        let mut attempt = Attempt {
            link: &mut *link,
            cfg,
            transcript: &mut transcript,
        };
        outcome = run_attempt(record, image, &flat, &mut attempt, &mut signed);
        if !outcome.retryable() {
            break;
        }
    }
    Ok(UpdateReport {
        outcome,
        attempts,
        transcript,
        signed,
    })
}

/// Frames the prover sends in one complete attempt.
pub fn frames_per_attempt(image: &FirmwareImage, cfg: &ProverConfig) -> usize {
    let writes: usize = image
        .chunks(cfg.chunk_words)
        .iter()
        .map(|c| if cfg.reader_split { c.words.len() } else { 1 })
        .sum();
    2 + writes + 1
}
