//! Reader-to-token link with an optional active adversary.
//!
//! Command-level tampering re-encodes frames with a fresh CRC, so the token
//! sees well-formed but altered commands. Raw flips leave the CRC alone.

use crate::bch::BchParams;
use crate::gen2::{self, CommandView, Gen2Frame};

use super::{Endpoint, LinkFault, Reply};

/// Frame indices count from the start of each update attempt: 0 is
/// TagPrivilege, 1 Authenticate, then the image chunks, then SecureComm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tamper {
    None,
    /// Flip one data bit of the `chunk`-th BlockWrite.
    FlipChunkBit { chunk: usize, bit: usize },
    /// Flip helper-data bits in the Authenticate reply.
    FlipHelperBits(Vec<usize>),
    /// Shift one block's helper so the prover lands on a neighbouring response.
    ShiftHelper { block: usize, position: usize },
    FlipNonceBit(u8),
    XorChallenge(u8),
    /// Flip a bit of the SecureComm ciphertext.
    FlipMacBit(usize),
    /// Flip a raw frame bit without fixing the CRC.
    FlipRawBit { frame: usize, bit: usize },
    Drop { frame: usize },
    /// Deliver a recorded frame just before frame `before`.
    Inject { frame: Gen2Frame, before: usize },
    /// Deliver a recorded frame in place of frame `at`.
    Replace { frame: Gen2Frame, at: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelLog {
    pub sent: Gen2Frame,
    /// What actually reached the token, injected frames included.
    pub delivered: Vec<Gen2Frame>,
    pub reply: Result<Reply, LinkFault>,
}

pub struct Channel<E> {
    pub inner: E,
    pub tamper: Tamper,
    /// Needed to shape helper shifts.
    pub code: BchParams,
    pub log: Vec<ChannelLog>,
    frame_index: usize,
    chunk_index: usize,
}

impl<E: Endpoint> Channel<E> {
    pub fn new(inner: E, tamper: Tamper, code: BchParams) -> Self {
        Channel {
            inner,
            tamper,
            code,
            log: Vec::new(),
            frame_index: 0,
            chunk_index: 0,
        }
    }

    fn reencode(frame: &Gen2Frame, f: impl FnOnce(&mut CommandView)) -> Gen2Frame {
        match gen2::decode(frame) {
            Ok((mut cmd, rn)) => {
                f(&mut cmd);
                gen2::encode(&cmd, rn).unwrap_or_else(|_| frame.clone())
            }
            Err(_) => frame.clone(),
        }
    }

    fn outbound(&mut self, frame: &Gen2Frame) -> Option<Gen2Frame> {
        let idx = self.frame_index;
        let is_chunk = matches!(gen2::decode(frame), Ok((CommandView::BlockWrite { .. }, _)));
        let chunk = self.chunk_index;
        if is_chunk {
            self.chunk_index += 1;
        }
        match &self.tamper {
            Tamper::Drop { frame: k } if *k == idx => None,
            Tamper::FlipRawBit { frame: k, bit } if *k == idx => {
                let mut f = frame.clone();
                let b = bit % f.len();
                f.bits.flip(b);
                Some(f)
            }
            Tamper::Replace { frame: recorded, at } if *at == idx => Some(recorded.clone()),
            Tamper::FlipChunkBit { chunk: k, bit } if is_chunk && *k == chunk => Some(Self::reencode(frame, |cmd| {
                if let CommandView::BlockWrite { words, .. } = cmd {
                    let b = bit % (words.len() * 16);
                    words[b / 16] ^= 1 << (b % 16);
                }
            })),
            Tamper::FlipMacBit(bit) => Some(Self::reencode(frame, |cmd| {
                if let CommandView::SecureComm { ciphertext, .. } = cmd {
                    let b = bit % 128;
                    ciphertext[b / 8] ^= 1 << (b % 8);
                }
            })),
            _ => Some(frame.clone()),
        }
    }

    fn inbound(&self, reply: Reply) -> Reply {
        let Reply::AuthData {
            mut nonce,
            mut challenge,
            mut helper,
        } = reply
        else {
            return reply;
        };
        match &self.tamper {
            Tamper::FlipHelperBits(bits) => {
                for &b in bits {
                    let b = b % helper.syndromes.len();
                    helper.syndromes.flip(b);
                }
            }
            Tamper::ShiftHelper { block, position } => {
                let p = self.code.parity_len();
                let shift = self.code.syndrome_word(1u64 << (position % self.code.n));
                let base = (block % (helper.syndromes.len() / p)) * p;
                for i in 0..p {
                    if (shift >> i) & 1 == 1 {
                        helper.syndromes.flip(base + i);
                    }
                }
            }
            Tamper::FlipNonceBit(b) => nonce ^= 1u128 << (b % 128),
            Tamper::XorChallenge(x) => challenge ^= x,
            _ => {}
        }
        Reply::AuthData {
            nonce,
            challenge,
            helper,
        }
    }
}

impl<E: Endpoint> Endpoint for Channel<E> {
    fn begin_session(&mut self) {
        self.frame_index = 0;
        self.chunk_index = 0;
        self.inner.begin_session();
    }

    fn transact(&mut self, frame: &Gen2Frame) -> Result<Reply, LinkFault> {
        let mut delivered = Vec::new();
        if let Tamper::Inject { frame: extra, before } = &self.tamper {
            if *before == self.frame_index {
                // the adversary swallows the token's answer to its own frame
                let _ = self.inner.transact(extra);
                delivered.push(extra.clone());
            }
        }
        let out = self.outbound(frame);
        self.frame_index += 1;
        let reply = match out {
            Some(f) => {
                let r = self.inner.transact(&f);
                delivered.push(f);
                r.map(|r| self.inbound(r))
            }
            None => Err(LinkFault::Timeout),
        };
        self.log.push(ChannelLog {
            sent: frame.clone(),
            delivered,
            reply: reply.clone(),
        });
        reply
    }
}

/// Families of [`Tamper`] drawn at random per session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TamperPolicy {
    None,
    Chunk,
    Helper,
    Nonce,
    Challenge,
    Mac,
    Raw,
    Drop,
    Inject,
    Replay,
    /// Any of the above except `None`.
    Random,
}

impl TamperPolicy {
    pub const ACTIVE: [TamperPolicy; 9] = [
        TamperPolicy::Chunk,
        TamperPolicy::Helper,
        TamperPolicy::Nonce,
        TamperPolicy::Challenge,
        TamperPolicy::Mac,
        TamperPolicy::Raw,
        TamperPolicy::Drop,
        TamperPolicy::Inject,
        TamperPolicy::Replay,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TamperPolicy::None => "none",
            TamperPolicy::Chunk => "chunk",
            TamperPolicy::Helper => "helper",
            TamperPolicy::Nonce => "nonce",
            TamperPolicy::Challenge => "challenge",
            TamperPolicy::Mac => "mac",
            TamperPolicy::Raw => "raw",
            TamperPolicy::Drop => "drop",
            TamperPolicy::Inject => "inject",
            TamperPolicy::Replay => "replay",
            TamperPolicy::Random => "random",
        }
    }

    /// Draws a concrete tamper for a session of `frames` prover frames.
    /// `recorded` is the transcript of an earlier session with the same
    /// token; replays and injections are taken from it.
    pub fn draw(&self, rng: &mut impl rand::Rng, code: &BchParams, blocks: usize, frames: usize, recorded: &[Gen2Frame]) -> Tamper {
        let chunks = frames.saturating_sub(3).max(1);
        match self {
            TamperPolicy::None => Tamper::None,
            TamperPolicy::Random => {
                let p = Self::ACTIVE[rng.random_range(0..Self::ACTIVE.len())];
                p.draw(rng, code, blocks, frames, recorded)
            }
            TamperPolicy::Chunk => Tamper::FlipChunkBit {
                chunk: rng.random_range(0..chunks),
                bit: rng.random_range(0..usize::MAX),
            },
            // only shifts inside the information bits change the key
            TamperPolicy::Helper => Tamper::ShiftHelper {
                block: rng.random_range(0..blocks.max(1)),
                position: rng.random_range(code.n - code.k..code.n),
            },
            TamperPolicy::Nonce => Tamper::FlipNonceBit(rng.random()),
            TamperPolicy::Challenge => Tamper::XorChallenge(rng.random_range(1..=u8::MAX)),
            TamperPolicy::Mac => Tamper::FlipMacBit(rng.random_range(0..128)),
            TamperPolicy::Raw => Tamper::FlipRawBit {
                frame: rng.random_range(0..frames),
                bit: rng.random_range(0..usize::MAX),
            },
            TamperPolicy::Drop => Tamper::Drop {
                frame: rng.random_range(0..frames),
            },
            TamperPolicy::Inject | TamperPolicy::Replay if recorded.is_empty() => Tamper::FlipMacBit(rng.random_range(0..128)),
            TamperPolicy::Inject => Tamper::Inject {
                frame: recorded[rng.random_range(0..recorded.len())].clone(),
                before: rng.random_range(2..frames.max(3)),
            },
            // an old SecureComm in place of the fresh one
            TamperPolicy::Replay => Tamper::Replace {
                frame: recorded[recorded.len() - 1].clone(),
                at: frames - 1,
            },
        }
    }
}

impl std::str::FromStr for TamperPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        std::iter::once(TamperPolicy::None)
            .chain(Self::ACTIVE)
            .chain([TamperPolicy::Random])
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown tamper policy {s:?}"))
    }
}

impl std::fmt::Display for TamperPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
