//! Token-side state machine: boot-time key generation, command handling
//! and the bootloader commit.

use std::ops::RangeInclusive;

use crate::enroll::{challenge_to_response, CrpBlockMap};
use crate::fuzzy::{fe_gen, FeConfig, HelperData, SessionKey};
use crate::gen2::{self, CommandView, Gen2Error, Gen2Frame, UpdateSetup};
use crate::layout;
use crate::mac;
use crate::puf::{self, mix, PufDevice};

/// Key derivation only runs inside this range.
pub const LEGAL_TEMP_C: RangeInclusive<f64> = 0.0..=40.0;
pub const BOOTLOADER_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Booting,
    KeyReady,
    FirmwareUpdate,
    UserCode,
    Halted,
}

/// SRAM-resident session state. Zeroed by every reset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Volatile {
    pub nonce: u128,
    pub challenge: u8,
    pub sk: Option<SessionKey>,
    pub helper: Option<HelperData>,
    pub otf: bool,
    pub setup: Option<UpdateSetup>,
}

impl Volatile {
    pub fn is_zeroed(&self) -> bool {
        *self == Volatile::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Nvm {
    pub firmware_update_flag: bool,
    pub app_area: Vec<u8>,
    pub download_area: Vec<u8>,
    pub crp_map: CrpBlockMap,
    pub bootloader_version: u16,
}

impl Nvm {
    pub fn new(crp_map: CrpBlockMap) -> Self {
        Nvm {
            firmware_update_flag: false,
            app_area: vec![0xFF; layout::APP_BYTES],
            download_area: vec![0xFF; layout::DOWNLOAD_BYTES],
            crp_map,
            bootloader_version: BOOTLOADER_VERSION,
        }
    }

    /// Application bytes at a placement.
    pub fn app_slice(&self, start_block: u16, len: usize) -> &[u8] {
        let at = start_block as usize * layout::APP_BLOCK_BYTES;
        &self.app_area[at..at + len]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenState {
    pub mode: Mode,
    pub volatile: Volatile,
    pub nvm: Nvm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum TokenErrorCode {
    ImageTooLarge = 1,
    StartOutOfRange = 2,
    UnsupportedMac = 3,
    NotAuthenticated = 4,
    WordptrOutOfRange = 5,
    AuthenticationFailed = 6,
    Malformed = 7,
    Sequence = 8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Ack,
    AuthData {
        nonce: u128,
        challenge: u8,
        helper: HelperData,
    },
    Error(TokenErrorCode),
}

/// What the caller must do after a handled frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Effect {
    None,
    /// The token has already reset itself.
    Reset,
    /// MAC verified: run [`commit_firmware`], then send the reply.
    Commit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Handled {
    /// `None` means the token stays silent.
    pub reply: Option<Reply>,
    pub effect: Effect,
    /// Bytes fed to the MAC while handling, for energy accounting.
    pub mac_bytes: usize,
}

impl Handled {
    fn reply(r: Reply) -> Self {
        Handled {
            reply: Some(r),
            effect: Effect::None,
            mac_bytes: 0,
        }
    }

    fn silent() -> Self {
        Handled {
            reply: None,
            effect: Effect::None,
            mac_bytes: 0,
        }
    }
}

fn bits_to_u128(bits: &crate::bits::Bits) -> u128 {
    let mut bytes = [0u8; 16];
    let packed = bits.to_bytes_lsb();
    bytes[..packed.len()].copy_from_slice(&packed);
    u128::from_le_bytes(bytes)
}

/// Power-up sequence. Outside the legal temperature range the token sets
/// the over-temperature flag and derives nothing.
pub fn token_boot(dev: &PufDevice, nvm: Nvm, temperature: f64, fe: &FeConfig, boot_seed: u64) -> TokenState {
    let mut state = TokenState {
        mode: Mode::Booting,
        volatile: Volatile::default(),
        nvm,
    };
    if !LEGAL_TEMP_C.contains(&temperature) {
        state.volatile.otf = true;
        return state;
    }
    let derived = (|| {
        let nonce = puf::trng_next_at(dev, 128, temperature, mix(boot_seed, 1)).ok()?;
        let c = puf::trng_next_at(dev, 8, temperature, mix(boot_seed, 2)).ok()?;
        let readout = puf::readout(dev, temperature, mix(boot_seed, 3)).ok()?;
        let challenge = c.bits.to_u64() as u8;
        if state.nvm.crp_map.is_empty() {
            return None;
        }
        let r = challenge_to_response(&state.nvm.crp_map, challenge, &readout.bits);
        let (sk, h) = fe_gen(&fe.fit_response(&r)?, fe).ok()?;
        Some((bits_to_u128(&nonce.bits), challenge, sk, h))
    })();
    match derived {
        Some((nonce, challenge, sk, helper)) => {
            state.volatile = Volatile {
                nonce,
                challenge,
                sk: Some(sk),
                helper: Some(helper),
                otf: false,
                setup: None,
            };
            state.mode = if state.nvm.firmware_update_flag {
                Mode::KeyReady
            } else {
                Mode::UserCode
            };
        }
        None => state.mode = Mode::Halted,
    }
    state
}

impl TokenState {
    /// Power-on reset or brownout: all volatile state is lost.
    pub fn reset(&mut self) {
        self.volatile = Volatile::default();
        self.mode = Mode::Booting;
    }

    fn auth_data(&self) -> Reply {
        Reply::AuthData {
            nonce: self.volatile.nonce,
            challenge: self.volatile.challenge,
            helper: self.volatile.helper.clone().expect("key-ready state holds helper data"),
        }
    }

    fn reject_and_reset(&mut self, code: TokenErrorCode) -> Handled {
        self.reset();
        Handled {
            reply: Some(Reply::Error(code)),
            effect: Effect::Reset,
            mac_bytes: 0,
        }
    }

    fn privilege(&mut self) -> Handled {
        self.nvm.firmware_update_flag = true;
        self.reset();
        Handled {
            reply: Some(Reply::Ack),
            effect: Effect::Reset,
            mac_bytes: 0,
        }
    }
}

fn check_setup(s: &UpdateSetup) -> Result<(), TokenErrorCode> {
    let size = s.size as usize;
    if size == 0 {
        return Err(TokenErrorCode::Malformed);
    }
    if size > layout::DOWNLOAD_BYTES {
        return Err(TokenErrorCode::ImageTooLarge);
    }
    if s.start_block as usize * layout::APP_BLOCK_BYTES + size > layout::APP_BYTES {
        return Err(TokenErrorCode::StartOutOfRange);
    }
    if s.mac_method != gen2::MAC_METHOD_CMAC {
        return Err(TokenErrorCode::UnsupportedMac);
    }
    Ok(())
}

/// Handles one reader command.
pub fn token_handle(state: &mut TokenState, frame: &Gen2Frame) -> Handled {
    let cmd = match gen2::decode(frame) {
        Ok((cmd, _rn)) => Ok(cmd),
        Err(Gen2Error::BadCrc) => return Handled::silent(),
        Err(Gen2Error::WordptrOutOfRange { .. }) => Err(TokenErrorCode::WordptrOutOfRange),
        Err(_) => Err(TokenErrorCode::Malformed),
    };
    if matches!(state.mode, Mode::Booting | Mode::Halted) {
        return Handled::silent();
    }
    let cmd = match cmd {
        Ok(c) => c,
        Err(code) => return Handled::reply(Reply::Error(code)),
    };
    match (state.mode, cmd) {
        (_, CommandView::TagPrivilege) => state.privilege(),
        (Mode::UserCode, _) => Handled::reply(Reply::Error(TokenErrorCode::NotAuthenticated)),
        (Mode::KeyReady, CommandView::Authenticate { setup: None, .. }) => Handled::reply(state.auth_data()),
        (Mode::KeyReady, CommandView::Authenticate { setup: Some(s), .. }) => match check_setup(&s) {
            Ok(()) => {
                state.nvm.download_area.fill(0xFF);
                state.volatile.setup = Some(s);
                state.mode = Mode::FirmwareUpdate;
                Handled::reply(state.auth_data())
            }
            Err(code) => state.reject_and_reset(code),
        },
        (Mode::KeyReady, _) => Handled::reply(Reply::Error(TokenErrorCode::NotAuthenticated)),
        (Mode::FirmwareUpdate, CommandView::BlockWrite { membank, wordptr, words }) => {
            if membank != gen2::MEMBANK_USER {
                return Handled::reply(Reply::Error(TokenErrorCode::WordptrOutOfRange));
            }
            let at = wordptr as usize * 2;
            for (i, w) in words.iter().enumerate() {
                state.nvm.download_area[at + 2 * i..at + 2 * i + 2].copy_from_slice(&w.to_be_bytes());
            }
            Handled::reply(Reply::Ack)
        }
        (Mode::FirmwareUpdate, CommandView::SecureComm { ciphertext, .. }) => {
            let setup = state.volatile.setup.expect("update mode holds a setup");
            let sk = state.volatile.sk.as_ref().expect("update mode holds a key");
            let size = setup.size as usize;
            let expected = mac::mac_firmware(&state.nvm.download_area[..size], state.volatile.nonce, sk);
            let received = mac::sc_decrypt(ciphertext, sk).map(mac::MacTag);
            let ok = matches!((expected, received), (Ok(s), Ok(s2)) if s.verify(&s2));
            if ok {
                Handled {
                    reply: Some(Reply::Ack),
                    effect: Effect::Commit,
                    mac_bytes: size + 16,
                }
            } else {
                let mut h = state.reject_and_reset(TokenErrorCode::AuthenticationFailed);
                h.mac_bytes = size + 16;
                h
            }
        }
        (Mode::FirmwareUpdate, CommandView::Authenticate { .. }) => Handled::reply(Reply::Error(TokenErrorCode::Sequence)),
        (Mode::Booting | Mode::Halted, _) => unreachable!("handled above"),
    }
}

/// Copies the verified download area into the application area, clears the
/// update flag and resets. With `limit`, power fails after that many bytes:
/// the flag stays set and the token resets. Returns bytes copied.
pub fn commit_firmware(state: &mut TokenState, limit: Option<usize>) -> usize {
    assert_eq!(state.mode, Mode::FirmwareUpdate, "commit outside an update session");
    let setup = state.volatile.setup.expect("update mode holds a setup");
    let size = setup.size as usize;
    let copied = limit.map_or(size, |l| l.min(size));
    let at = setup.start_block as usize * layout::APP_BLOCK_BYTES;
    let (download, app) = (&state.nvm.download_area, &mut state.nvm.app_area);
    app[at..at + copied].copy_from_slice(&download[..copied]);
    if copied == size {
        state.nvm.firmware_update_flag = false;
    }
    state.reset();
    copied
}
