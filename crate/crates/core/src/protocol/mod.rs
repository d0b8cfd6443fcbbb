//! Update protocol between a prover (behind the reader) and a token.

mod channel;
mod image;
mod prover;
mod sim;
mod token;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enroll::{EnrollError, EnrollmentRecord};
use crate::gen2::{Gen2Error, Gen2Frame};

pub use channel::{Channel, ChannelLog, Tamper, TamperPolicy};
pub use image::{demo_image, demo_images, Chunk, FirmwareImage, Segment};
pub use prover::{frames_per_attempt, prover_update, ProverConfig, UpdateOutcome, UpdateReport};
pub use sim::{BrownoutPlan, CommitRecord, PowerEnv, SimEvent, TokenSim};
pub use token::{
    commit_firmware, token_boot, token_handle, Effect, Handled, Mode, Nvm, Reply, TokenErrorCode, TokenState,
    Volatile, BOOTLOADER_VERSION, LEGAL_TEMP_C,
};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("token {0} is not enrolled")]
    NotEnrolled(u32),
    #[error("token {0} is already enrolled")]
    AlreadyEnrolled(u32),
    #[error("invalid firmware image: {0}")]
    InvalidImage(String),
    #[error(transparent)]
    Gen2(#[from] Gen2Error),
    #[error(transparent)]
    Enroll(#[from] EnrollError),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Json(#[from] serde_json::Error),
}

/// Why no reply came back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkFault {
    Timeout,
    /// The token lost power while handling the frame.
    Brownout,
}

/// Anything the prover can send frames to.
pub trait Endpoint {
    fn transact(&mut self, frame: &Gen2Frame) -> Result<Reply, LinkFault>;

    /// Marks the start of a new update attempt.
    fn begin_session(&mut self) {}
}

/// Prover-side enrollment database.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProverDb {
    pub tokens: BTreeMap<u32, EnrollmentRecord>,
}

impl ProverDb {
    /// Records are write-once.
    pub fn enroll(&mut self, record: EnrollmentRecord) -> Result<(), ProtocolError> {
        let id = record.device_id;
        if self.tokens.contains_key(&id) {
            return Err(ProtocolError::AlreadyEnrolled(id));
        }
        self.tokens.insert(id, record);
        Ok(())
    }

    pub fn get(&self, token_id: u32) -> Result<&EnrollmentRecord, ProtocolError> {
        self.tokens.get(&token_id).ok_or(ProtocolError::NotEnrolled(token_id))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("db serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ProtocolError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ProtocolError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProtocolError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// One frame per line as whitespace-separated hex bytes.
pub fn transcript_to_string(frames: &[Gen2Frame]) -> String {
    let mut out = String::new();
    for f in frames {
        out.push_str(&f.to_hex());
        out.push('\n');
    }
    out
}

pub fn transcript_from_str(s: &str) -> Result<Vec<Gen2Frame>, ProtocolError> {
    s.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Gen2Frame::from_hex(l).map_err(ProtocolError::from))
        .collect()
}

/// Enrolls a device and returns the prover record and the token's initial NVM.
pub fn provision(
    dev: &crate::puf::PufDevice,
    cfg: &crate::enroll::EnrollConfig,
    seed: u64,
) -> Result<(EnrollmentRecord, Nvm), ProtocolError> {
    let record = crate::enroll::enroll_device(dev, cfg, seed)?;
    let nvm = Nvm::new(record.map.clone());
    Ok((record, nvm))
}
