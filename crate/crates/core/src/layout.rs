//! Token memory map: 2 KB SRAM and 63 KB FRAM.
//!
//! The SRAM map reserves room for initialization state and a stack guard so
//! that exactly 8,896 bits remain eligible for PUF enrollment.

use serde::Serialize;

pub const SRAM_BYTES: usize = 2048;
pub const SRAM_BITS: usize = SRAM_BYTES * 8;

pub const TRNG_START: usize = 0;
/// 64 words.
pub const TRNG_BYTES: usize = 128;
pub const STATICS_START: usize = TRNG_START + TRNG_BYTES;
pub const STATICS_BYTES: usize = 480;
pub const PUF_STATE_START: usize = STATICS_START + STATICS_BYTES;
pub const PUF_STATE_BYTES: usize = 72;
pub const PUF_START: usize = PUF_STATE_START + PUF_STATE_BYTES;
pub const PUF_BYTES: usize = 1112;
pub const PUF_END: usize = PUF_START + PUF_BYTES;
pub const STACK_GUARD_START: usize = PUF_END;
pub const STACK_GUARD_BYTES: usize = 96;
pub const STACK_START: usize = STACK_GUARD_START + STACK_GUARD_BYTES;
pub const STACK_BYTES: usize = 160;

/// Bits eligible for CRP blocks.
pub const ELIGIBLE_PUF_BITS: usize = PUF_BYTES * 8;

pub const FRAM_BYTES: usize = 63 * 1024;
pub const BOOTLOADER_START: usize = 0;
pub const BOOTLOADER_BYTES: usize = 7 * 1024;
pub const APP_START: usize = BOOTLOADER_START + BOOTLOADER_BYTES;
pub const APP_BYTES: usize = 28 * 1024;
pub const DOWNLOAD_START: usize = APP_START + APP_BYTES;
pub const DOWNLOAD_BYTES: usize = 28 * 1024;
pub const DOWNLOAD_WORDS: usize = DOWNLOAD_BYTES / 2;

/// Granularity of the Authenticate "start block" placement field.
pub const APP_BLOCK_BYTES: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Region {
    pub name: &'static str,
    pub start: usize,
    pub len: usize,
}

impl Region {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn contains(&self, addr: usize) -> bool {
        (self.start..self.end()).contains(&addr)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MemoryLayout {
    pub sram: Vec<Region>,
    pub fram: Vec<Region>,
}

impl Default for MemoryLayout {
    fn default() -> Self {
        let r = |name, start, len| Region { name, start, len };
        MemoryLayout {
            sram: vec![
                r("trng", TRNG_START, TRNG_BYTES),
                r("statics", STATICS_START, STATICS_BYTES),
                r("puf_state", PUF_STATE_START, PUF_STATE_BYTES),
                r("puf", PUF_START, PUF_BYTES),
                r("stack_guard", STACK_GUARD_START, STACK_GUARD_BYTES),
                r("stack", STACK_START, STACK_BYTES),
            ],
            fram: vec![
                r("bootloader", BOOTLOADER_START, BOOTLOADER_BYTES),
                r("app", APP_START, APP_BYTES),
                r("download", DOWNLOAD_START, DOWNLOAD_BYTES),
            ],
        }
    }
}

impl MemoryLayout {
    /// True when the regions tile `[0, total)` in order without gaps.
    pub fn is_exhaustive(regions: &[Region], total: usize) -> bool {
        let mut cursor = 0;
        for r in regions {
            if r.start != cursor || r.len == 0 {
                return false;
            }
            cursor = r.end();
        }
        cursor == total
    }

    pub fn sram_region(&self, name: &str) -> Option<&Region> {
        self.sram.iter().find(|r| r.name == name)
    }

    pub fn fram_region(&self, name: &str) -> Option<&Region> {
        self.fram.iter().find(|r| r.name == name)
    }
}

/// Whether a download-area word range `[wordptr, wordptr + count)` is writable.
pub fn download_range_ok(wordptr: usize, count: usize) -> bool {
    wordptr
        .checked_add(count)
        .is_some_and(|end| end <= DOWNLOAD_WORDS)
}
