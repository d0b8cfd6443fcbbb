//! Enrollment: stable-byte screening, majority-voted references,
//! Hamming-weight de-biasing and the CRP-block map.

use std::ops::{Range, RangeInclusive};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;
use crate::layout;
use crate::puf::{self, DumpSet, PufDevice, PufError};

pub const BLOCK_BYTES: usize = 31;
pub const BLOCK_BITS: usize = BLOCK_BYTES * 8;

pub const MIN_CORNER_READOUTS: usize = 2;

pub const CORNER_TEMPS_C: [f64; 2] = [0.0, 40.0];

#[derive(Debug, Error)]
pub enum EnrollError {
    #[error("no bytes left in the eligible region")]
    EmptyRegion,
    #[error("inadequate key material: {bytes} bytes, need {needed}")]
    InsufficientMaterial { bytes: usize, needed: usize },
    #[error("temperature group {temperature} °C has {got} readouts, need {needed}")]
    TooFewReadouts { temperature: f64, got: usize, needed: usize },
    #[error("readouts do not cover byte region {0:?}")]
    RegionOutOfRange(Range<usize>),
    #[error(transparent)]
    Puf(#[from] PufError),
    #[error("record I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("record format: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrollConfig {
    /// Byte addresses eligible for selection.
    pub region: Range<usize>,
    pub corner_temps: Vec<f64>,
    pub corner_readouts: usize,
    pub nominal_readouts: usize,
    /// Tolerated minority count per bit across all corner readouts.
    pub max_corner_flips: usize,
    pub hw_window: RangeInclusive<u32>,
}

impl Default for EnrollConfig {
    fn default() -> Self {
        EnrollConfig {
            region: layout::PUF_START..layout::PUF_END,
            corner_temps: CORNER_TEMPS_C.to_vec(),
            corner_readouts: 5,
            nominal_readouts: 10,
            max_corner_flips: 0,
            hw_window: 4..=4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StableByte {
    pub address: usize,
    pub reference: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StableByteMask {
    pub bytes: Vec<StableByte>,
}

impl StableByteMask {
    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn addresses(&self) -> impl Iterator<Item = usize> + '_ {
        self.bytes.iter().map(|b| b.address)
    }

    pub fn reference_bits(&self) -> Bits {
        let bytes: Vec<u8> = self.bytes.iter().map(|b| b.reference).collect();
        Bits::from_bytes_lsb(&bytes)
    }
}

fn byte_at(bits: &Bits, address: usize) -> u8 {
    (0..8).fold(0u8, |acc, i| acc | ((bits[address * 8 + i] as u8) << i))
}

fn check_group(set: &DumpSet, t: f64, needed: usize) -> Result<Vec<&Bits>, EnrollError> {
    let group: Vec<&Bits> = set.at(t).into_iter().map(|r| &r.bits).collect();
    if group.len() < needed {
        return Err(EnrollError::TooFewReadouts {
            temperature: t,
            got: group.len(),
            needed,
        });
    }
    Ok(group)
}

pub fn pre_select(
    corners: &DumpSet,
    nominal: &DumpSet,
    cfg: &EnrollConfig,
) -> Result<StableByteMask, EnrollError> {
    let mut corner_bits = Vec::new();
    for &t in &cfg.corner_temps {
        corner_bits.extend(check_group(corners, t, MIN_CORNER_READOUTS)?);
    }
    let nominal_bits = check_group(nominal, puf::NOMINAL_TEMP_C, cfg.nominal_readouts.max(1))?;
    let needed = cfg.region.end * 8;
    if corner_bits.iter().chain(&nominal_bits).any(|b| b.len() < needed) {
        return Err(EnrollError::RegionOutOfRange(cfg.region.clone()));
    }

    let mut bytes = Vec::new();
    'byte: for address in cfg.region.clone() {
        let mut ones = [0usize; 8];
        for r in &corner_bits {
            let v = byte_at(r, address);
            for (i, o) in ones.iter_mut().enumerate() {
                *o += ((v >> i) & 1) as usize;
            }
        }
        let m = corner_bits.len();
        if ones.iter().any(|&o| o.min(m - o) > cfg.max_corner_flips) {
            continue;
        }

        let mut nominal_ones = [0usize; 8];
        for r in &nominal_bits {
            let v = byte_at(r, address);
            for (i, o) in nominal_ones.iter_mut().enumerate() {
                *o += ((v >> i) & 1) as usize;
            }
        }
        let m = nominal_bits.len();
        let mut reference = 0u8;
        for (i, &o) in nominal_ones.iter().enumerate() {
            if 2 * o == m {
                continue 'byte;
            }
            if 2 * o > m {
                reference |= 1 << i;
            }
        }
        bytes.push(StableByte { address, reference });
    }
    if bytes.is_empty() {
        return Err(EnrollError::EmptyRegion);
    }
    Ok(StableByteMask { bytes })
}

pub fn debias(mask: &StableByteMask, hw_window: &RangeInclusive<u32>) -> Result<StableByteMask, EnrollError> {
    let bytes: Vec<StableByte> = mask
        .bytes
        .iter()
        .copied()
        .filter(|b| hw_window.contains(&b.reference.count_ones()))
        .collect();
    if bytes.is_empty() {
        return Err(EnrollError::EmptyRegion);
    }
    Ok(StableByteMask { bytes })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrpBlock {
    pub start_address: usize,
    /// Byte offsets from `start_address`, ascending; the first is 0.
    pub offsets: Vec<u16>,
}

impl CrpBlock {
    pub fn addresses(&self) -> impl Iterator<Item = usize> + '_ {
        self.offsets.iter().map(|&o| self.start_address + o as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrpBlockMap {
    pub blocks: Vec<CrpBlock>,
    pub block_bytes: usize,
}

impl CrpBlockMap {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block(&self, i: usize) -> Option<&CrpBlock> {
        self.blocks.get(i)
    }

    pub fn block_index(&self, c: u8) -> usize {
        assert!(!self.blocks.is_empty(), "empty CRP-block map");
        c as usize % self.blocks.len()
    }

    pub fn available_bits(&self) -> usize {
        self.blocks.len() * self.block_bytes * 8
    }
}

/// Greedy packing of consecutive winnowed bytes into 31-byte blocks.
pub fn build_map(mask: &StableByteMask) -> Result<CrpBlockMap, EnrollError> {
    if mask.len() < BLOCK_BYTES {
        return Err(EnrollError::InsufficientMaterial {
            bytes: mask.len(),
            needed: BLOCK_BYTES,
        });
    }
    let blocks = mask
        .bytes
        .chunks_exact(BLOCK_BYTES)
        .map(|chunk| {
            let start = chunk[0].address;
            CrpBlock {
                start_address: start,
                offsets: chunk.iter().map(|b| (b.address - start) as u16).collect(),
            }
        })
        .collect();
    Ok(CrpBlockMap {
        blocks,
        block_bytes: BLOCK_BYTES,
    })
}

pub fn efficiency(map: &CrpBlockMap, eligible_bits: usize) -> f64 {
    assert!(eligible_bits > 0);
    map.available_bits() as f64 / eligible_bits as f64
}

/// Response of the block selected by challenge `c`, LSB-first per byte.
pub fn challenge_to_response(map: &CrpBlockMap, c: u8, readout: &Bits) -> Bits {
    let block = &map.blocks[map.block_index(c)];
    let bytes: Vec<u8> = block.addresses().map(|a| byte_at(readout, a)).collect();
    Bits::from_bytes_lsb(&bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrollmentMeta {
    pub corner_temps: Vec<f64>,
    pub corner_readouts: usize,
    pub nominal_readouts: usize,
    pub hw_window: RangeInclusive<u32>,
    pub stable_bytes: usize,
    pub balanced_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrollmentRecord {
    pub device_id: u32,
    pub map: CrpBlockMap,
    pub references: Vec<Bits>,
    pub meta: EnrollmentMeta,
}

impl EnrollmentRecord {
    pub fn from_mask(device_id: u32, mask: &StableByteMask, map: CrpBlockMap, meta: EnrollmentMeta) -> Self {
        let refs = mask.reference_bits();
        let references = (0..map.len())
            .map(|i| refs.slice(i * BLOCK_BITS, (i + 1) * BLOCK_BITS))
            .collect();
        EnrollmentRecord {
            device_id,
            map,
            references,
            meta,
        }
    }

    pub fn reference(&self, c: u8) -> &Bits {
        &self.references[self.map.block_index(c)]
    }

    pub fn efficiency(&self) -> f64 {
        efficiency(&self.map, layout::ELIGIBLE_PUF_BITS)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, EnrollError> {
        let rec: EnrollmentRecord = serde_json::from_str(s)?;
        if rec.references.len() != rec.map.len() || rec.references.iter().any(|r| r.len() != BLOCK_BITS) {
            return Err(EnrollError::InsufficientMaterial {
                bytes: rec.references.len(),
                needed: rec.map.len(),
            });
        }
        Ok(rec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EnrollError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnrollError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Runs the whole pipeline on recorded readouts.
pub fn enroll_dumps(
    device_id: u32,
    corners: &DumpSet,
    nominal: &DumpSet,
    cfg: &EnrollConfig,
) -> Result<EnrollmentRecord, EnrollError> {
    let stable = pre_select(corners, nominal, cfg)?;
    let balanced = debias(&stable, &cfg.hw_window)?;
    let map = build_map(&balanced)?;
    let meta = EnrollmentMeta {
        corner_temps: cfg.corner_temps.clone(),
        corner_readouts: cfg.corner_readouts,
        nominal_readouts: cfg.nominal_readouts,
        hw_window: cfg.hw_window.clone(),
        stable_bytes: stable.len(),
        balanced_bytes: balanced.len(),
    };
    Ok(EnrollmentRecord::from_mask(device_id, &balanced, map, meta))
}

/// Captures corner and nominal readouts from a device and enrolls it.
pub fn enroll_device(dev: &PufDevice, cfg: &EnrollConfig, seed: u64) -> Result<EnrollmentRecord, EnrollError> {
    let corners = DumpSet::capture(dev, &cfg.corner_temps, cfg.corner_readouts, puf::mix(seed, 1))?;
    let nominal = DumpSet::capture(dev, &[puf::NOMINAL_TEMP_C], cfg.nominal_readouts, puf::mix(seed, 2))?;
    enroll_dumps(dev.device_id, &corners, &nominal, cfg)
}

/// Mean fractional distance of every enrolled block's fresh response from
/// its reference, over the given readouts.
pub fn enrolled_ber(record: &EnrollmentRecord, readouts: &[Bits]) -> f64 {
    assert!(!readouts.is_empty() && !record.map.is_empty());
    let mut flips = 0usize;
    for r in readouts {
        for c in 0..record.map.len() {
            let resp = challenge_to_response(&record.map, c as u8, r);
            flips += resp.hamming_distance(&record.references[c]);
        }
    }
    flips as f64 / (readouts.len() * record.map.len() * BLOCK_BITS) as f64
}
