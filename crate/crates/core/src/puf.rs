//! Simulated SRAM PUF.
//!
//! Each cell has a nominal probability of powering up as `1`. Temperature
//! moves every cell toward a coin flip: the minority-state probability is
//! multiplied by a piecewise-linear scale factor that equals 1 at 25 °C.
//! Readouts are deterministic functions of the device seed and a trial seed.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bits::Bits;
use crate::layout;

pub const TEMP_MIN_C: f64 = -15.0;
pub const TEMP_MAX_C: f64 = 80.0;
pub const NOMINAL_TEMP_C: f64 = 25.0;

pub const DEFAULT_TRNG_FOLD: usize = 16;
pub const MAX_TRNG_BITS: usize = 128;

#[derive(Debug, Error)]
pub enum PufError {
    #[error("fraction {name} = {value} is outside [0, 1]")]
    InvalidFraction { name: &'static str, value: f64 },
    #[error("temperature {0} °C outside the modeled range")]
    TemperatureOutOfRange(f64),
    #[error("length mismatch: expected {expected} bits, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("no trials supplied")]
    EmptyTrials,
    #[error("no readouts supplied")]
    EmptyInput,
    #[error("TRNG region cannot supply {requested} bits")]
    InsufficientEntropyRegion { requested: usize },
    #[error("malformed dump file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Piecewise-linear error-probability scale versus temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct TempNoiseModel {
    points: Vec<(f64, f64)>,
}

impl Default for TempNoiseModel {
    fn default() -> Self {
        TempNoiseModel {
            points: vec![(-15.0, 6.0), (0.0, 3.0), (25.0, 1.0), (40.0, 3.0), (80.0, 8.0)],
        }
    }
}

impl TempNoiseModel {
    /// Points must be sorted by temperature and cover [-15, 80] °C.
    pub fn new(points: Vec<(f64, f64)>) -> Self {
        assert!(points.len() >= 2);
        assert!(points.windows(2).all(|w| w[0].0 < w[1].0));
        TempNoiseModel { points }
    }

    pub fn scale(&self, temp_c: f64) -> f64 {
        let pts = &self.points;
        if temp_c <= pts[0].0 {
            return pts[0].1;
        }
        for w in pts.windows(2) {
            let ((t0, s0), (t1, s1)) = (w[0], w[1]);
            if temp_c <= t1 {
                return s0 + (s1 - s0) * (temp_c - t0) / (t1 - t0);
            }
        }
        pts[pts.len() - 1].1
    }
}

#[derive(Debug, Clone)]
pub struct PufDevice {
    pub device_id: u32,
    pub cell_one_prob: Vec<f32>,
    pub temp_noise_model: TempNoiseModel,
    pub rng_seed: u64,
    pub trng_fold: usize,
}

/// Synthesis knobs for [`synth_device_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub device_id: u32,
    pub num_cells: usize,
    /// Share of cells with a strong power-up preference.
    pub stable_frac: f64,
    /// Minority-state probability of a stable cell at 25 °C.
    pub noisy_epsilon: f64,
    /// Share of stable cells preferring `1`.
    pub bias: f64,
    pub seed: u64,
    /// Draw the TRNG region from the noisy cell class.
    pub trng_region_noisy: bool,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            device_id: 0,
            num_cells: layout::SRAM_BITS,
            stable_frac: 0.93,
            noisy_epsilon: 0.002,
            bias: 0.5,
            seed: 0,
            trng_region_noisy: true,
        }
    }
}

impl SynthParams {
    pub fn with_seed(seed: u64) -> Self {
        SynthParams {
            device_id: seed as u32,
            seed,
            ..SynthParams::default()
        }
    }
}

fn check_fraction(name: &'static str, value: f64) -> Result<(), PufError> {
    if !(0.0..=1.0).contains(&value) || value.is_nan() {
        return Err(PufError::InvalidFraction { name, value });
    }
    Ok(())
}

/// Builds a synthetic device. A noiseless configuration (`stable_frac = 1`,
/// `noisy_epsilon = 0`) is noiseless everywhere, including the TRNG region.
pub fn synth_device(
    num_cells: usize,
    stable_frac: f64,
    noisy_epsilon: f64,
    bias: f64,
    seed: u64,
) -> Result<PufDevice, PufError> {
    synth_device_with(&SynthParams {
        device_id: seed as u32,
        num_cells,
        stable_frac,
        noisy_epsilon,
        bias,
        seed,
        trng_region_noisy: !(stable_frac == 1.0 && noisy_epsilon == 0.0),
    })
}

pub fn synth_device_with(p: &SynthParams) -> Result<PufDevice, PufError> {
    check_fraction("stable_frac", p.stable_frac)?;
    check_fraction("noisy_epsilon", p.noisy_epsilon)?;
    check_fraction("bias", p.bias)?;
    assert!(p.num_cells > 0, "device needs at least one cell");

    let mut rng = ChaCha8Rng::seed_from_u64(mix(p.seed, 0x5eed_5eed));
    let trng_cells = if p.trng_region_noisy {
        (layout::TRNG_BYTES * 8).min(p.num_cells)
    } else {
        0
    };
    let eps = p.noisy_epsilon as f32;
    let cell_one_prob = (0..p.num_cells)
        .map(|i| {
            let stable = i >= trng_cells && rng.random::<f64>() < p.stable_frac;
            let one = rng.random::<f64>() < p.bias;
            let uniform = rng.random::<f32>();
            if stable {
                if one {
                    1.0 - eps
                } else {
                    eps
                }
            } else {
                uniform
            }
        })
        .collect();
    Ok(PufDevice {
        device_id: p.device_id,
        cell_one_prob,
        temp_noise_model: TempNoiseModel::default(),
        rng_seed: p.seed,
        trng_fold: DEFAULT_TRNG_FOLD,
    })
}

/// SplitMix64-style seed combiner.
pub(crate) fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub bits: Bits,
    pub temperature: f64,
}

impl PufDevice {
    pub fn from_probs(device_id: u32, cell_one_prob: Vec<f32>, rng_seed: u64) -> Self {
        assert!(!cell_one_prob.is_empty());
        assert!(cell_one_prob.iter().all(|p| (0.0..=1.0).contains(p)));
        PufDevice {
            device_id,
            cell_one_prob,
            temp_noise_model: TempNoiseModel::default(),
            rng_seed,
            trng_fold: DEFAULT_TRNG_FOLD,
        }
    }

    pub fn num_cells(&self) -> usize {
        self.cell_one_prob.len()
    }

    /// Power-up probability of `cell` at `temp_c`.
    pub fn one_prob_at(&self, cell: usize, temp_c: f64) -> f32 {
        adjust(self.cell_one_prob[cell], self.temp_noise_model.scale(temp_c) as f32)
    }

    fn sample(&self, temp_c: f64, stream: u64, cells: usize) -> Result<Bits, PufError> {
        if !(TEMP_MIN_C..=TEMP_MAX_C).contains(&temp_c) {
            return Err(PufError::TemperatureOutOfRange(temp_c));
        }
        let scale = self.temp_noise_model.scale(temp_c) as f32;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.rng_seed, stream));
        Ok(self.cell_one_prob[..cells]
            .iter()
            .map(|&p| rng.random::<f32>() < adjust(p, scale))
            .collect())
    }
}

fn adjust(p: f32, scale: f32) -> f32 {
    let minority = (p.min(1.0 - p) * scale).min(0.5);
    if p < 0.5 {
        minority
    } else {
        1.0 - minority
    }
}

/// Full-array power-up readout.
pub fn readout(dev: &PufDevice, temperature: f64, trial_seed: u64) -> Result<Readout, PufError> {
    Ok(Readout {
        bits: dev.sample(temperature, trial_seed, dev.num_cells())?,
        temperature,
    })
}

/// Mean fractional Hamming distance of trials from a reference.
pub fn ber(reference: &Bits, trials: &[Bits]) -> Result<f64, PufError> {
    if trials.is_empty() {
        return Err(PufError::EmptyTrials);
    }
    let mut total = 0.0;
    for t in trials {
        if t.len() != reference.len() {
            return Err(PufError::LengthMismatch {
                expected: reference.len(),
                actual: t.len(),
            });
        }
        total += reference.hamming_distance(t) as f64 / reference.len() as f64;
    }
    Ok(total / trials.len() as f64)
}

/// Pooled fraction of ones.
pub fn bias(readouts: &[Bits]) -> Result<f64, PufError> {
    let total: usize = readouts.iter().map(Bits::len).sum();
    if total == 0 {
        return Err(PufError::EmptyInput);
    }
    let ones: usize = readouts.iter().map(Bits::count_ones).sum();
    Ok(ones as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrngSample {
    pub bits: Bits,
    /// Designated cells that are not fully deterministic; zero marks a
    /// degenerate source whose output is constant.
    pub noisy_cells: usize,
}

impl TrngSample {
    pub fn is_degenerate(&self) -> bool {
        self.noisy_cells == 0
    }

    pub fn to_u64(&self) -> u64 {
        self.bits.to_u64()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.bits.to_bytes_lsb()
    }
}

pub fn trng_next(dev: &PufDevice, nbits: usize, trial_seed: u64) -> Result<TrngSample, PufError> {
    trng_next_at(dev, nbits, NOMINAL_TEMP_C, trial_seed)
}

/// XOR-folds groups of `trng_fold` TRNG-region cells. The region supplies
/// `cells / fold` bits per power-up; longer requests take further fresh
/// power-ups of the region.
pub fn trng_next_at(
    dev: &PufDevice,
    nbits: usize,
    temperature: f64,
    trial_seed: u64,
) -> Result<TrngSample, PufError> {
    let region = (layout::TRNG_BYTES * 8).min(dev.num_cells());
    let fold = dev.trng_fold;
    let per_readout = region / fold.max(1);
    if nbits > MAX_TRNG_BITS || fold == 0 || per_readout == 0 {
        return Err(PufError::InsufficientEntropyRegion { requested: nbits });
    }
    let mut bits = Bits::new();
    let mut r = 0u64;
    while bits.len() < nbits {
        let fresh = dev.sample(temperature, mix(trial_seed, 0x7124_0000 + r), region)?;
        for g in 0..per_readout {
            if bits.len() == nbits {
                break;
            }
            let x = (0..fold).fold(false, |acc, i| acc ^ fresh[g * fold + i]);
            bits.push(x);
        }
        r += 1;
    }
    let noisy_cells = (0..region)
        .filter(|&c| {
            let p = dev.one_prob_at(c, temperature);
            p > 0.0 && p < 1.0
        })
        .count();
    Ok(TrngSample { bits, noisy_cells })
}

/// Recorded readouts of one device.
#[derive(Debug, Clone, PartialEq)]
pub struct DumpSet {
    pub device_id: u32,
    pub readouts: Vec<Readout>,
}

const DUMP_MAGIC: &[u8; 4] = b"SPUF";
const DUMP_VERSION: u8 = 1;

fn to_centi(temp: f64) -> i16 {
    (temp * 100.0).round() as i16
}

impl DumpSet {
    /// Takes `count` readouts at each temperature with consecutive trial seeds.
    pub fn capture(
        dev: &PufDevice,
        temperatures: &[f64],
        count: usize,
        seed: u64,
    ) -> Result<DumpSet, PufError> {
        let mut readouts = Vec::with_capacity(temperatures.len() * count);
        for (ti, &t) in temperatures.iter().enumerate() {
            for i in 0..count {
                readouts.push(readout(dev, t, mix(seed, ((ti as u64) << 32) | i as u64))?);
            }
        }
        Ok(DumpSet {
            device_id: dev.device_id,
            readouts,
        })
    }

    /// Distinct temperatures in first-seen order.
    pub fn temperatures(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.readouts {
            if !out.iter().any(|&t| to_centi(t) == to_centi(r.temperature)) {
                out.push(r.temperature);
            }
        }
        out
    }

    pub fn at(&self, temperature: f64) -> Vec<&Readout> {
        self.readouts
            .iter()
            .filter(|r| to_centi(r.temperature) == to_centi(temperature))
            .collect()
    }

    pub fn cell_count(&self) -> usize {
        self.readouts.first().map_or(0, |r| r.bits.len())
    }

    pub fn validate(&self) -> Result<(), PufError> {
        let n = self.cell_count();
        if self.readouts.is_empty() {
            return Err(PufError::EmptyInput);
        }
        for r in &self.readouts {
            if r.bits.len() != n {
                return Err(PufError::LengthMismatch {
                    expected: n,
                    actual: r.bits.len(),
                });
            }
        }
        Ok(())
    }

    /// Binary dump format: `SPUF`, version u8, device id u32, cell count
    /// u32, readout count u16, then per readout a signed centi-degree i16
    /// and the LSB-first packed bits. Integers are little-endian.
    pub fn write_to(&self, mut w: impl Write) -> Result<(), PufError> {
        self.validate()?;
        if self.readouts.len() > u16::MAX as usize {
            return Err(PufError::Format("too many readouts".into()));
        }
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&[DUMP_VERSION])?;
        w.write_all(&self.device_id.to_le_bytes())?;
        w.write_all(&(self.cell_count() as u32).to_le_bytes())?;
        w.write_all(&(self.readouts.len() as u16).to_le_bytes())?;
        for r in &self.readouts {
            w.write_all(&to_centi(r.temperature).to_le_bytes())?;
            w.write_all(&r.bits.to_bytes_lsb())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<DumpSet, PufError> {
        let mut header = [0u8; 15];
        r.read_exact(&mut header)
            .map_err(|_| PufError::Format("truncated header".into()))?;
        if &header[..4] != DUMP_MAGIC {
            return Err(PufError::Format("bad magic".into()));
        }
        if header[4] != DUMP_VERSION {
            return Err(PufError::Format(format!("unsupported version {}", header[4])));
        }
        let device_id = u32::from_le_bytes(header[5..9].try_into().unwrap());
        let cells = u32::from_le_bytes(header[9..13].try_into().unwrap()) as usize;
        let count = u16::from_le_bytes(header[13..15].try_into().unwrap()) as usize;
        if cells == 0 || count == 0 {
            return Err(PufError::EmptyInput);
        }
        let mut readouts = Vec::with_capacity(count);
        let mut buf = vec![0u8; cells.div_ceil(8)];
        for _ in 0..count {
            let mut t = [0u8; 2];
            r.read_exact(&mut t)
                .map_err(|_| PufError::Format("truncated readout".into()))?;
            r.read_exact(&mut buf)
                .map_err(|_| PufError::Format("truncated readout".into()))?;
            let mut bits = Bits::from_bytes_lsb(&buf);
            let bits_vec: Vec<bool> = bits.iter().take(cells).collect();
            bits = Bits::from_bools(bits_vec);
            readouts.push(Readout {
                bits,
                temperature: i16::from_le_bytes(t) as f64 / 100.0,
            });
        }
        Ok(DumpSet { device_id, readouts })
    }
}
