//! Reverse fuzzy extractor.
//!
//! The token runs the cheap half ([`fe_gen`]): it publishes the per-block
//! syndromes of its fresh response as helper data and keeps the
//! information-set bits as the session key. The prover runs the expensive
//! half ([`fe_rec`]): it corrects its enrolled reference response toward the
//! token's syndromes and extracts the same information-set bits.

use std::fmt;

use thiserror::Error;

use crate::bch::{make_code, BchError, BchParams};
use crate::bits::Bits;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FuzzyError {
    #[error("length mismatch: expected {expected} bits, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("key recovery failed in block {block}")]
    KeyRecoveryFailure { block: usize },
    #[error(transparent)]
    Code(#[from] BchError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeConfig {
    pub code: BchParams,
    pub blocks: usize,
}

impl FeConfig {
    pub fn new(code: BchParams, blocks: usize) -> Self {
        assert!(blocks > 0);
        FeConfig { code, blocks }
    }

    /// Eight parallel BCH(31,16,3) blocks: 248 response bits, 128 key bits.
    pub fn default_config() -> Self {
        FeConfig::new(make_code(31, 16, 3).expect("supported code"), 8)
    }

    /// A single BCH(7,4,1) block.
    pub fn toy() -> Self {
        FeConfig::new(make_code(7, 4, 1).expect("supported code"), 1)
    }

    pub fn response_bits(&self) -> usize {
        self.blocks * self.code.n
    }

    pub fn key_bits(&self) -> usize {
        self.blocks * self.code.k
    }

    pub fn helper_bits(&self) -> usize {
        self.blocks * self.code.parity_len()
    }

    /// The leading `response_bits()` of a longer CRP-block response.
    pub fn fit_response(&self, r: &Bits) -> Option<Bits> {
        (r.len() >= self.response_bits()).then(|| r.slice(0, self.response_bits()))
    }

    fn split_response(&self, r: &Bits) -> Result<Vec<u64>, FuzzyError> {
        if r.len() != self.response_bits() {
            return Err(FuzzyError::LengthMismatch {
                expected: self.response_bits(),
                actual: r.len(),
            });
        }
        Ok(r.chunks(self.code.n).map(|b| b.to_u64()).collect())
    }
}

/// Public helper data: concatenated per-block syndromes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HelperData {
    pub syndromes: Bits,
}

impl HelperData {
    pub fn block(&self, cfg: &FeConfig, i: usize) -> u64 {
        let p = cfg.code.parity_len();
        self.syndromes.slice(i * p, (i + 1) * p).to_u64()
    }
}

/// Session key. Deliberately not serializable: it only ever lives in
/// volatile token state or in prover memory for one session.
#[derive(Clone, PartialEq, Eq)]
pub struct SessionKey {
    pub bits: Bits,
}

impl SessionKey {
    /// The key as an AES-128 key, LSB-first byte packing.
    pub fn to_aes_key(&self) -> Option<[u8; 16]> {
        if self.bits.len() != 128 {
            return None;
        }
        let mut key = [0u8; 16];
        key.copy_from_slice(&self.bits.to_bytes_lsb());
        Some(key)
    }
}

impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SessionKey({} bits)", self.bits.len())
    }
}

/// Block-level generation on pre-split words: `(key words, syndrome words)`.
pub fn fe_gen_words(blocks: &[u64], code: &BchParams) -> (Vec<u64>, Vec<u64>) {
    blocks
        .iter()
        .map(|&w| (code.info_bits_word(w), code.syndrome_word(w)))
        .unzip()
}

/// Block-level reconstruction on pre-split words.
pub fn fe_rec_words(
    blocks: &[u64],
    syndromes: &[u64],
    code: &BchParams,
) -> Result<Vec<u64>, FuzzyError> {
    blocks
        .iter()
        .zip(syndromes)
        .enumerate()
        .map(|(i, (&w, &s))| {
            code.correct_word(w, s)
                .map(|fixed| code.info_bits_word(fixed))
                .map_err(|_| FuzzyError::KeyRecoveryFailure { block: i })
        })
        .collect()
}

fn pack(words: &[u64], width: usize) -> Bits {
    let parts: Vec<Bits> = words.iter().map(|&w| Bits::from_u64(w, width)).collect();
    Bits::concat(&parts)
}

pub fn fe_gen(r: &Bits, cfg: &FeConfig) -> Result<(SessionKey, HelperData), FuzzyError> {
    let blocks = cfg.split_response(r)?;
    let (keys, syndromes) = fe_gen_words(&blocks, &cfg.code);
    Ok((
        SessionKey {
            bits: pack(&keys, cfg.code.k),
        },
        HelperData {
            syndromes: pack(&syndromes, cfg.code.parity_len()),
        },
    ))
}

pub fn fe_rec(r_prime: &Bits, h: &HelperData, cfg: &FeConfig) -> Result<SessionKey, FuzzyError> {
    let blocks = cfg.split_response(r_prime)?;
    if h.syndromes.len() != cfg.helper_bits() {
        return Err(FuzzyError::LengthMismatch {
            expected: cfg.helper_bits(),
            actual: h.syndromes.len(),
        });
    }
    let syndromes: Vec<u64> = (0..cfg.blocks).map(|i| h.block(cfg, i)).collect();
    let keys = fe_rec_words(&blocks, &syndromes, &cfg.code)?;
    Ok(SessionKey {
        bits: pack(&keys, cfg.code.k),
    })
}

/// `P(X <= t)` for `X ~ Binomial(n, p)`, by direct summation.
pub fn binomial_cdf(t: usize, n: usize, p: f64) -> f64 {
    if t >= n {
        return 1.0;
    }
    let mut coeff = 1.0f64;
    let mut sum = 0.0f64;
    for i in 0..=t {
        if i > 0 {
            coeff *= (n - i + 1) as f64 / i as f64;
        }
        sum += coeff * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32);
    }
    sum.min(1.0)
}

/// Probability that at least one block sees more than `t` errors.
pub fn key_failure_prob(ber: f64, cfg: &FeConfig) -> f64 {
    assert!((0.0..=1.0).contains(&ber), "ber must be a probability");
    // the complement of the CDF loses precision for tiny tails
    let p_block: f64 = ((cfg.code.t + 1)..=cfg.code.n)
        .map(|i| binomial_pmf(i, cfg.code.n, ber))
        .sum();
    1.0 - (1.0 - p_block).powi(cfg.blocks as i32)
}

fn binomial_pmf(i: usize, n: usize, p: f64) -> f64 {
    let mut coeff = 1.0f64;
    for j in 1..=i {
        coeff *= (n - i + j) as f64 / j as f64;
    }
    coeff * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32)
}

/// Residual min-entropy in bits after the helper data is published.
pub fn residual_min_entropy(bias: f64, cfg: &FeConfig) -> f64 {
    assert!(bias > 0.0 && bias < 1.0, "bias must lie in (0, 1)");
    let n = cfg.code.n as f64;
    let per_block = -n * bias.max(1.0 - bias).log2() - cfg.code.parity_len() as f64;
    cfg.blocks as f64 * per_block
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bits(rng: &mut ChaCha8Rng, len: usize) -> Bits {
        (0..len).map(|_| rng.random::<bool>()).collect()
    }

    fn noisy(rng: &mut ChaCha8Rng, r: &Bits, cfg: &FeConfig, max_per_block: usize) -> Bits {
        let mut out = r.clone();
        for b in 0..cfg.blocks {
            let flips = rng.random_range(0..=max_per_block);
            let mut chosen = Vec::new();
            while chosen.len() < flips {
                let p = rng.random_range(0..cfg.code.n);
                if !chosen.contains(&p) {
                    chosen.push(p);
                    out.flip(b * cfg.code.n + p);
                }
            }
        }
        out
    }

    #[test]
    fn config_dimensions() {
        let cfg = FeConfig::default_config();
        assert_eq!(cfg.response_bits(), 248);
        assert_eq!(cfg.key_bits(), 128);
        assert_eq!(cfg.helper_bits(), 120);
    }

    #[test]
    fn toy_zero_response() {
        let cfg = FeConfig::toy();
        let (key, helper) = fe_gen(&Bits::zeros(7), &cfg).unwrap();
        assert_eq!(helper.syndromes, Bits::zeros(3));
        assert_eq!(key.bits, Bits::zeros(4));
    }

    #[test]
    fn default_lengths_and_noiseless_recovery() {
        let cfg = FeConfig::default_config();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = random_bits(&mut rng, 248);
        let (key, helper) = fe_gen(&r, &cfg).unwrap();
        assert_eq!(helper.syndromes.len(), 120);
        assert_eq!(key.bits.len(), 128);
        assert_eq!(fe_rec(&r, &helper, &cfg).unwrap(), key);
    }

    #[test]
    fn length_mismatches() {
        let cfg = FeConfig::default_config();
        assert!(matches!(
            fe_gen(&Bits::zeros(247), &cfg),
            Err(FuzzyError::LengthMismatch { expected: 248, actual: 247 })
        ));
        let h = HelperData {
            syndromes: Bits::zeros(119),
        };
        assert!(matches!(
            fe_rec(&Bits::zeros(248), &h, &cfg),
            Err(FuzzyError::LengthMismatch { expected: 120, .. })
        ));
    }

    #[test]
    fn recovers_under_bounded_noise() {
        let cfg = FeConfig::default_config();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let r = random_bits(&mut rng, 248);
            let token_view = noisy(&mut rng, &r, &cfg, 3);
            let (key, helper) = fe_gen(&token_view, &cfg).unwrap();
            assert_eq!(fe_rec(&r, &helper, &cfg).unwrap(), key);
        }
    }

    #[test]
    fn reusability_across_helper_exposures() {
        let cfg = FeConfig::default_config();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let enrolled = random_bits(&mut rng, 248);
        let mut distinct = 0;
        for _ in 0..200 {
            let r1 = noisy(&mut rng, &enrolled, &cfg, 3);
            let r2 = noisy(&mut rng, &enrolled, &cfg, 3);
            let (k1, h1) = fe_gen(&r1, &cfg).unwrap();
            let (k2, h2) = fe_gen(&r2, &cfg).unwrap();
            if h1 != h2 {
                distinct += 1;
            }
            assert_eq!(fe_rec(&enrolled, &h1, &cfg).unwrap(), k1);
            assert_eq!(fe_rec(&enrolled, &h2, &cfg).unwrap(), k2);
        }
        assert!(distinct > 150);
    }

    #[test]
    fn heavy_noise_in_one_block_fails_or_mismatches() {
        let cfg = FeConfig::default_config();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..2_000 {
            let r = random_bits(&mut rng, 248);
            let mut token_view = r.clone();
            let mut flipped = Vec::new();
            while flipped.len() < 4 {
                let p = rng.random_range(0..31);
                if !flipped.contains(&p) {
                    flipped.push(p);
                    token_view.flip(31 * 3 + p);
                }
            }
            let (key, helper) = fe_gen(&token_view, &cfg).unwrap();
            match fe_rec(&r, &helper, &cfg) {
                Err(FuzzyError::KeyRecoveryFailure { block }) => assert_eq!(block, 3),
                Ok(k) => assert_ne!(k, key),
                Err(e) => panic!("{e:?}"),
            }
        }
    }

    #[test]
    fn toy_helper_consistent_with_sixteen_responses() {
        let cfg = FeConfig::toy();
        for h in 0..8u64 {
            let consistent = (0..128u64)
                .filter(|&w| {
                    let (_, helper) = fe_gen(&Bits::from_u64(w, 7), &cfg).unwrap();
                    helper.syndromes.to_u64() == h
                })
                .count();
            assert_eq!(consistent, 16);
        }
    }

    #[test]
    fn binomial_cdf_matches_statrs() {
        use statrs::distribution::{Binomial, DiscreteCDF};
        for &(t, n, p) in &[(3usize, 31usize, 0.0094f64), (7, 63, 0.0094), (1, 7, 0.3), (0, 31, 0.5)] {
            let oracle = Binomial::new(p, n as u64).unwrap().cdf(t as u64);
            assert!((binomial_cdf(t, n, p) - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn failure_probability_reference_points() {
        let p8 = key_failure_prob(0.0094, &FeConfig::default_config());
        assert!((p8 - 0.0016).abs() <= 5e-5, "{p8}");
        let cfg63 = FeConfig::new(make_code(63, 24, 7).unwrap(), 5);
        let p5 = key_failure_prob(0.0094, &cfg63);
        assert!((p5 - 7.45e-7).abs() / 7.45e-7 <= 0.02, "{p5}");
        assert_eq!(key_failure_prob(0.0, &FeConfig::default_config()), 0.0);
    }

    #[test]
    fn complement_form_agrees_with_cdf_form() {
        let cfg = FeConfig::default_config();
        for ber in [0.001, 0.0094, 0.05, 0.2] {
            let p1 = 1.0 - binomial_cdf(3, 31, ber);
            let direct = 1.0 - (1.0 - p1).powi(8);
            assert!((direct - key_failure_prob(ber, &cfg)).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_values() {
        let cfg = FeConfig::default_config();
        assert_eq!(residual_min_entropy(0.5, &cfg), 128.0);
        let worst = residual_min_entropy(0.5374, &cfg);
        assert!(worst < 128.0);
        // -248*log2(0.501) - 120 evaluated directly
        let at_0499 = residual_min_entropy(0.4990, &cfg);
        assert!((at_0499 - 127.2851).abs() < 1e-3, "{at_0499}");
    }
}
