//! Binary BCH codes over GF(2^m) for the syndrome-based secure sketch.
//!
//! Words of length `n <= 63` are handled as `u64` masks where bit `i` is the
//! coefficient of `x^i`. The syndrome is the remainder `r(x) mod g(x)`, which is
//! linear and vanishes exactly on codewords. Encoding is systematic: the
//! message sits in coefficients `n-k..n` and the parity in `0..n-k`.

use thiserror::Error;

use crate::bits::Bits;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BchError {
    #[error("unsupported BCH parameters ({n},{k},{t})")]
    UnsupportedParameters { n: usize, k: usize, t: usize },
    #[error("length mismatch: expected {expected} bits, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("no word within distance t has the requested syndrome")]
    DecodeFailure,
}

/// Arithmetic tables for GF(2^m).
#[derive(Debug, Clone, PartialEq, Eq)]
struct Field {
    order: usize,
    exp: Vec<u16>,
    log: Vec<u16>,
}

impl Field {
    fn new(m: u32, poly: u32) -> Field {
        let order = (1usize << m) - 1;
        let mut exp = vec![0u16; 2 * order];
        let mut log = vec![0u16; order + 1];
        let mut x: u32 = 1;
        for i in 0..order {
            exp[i] = x as u16;
            log[x as usize] = i as u16;
            x <<= 1;
            if x & (1 << m) != 0 {
                x ^= poly;
            }
        }
        assert_eq!(x, 1, "field polynomial is not primitive");
        for i in order..2 * order {
            exp[i] = exp[i - order];
        }
        Field { order, exp, log }
    }

    fn mul(&self, a: u16, b: u16) -> u16 {
        if a == 0 || b == 0 {
            return 0;
        }
        self.exp[self.log[a as usize] as usize + self.log[b as usize] as usize]
    }

    fn div(&self, a: u16, b: u16) -> u16 {
        assert!(b != 0);
        if a == 0 {
            return 0;
        }
        let e = self.log[a as usize] as usize + self.order - self.log[b as usize] as usize;
        self.exp[e % self.order]
    }

    fn alpha_pow(&self, e: usize) -> u16 {
        self.exp[e % self.order]
    }

    /// Evaluates a binary polynomial (bitmask) at `alpha^e`.
    fn eval_binary(&self, poly: u64, e: usize) -> u16 {
        let mut acc = 0u16;
        let mut p = poly;
        while p != 0 {
            let i = p.trailing_zeros() as usize;
            acc ^= self.alpha_pow(i * e);
            p &= p - 1;
        }
        acc
    }

    /// Minimal polynomial of `alpha^j` over GF(2), as a bitmask.
    fn minimal_poly(&self, j: usize) -> u64 {
        let mut coset = Vec::new();
        let mut c = j % self.order;
        loop {
            if coset.contains(&c) {
                break;
            }
            coset.push(c);
            c = (c * 2) % self.order;
        }
        // product of (x + alpha^c) with coefficients in GF(2^m), lowest degree first
        let mut poly: Vec<u16> = vec![1];
        for &c in &coset {
            let root = self.alpha_pow(c);
            let mut next = vec![0u16; poly.len() + 1];
            for (i, &coef) in poly.iter().enumerate() {
                next[i + 1] ^= coef;
                next[i] ^= self.mul(coef, root);
            }
            poly = next;
        }
        poly.iter().enumerate().fold(0u64, |acc, (i, &coef)| {
            assert!(coef <= 1, "minimal polynomial must be binary");
            acc | ((coef as u64) << i)
        })
    }
}

fn degree(poly: u64) -> usize {
    assert!(poly != 0);
    63 - poly.leading_zeros() as usize
}

fn clmul(a: u64, b: u64) -> u64 {
    let mut out = 0u64;
    let mut b = b;
    while b != 0 {
        let i = b.trailing_zeros();
        out ^= a << i;
        b &= b - 1;
    }
    out
}

/// Remainder of `a(x)` divided by `g(x)` over GF(2).
pub(crate) fn poly_mod(mut a: u64, g: u64) -> u64 {
    let dg = degree(g);
    while a != 0 && degree(a) >= dg {
        a ^= g << (degree(a) - dg);
    }
    a
}

/// A fully populated BCH(n, k, t) code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BchParams {
    pub n: usize,
    pub k: usize,
    pub t: usize,
    pub m: u32,
    pub field_poly: u32,
    pub generator_poly: u64,
    pub info_positions: Vec<usize>,
    field: Field,
}

/// Parity-check residue of a word, `n - k` bits in ascending coefficient order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Syndrome {
    pub bits: Bits,
}

impl Syndrome {
    pub fn zero(code: &BchParams) -> Syndrome {
        Syndrome {
            bits: Bits::zeros(code.parity_len()),
        }
    }
}

/// Builds one of the supported codes: (7,4,1), (31,16,3) or (63,24,7).
pub fn make_code(n: usize, k: usize, t: usize) -> Result<BchParams, BchError> {
    let (m, field_poly) = match (n, k, t) {
        (7, 4, 1) => (3, 0b1011),
        (31, 16, 3) => (5, 0b100101),
        (63, 24, 7) => (6, 0b1000011),
        _ => return Err(BchError::UnsupportedParameters { n, k, t }),
    };
    let field = Field::new(m, field_poly);

    let mut seen: Vec<u64> = Vec::new();
    let mut generator = 1u64;
    for j in 1..=2 * t {
        let mp = field.minimal_poly(j);
        if !seen.contains(&mp) {
            seen.push(mp);
            generator = clmul(generator, mp);
        }
    }
    debug_assert_eq!(degree(generator), n - k);

    Ok(BchParams {
        n,
        k,
        t,
        m,
        field_poly,
        generator_poly: generator,
        info_positions: (n - k..n).collect(),
        field,
    })
}

impl BchParams {
    pub fn parity_len(&self) -> usize {
        self.n - self.k
    }

    fn word_mask(&self) -> u64 {
        (1u64 << self.n) - 1
    }

    /// Syndrome of a word given as a bitmask.
    pub fn syndrome_word(&self, word: u64) -> u64 {
        debug_assert_eq!(word & !self.word_mask(), 0);
        poly_mod(word, self.generator_poly)
    }

    pub fn syndrome(&self, word: &Bits) -> Result<Syndrome, BchError> {
        self.check_len(word.len(), self.n)?;
        Ok(Syndrome {
            bits: Bits::from_u64(self.syndrome_word(word.to_u64()), self.parity_len()),
        })
    }

    /// Systematic encoding of a `k`-bit message.
    pub fn encode_word(&self, message: u64) -> u64 {
        assert!(message < (1u64 << self.k));
        let shifted = message << self.parity_len();
        shifted | poly_mod(shifted, self.generator_poly)
    }

    pub fn encode(&self, message: &Bits) -> Result<Bits, BchError> {
        self.check_len(message.len(), self.k)?;
        Ok(Bits::from_u64(self.encode_word(message.to_u64()), self.n))
    }

    /// The information-set coordinates of a word, packed in order.
    pub fn info_bits_word(&self, word: u64) -> u64 {
        word >> self.parity_len()
    }

    /// Finds `w` with `syndrome(w) == target` and `HD(word, w) <= t`.
    pub fn correct_word(&self, word: u64, target: u64) -> Result<u64, BchError> {
        let residual = self.syndrome_word(word) ^ target;
        if residual == 0 {
            return Ok(word);
        }
        // `residual` and the sought error pattern lie in the same coset, so
        // decoding `residual` as a noisy codeword yields the error pattern.
        let error = self.locate_errors(residual)?;
        let fixed = word ^ error;
        if error.count_ones() as usize > self.t || self.syndrome_word(fixed) != target {
            return Err(BchError::DecodeFailure);
        }
        Ok(fixed)
    }

    pub fn correct(&self, word: &Bits, target: &Syndrome) -> Result<Bits, BchError> {
        self.check_len(word.len(), self.n)?;
        self.check_len(target.bits.len(), self.parity_len())?;
        let fixed = self.correct_word(word.to_u64(), target.bits.to_u64())?;
        Ok(Bits::from_u64(fixed, self.n))
    }

    /// Berlekamp-Massey on the power-sum syndromes followed by an exhaustive
    /// root search over all `n` positions.
    fn locate_errors(&self, received: u64) -> Result<u64, BchError> {
        let f = &self.field;
        let two_t = 2 * self.t;
        let s: Vec<u16> = (1..=two_t).map(|j| f.eval_binary(received, j)).collect();

        let mut c: Vec<u16> = vec![1];
        let mut b: Vec<u16> = vec![1];
        let mut l = 0usize;
        let mut shift = 1usize;
        let mut last_d = 1u16;
        for r in 0..two_t {
            let mut d = s[r];
            for i in 1..=l.min(c.len() - 1) {
                d ^= f.mul(c[i], s[r - i]);
            }
            if d == 0 {
                shift += 1;
                continue;
            }
            let coef = f.div(d, last_d);
            let mut next = c.clone();
            if next.len() < b.len() + shift {
                next.resize(b.len() + shift, 0);
            }
            for (i, &bi) in b.iter().enumerate() {
                next[i + shift] ^= f.mul(coef, bi);
            }
            if 2 * l <= r {
                b = c;
                l = r + 1 - l;
                last_d = d;
                shift = 1;
            } else {
                shift += 1;
            }
            c = next;
        }
        while c.len() > 1 && *c.last().unwrap() == 0 {
            c.pop();
        }
        if l > self.t || c.len() - 1 != l {
            return Err(BchError::DecodeFailure);
        }

        let mut error = 0u64;
        let mut roots = 0usize;
        for pos in 0..self.n {
            // locator roots are the inverses alpha^{-pos} of the error locations
            let inv = (f.order - pos % f.order) % f.order;
            let mut acc = 0u16;
            for (i, &ci) in c.iter().enumerate() {
                acc ^= f.mul(ci, f.alpha_pow(i * inv));
            }
            if acc == 0 {
                error |= 1u64 << pos;
                roots += 1;
            }
        }
        if roots != l {
            return Err(BchError::DecodeFailure);
        }
        Ok(error)
    }

    /// Every word with the given syndrome, by brute force over all `2^n`
    /// words. Only sensible for the toy code.
    pub fn coset_members(&self, target: u64) -> Vec<u64> {
        assert!(self.n <= 20, "exhaustive coset enumeration is only for small codes");
        (0..(1u64 << self.n))
            .filter(|&w| self.syndrome_word(w) == target)
            .collect()
    }

    fn check_len(&self, actual: usize, expected: usize) -> Result<(), BchError> {
        if actual != expected {
            return Err(BchError::LengthMismatch { expected, actual });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Schoolbook GF(2) long division, independent of `poly_mod`.
    fn divides(divisor: u64, dividend: u128) -> bool {
        let dd = 63 - divisor.leading_zeros() as i32;
        let mut rem = dividend;
        for i in (dd..128).rev() {
            if (rem >> i) & 1 == 1 {
                rem ^= (divisor as u128) << (i - dd);
            }
        }
        rem == 0
    }

    fn random_error(rng: &mut ChaCha8Rng, n: usize, weight: usize) -> u64 {
        let mut e = 0u64;
        while (e.count_ones() as usize) < weight {
            e |= 1u64 << rng.random_range(0..n);
        }
        e
    }

    #[test]
    fn toy_generator_is_x3_x_1_and_divides_x7_minus_1() {
        let code = make_code(7, 4, 1).unwrap();
        assert_eq!(code.generator_poly, 0b1011);
        assert_eq!(code.parity_len(), 3);
        assert!(divides(code.generator_poly, (1u128 << 7) | 1));
    }

    #[test]
    fn generator_degrees_and_cyclic_property() {
        for (n, k, t) in [(31, 16, 3), (63, 24, 7)] {
            let code = make_code(n, k, t).unwrap();
            assert_eq!(degree(code.generator_poly), n - k);
            assert!(divides(code.generator_poly, (1u128 << n) | 1));
            assert_eq!(code.info_positions.len(), k);
        }
        assert_eq!(make_code(31, 16, 3).unwrap().parity_len(), 15);
        assert_eq!(make_code(63, 24, 7).unwrap().parity_len(), 39);
    }

    #[test]
    fn parity_map_has_full_rank() {
        for (n, k, t) in [(7, 4, 1), (31, 16, 3), (63, 24, 7)] {
            let code = make_code(n, k, t).unwrap();
            // Gaussian elimination over the n column syndromes
            let mut rows: Vec<u64> = (0..n).map(|i| code.syndrome_word(1 << i)).collect();
            let mut rank = 0;
            for bit in 0..(n - k) {
                if let Some(p) = (rank..rows.len()).find(|&r| (rows[r] >> bit) & 1 == 1) {
                    rows.swap(rank, p);
                    let pivot = rows[rank];
                    for (r, row) in rows.iter_mut().enumerate() {
                        if r != rank && (*row >> bit) & 1 == 1 {
                            *row ^= pivot;
                        }
                    }
                    rank += 1;
                }
            }
            assert_eq!(rank, n - k);
        }
    }

    #[test]
    fn unsupported_parameters_rejected() {
        assert_eq!(
            make_code(15, 7, 2),
            Err(BchError::UnsupportedParameters { n: 15, k: 7, t: 2 })
        );
        assert!(make_code(31, 6, 3).is_err());
    }

    #[test]
    fn syndrome_of_zero_and_length_mismatch() {
        let code = make_code(31, 16, 3).unwrap();
        assert_eq!(code.syndrome(&Bits::zeros(31)).unwrap(), Syndrome::zero(&code));
        assert_eq!(
            code.syndrome(&Bits::zeros(30)),
            Err(BchError::LengthMismatch { expected: 31, actual: 30 })
        );
    }

    #[test]
    fn toy_codewords_have_zero_syndrome_and_single_bit_syndromes_are_distinct() {
        let code = make_code(7, 4, 1).unwrap();
        for m in 0..16u64 {
            assert_eq!(code.syndrome_word(code.encode_word(m)), 0);
        }
        let cols: Vec<u64> = (0..7).map(|i| code.syndrome_word(1 << i)).collect();
        for i in 0..7 {
            assert_ne!(cols[i], 0);
            for j in 0..i {
                assert_ne!(cols[i], cols[j]);
            }
        }
        // parity coordinates map to unit syndromes
        assert_eq!(&cols[..3], &[1, 2, 4]);
    }

    #[test]
    fn toy_exhaustive_single_error_correction() {
        let code = make_code(7, 4, 1).unwrap();
        for m in 0..16u64 {
            let c = code.encode_word(m);
            assert_eq!(code.correct_word(c, 0), Ok(c));
            for pos in 0..7 {
                assert_eq!(code.correct_word(c ^ (1 << pos), 0), Ok(c));
            }
        }
    }

    #[test]
    fn toy_cosets_have_sixteen_members() {
        let code = make_code(7, 4, 1).unwrap();
        for s in 0..8u64 {
            assert_eq!(code.coset_members(s).len(), 16);
        }
    }

    #[test]
    fn randomized_round_trip_within_t() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (n, k, t) in [(31, 16, 3), (63, 24, 7)] {
            let code = make_code(n, k, t).unwrap();
            for _ in 0..10_000 {
                let c = code.encode_word(rng.random_range(0..(1u64 << k)));
                let weight = rng.random_range(0..=t);
                let e = random_error(&mut rng, n, weight);
                assert_eq!(code.correct_word(c ^ e, 0), Ok(c));
            }
        }
    }

    #[test]
    fn beyond_t_never_returns_unverified_word() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let code = make_code(31, 16, 3).unwrap();
        let mut failures = 0;
        for _ in 0..5_000 {
            let c = code.encode_word(rng.random_range(0..(1u64 << 16)));
            let e = random_error(&mut rng, 31, 4);
            match code.correct_word(c ^ e, 0) {
                Err(BchError::DecodeFailure) => failures += 1,
                Ok(w) => {
                    // a mis-correction lands on a different codeword within t
                    assert_ne!(w, c);
                    assert_eq!(code.syndrome_word(w), 0);
                    assert!((w ^ c ^ e).count_ones() <= 3);
                }
                Err(e) => panic!("unexpected {e:?}"),
            }
        }
        assert!(failures > 0);
    }

    #[test]
    fn correction_toward_nonzero_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let code = make_code(31, 16, 3).unwrap();
        for _ in 0..2_000 {
            let r: u64 = rng.random_range(0..(1u64 << 31));
            let target = code.syndrome_word(r);
            let w = rng.random_range(0..=3);
            let e = random_error(&mut rng, 31, w);
            let w = code.correct_word(r ^ e, target).unwrap();
            assert_eq!(w, r);
        }
    }

    proptest! {
        #[test]
        fn syndrome_is_linear(a in 0u64..(1 << 63), b in 0u64..(1 << 63)) {
            let code = make_code(63, 24, 7).unwrap();
            prop_assert_eq!(
                code.syndrome_word(a ^ b),
                code.syndrome_word(a) ^ code.syndrome_word(b)
            );
        }

        #[test]
        fn returned_words_satisfy_postcondition(word in 0u64..(1 << 31), target in 0u64..(1 << 15)) {
            let code = make_code(31, 16, 3).unwrap();
            if let Ok(w) = code.correct_word(word, target) {
                prop_assert_eq!(code.syndrome_word(w), target);
                prop_assert!((w ^ word).count_ones() <= 3);
            }
        }
    }
}
