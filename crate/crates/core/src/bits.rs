//! A plain owned bit vector.
//!
//! Two packings are used across the crate: SRAM contents and PUF responses are
//! packed LSB-first within each byte (bit 0 of a byte is the lowest address
//! bit), while air-interface frames are packed MSB-first.

use std::fmt;
use std::ops::{BitXor, Index};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct Bits(Vec<bool>);

impl Bits {
    pub fn new() -> Self {
        Bits(Vec::new())
    }

    pub fn zeros(len: usize) -> Self {
        Bits(vec![false; len])
    }

    pub fn from_bools(bits: Vec<bool>) -> Self {
        Bits(bits)
    }

    /// Low `len` bits of `word`, coefficient (bit) 0 first.
    pub fn from_u64(word: u64, len: usize) -> Self {
        assert!(len <= 64);
        Bits((0..len).map(|i| (word >> i) & 1 == 1).collect())
    }

    /// Packs up to 64 bits into an integer, bit 0 first.
    pub fn to_u64(&self) -> u64 {
        assert!(self.0.len() <= 64, "bit vector too long for u64");
        self.0
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &b)| acc | ((b as u64) << i))
    }

    pub fn from_bytes_lsb(bytes: &[u8]) -> Self {
        let mut out = Vec::with_capacity(bytes.len() * 8);
        for &byte in bytes {
            for i in 0..8 {
                out.push((byte >> i) & 1 == 1);
            }
        }
        Bits(out)
    }

    /// Packs LSB-first; a trailing partial byte is zero-padded in its high bits.
    pub fn to_bytes_lsb(&self) -> Vec<u8> {
        self.0
            .chunks(8)
            .map(|chunk| {
                chunk
                    .iter()
                    .enumerate()
                    .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << i))
            })
            .collect()
    }

    pub fn from_bytes_msb(bytes: &[u8]) -> Self {
        let mut out = Vec::with_capacity(bytes.len() * 8);
        for &byte in bytes {
            for i in (0..8).rev() {
                out.push((byte >> i) & 1 == 1);
            }
        }
        Bits(out)
    }

    /// Packs MSB-first; a trailing partial byte is zero-padded in its low bits.
    pub fn to_bytes_msb(&self) -> Vec<u8> {
        self.0
            .chunks(8)
            .map(|chunk| {
                chunk
                    .iter()
                    .enumerate()
                    .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i)))
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.0[i] = value;
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] = !self.0[i];
    }

    pub fn push(&mut self, value: bool) {
        self.0.push(value);
    }

    pub fn extend_from(&mut self, other: &Bits) {
        self.0.extend_from_slice(&other.0);
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn push_uint_msb(&mut self, value: u64, width: usize) {
        for i in (0..width).rev() {
            self.0.push((value >> i) & 1 == 1);
        }
    }

    /// Reads `width` bits starting at `start` as an MSB-first unsigned integer.
    pub fn uint_msb(&self, start: usize, width: usize) -> u64 {
        self.0[start..start + width]
            .iter()
            .fold(0u64, |acc, &b| (acc << 1) | b as u64)
    }

    pub fn slice(&self, start: usize, end: usize) -> Bits {
        Bits(self.0[start..end].to_vec())
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    /// Number of positions where the two vectors differ.
    ///
    /// Panics if lengths differ.
    pub fn hamming_distance(&self, other: &Bits) -> usize {
        assert_eq!(self.len(), other.len(), "hamming distance over unequal lengths");
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    /// Splits into consecutive chunks of `size` bits; the length must divide evenly.
    pub fn chunks(&self, size: usize) -> impl Iterator<Item = Bits> + '_ {
        assert!(size > 0 && self.len() % size == 0);
        self.0.chunks(size).map(|c| Bits(c.to_vec()))
    }

    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Bits>) -> Bits {
        let mut out = Bits::new();
        for p in parts {
            out.extend_from(p);
        }
        out
    }

    /// Lowercase hex of the LSB-first byte packing.
    pub fn to_hex_lsb(&self) -> String {
        hex::encode(self.to_bytes_lsb())
    }

    pub fn from_hex_lsb(s: &str, len: usize) -> Result<Bits, hex::FromHexError> {
        let bytes = hex::decode(s)?;
        let mut bits = Bits::from_bytes_lsb(&bytes);
        if bits.len() < len {
            return Err(hex::FromHexError::InvalidStringLength);
        }
        bits.0.truncate(len);
        Ok(bits)
    }
}

impl Index<usize> for Bits {
    type Output = bool;

    fn index(&self, i: usize) -> &bool {
        &self.0[i]
    }
}

impl BitXor for &Bits {
    type Output = Bits;

    fn bitxor(self, rhs: &Bits) -> Bits {
        assert_eq!(self.len(), rhs.len(), "xor over unequal lengths");
        Bits(self.0.iter().zip(&rhs.0).map(|(a, b)| a ^ b).collect())
    }
}

impl FromIterator<bool> for Bits {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Bits(iter.into_iter().collect())
    }
}

impl From<Vec<bool>> for Bits {
    fn from(v: Vec<bool>) -> Self {
        Bits(v)
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bits[{}](", self.len())?;
        for b in &self.0 {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        f.write_str(")")
    }
}

/// Serialized as `{"len": n, "hex": "..."}` with LSB-first packing.
impl Serialize for Bits {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            len: usize,
            hex: String,
        }
        Repr {
            len: self.len(),
            hex: self.to_hex_lsb(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Bits {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            len: usize,
            hex: String,
        }
        let r = Repr::deserialize(d)?;
        Bits::from_hex_lsb(&r.hex, r.len).map_err(serde::de::Error::custom)
    }
}
