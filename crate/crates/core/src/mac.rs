//! AES-128 CMAC, the firmware MAC and the SecureComm block cipher.

use aes::cipher::{generic_array::GenericArray, BlockDecrypt, BlockEncrypt, KeyInit};
use aes::Aes128;
use thiserror::Error;

use crate::fuzzy::SessionKey;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MacError {
    #[error("session key must be 128 bits, got {0}")]
    KeyLength(usize),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct MacTag(pub [u8; 16]);

impl MacTag {
    /// Full-width comparison without early exit.
    pub fn verify(&self, other: &MacTag) -> bool {
        self.0.iter().zip(&other.0).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl std::fmt::Debug for MacTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MacTag({})", self.to_hex())
    }
}

fn dbl(block: [u8; 16]) -> [u8; 16] {
    let v = u128::from_be_bytes(block);
    let carry = (v >> 127) as u8;
    ((v << 1) ^ if carry == 1 { 0x87 } else { 0 }).to_be_bytes()
}

fn encrypt_block(cipher: &Aes128, block: [u8; 16]) -> [u8; 16] {
    let mut b = GenericArray::from(block);
    cipher.encrypt_block(&mut b);
    b.into()
}

fn xor16(a: [u8; 16], b: &[u8]) -> [u8; 16] {
    let mut out = a;
    for (o, x) in out.iter_mut().zip(b) {
        *o ^= x;
    }
    out
}

pub fn cmac(key: &[u8; 16], message: &[u8]) -> MacTag {
    let cipher = Aes128::new(GenericArray::from_slice(key));
    let l = encrypt_block(&cipher, [0u8; 16]);
    let k1 = dbl(l);
    let k2 = dbl(k1);

    let n = message.len().div_ceil(16).max(1);
    let complete = !message.is_empty() && message.len() % 16 == 0;
    let mut x = [0u8; 16];
    for chunk in message.chunks(16).take(n - 1) {
        x = encrypt_block(&cipher, xor16(x, chunk));
    }
    let tail = &message[(n - 1) * 16..];
    let last = if complete {
        xor16(k1, tail)
    } else {
        let mut padded = [0u8; 16];
        padded[..tail.len()].copy_from_slice(tail);
        padded[tail.len()] = 0x80;
        xor16(k2, &padded)
    };
    MacTag(encrypt_block(&cipher, xor16(x, &last)))
}

fn aes_key(sk: &SessionKey) -> Result<[u8; 16], MacError> {
    sk.to_aes_key().ok_or(MacError::KeyLength(sk.bits.len()))
}

/// CMAC over `firmware ‖ nonce`, nonce as 16 big-endian bytes.
pub fn mac_firmware(firmware: &[u8], nonce: u128, sk: &SessionKey) -> Result<MacTag, MacError> {
    let key = aes_key(sk)?;
    let mut msg = Vec::with_capacity(firmware.len() + 16);
    msg.extend_from_slice(firmware);
    msg.extend_from_slice(&nonce.to_be_bytes());
    Ok(cmac(&key, &msg))
}

pub fn aes_encrypt_block(key: &[u8; 16], block: [u8; 16]) -> [u8; 16] {
    encrypt_block(&Aes128::new(GenericArray::from_slice(key)), block)
}

pub fn aes_decrypt_block(key: &[u8; 16], block: [u8; 16]) -> [u8; 16] {
    let cipher = Aes128::new(GenericArray::from_slice(key));
    let mut b = GenericArray::from(block);
    cipher.decrypt_block(&mut b);
    b.into()
}

pub fn sc_encrypt(payload: [u8; 16], sk: &SessionKey) -> Result<[u8; 16], MacError> {
    Ok(aes_encrypt_block(&aes_key(sk)?, payload))
}

pub fn sc_decrypt(ciphertext: [u8; 16], sk: &SessionKey) -> Result<[u8; 16], MacError> {
    Ok(aes_decrypt_block(&aes_key(sk)?, ciphertext))
}
