//! Reader-to-tag framing on top of the Gen2 `BlockWrite` command.
//!
//! Frame layout: command code (8), membank (2), EBV-8 word pointer,
//! word count (8), big-endian data words, RN16 handle, CRC-16.
//! Authenticate, SecureComm and TagPrivilege ride on membank 0 with
//! reserved word pointers.

use thiserror::Error;

use crate::bits::Bits;
use crate::layout;

pub const CMD_BLOCKWRITE: u8 = 0b1100_0111;

pub const MEMBANK_RESERVED: u8 = 0;
pub const MEMBANK_USER: u8 = 3;

pub const WORDPTR_AUTHENTICATE: u32 = 0x03;
pub const WORDPTR_SECURECOMM: u32 = 0x7D;
pub const WORDPTR_TAGPRIVILEGE: u32 = 0x7E;
/// Membank-0 pointers held back for mapped commands.
pub const RESERVED_WORDPTRS: std::ops::RangeInclusive<u32> = 0x70..=0x7F;

pub const MAX_WORDS: usize = 255;
pub const CRC_RESIDUE: u16 = 0x1D0F;

/// Only the CMAC method is defined.
pub const MAC_METHOD_CMAC: u16 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum Gen2Error {
    #[error("CRC residue check failed")]
    BadCrc,
    #[error("unknown discriminator: membank {membank}, wordptr {wordptr:#x}")]
    UnknownDiscriminator { membank: u8, wordptr: u32 },
    #[error("word range {wordptr}+{count} outside the download area")]
    WordptrOutOfRange { wordptr: u32, count: usize },
    #[error("unsupported command code {0:#04x}")]
    UnsupportedCommand(u8),
    #[error("malformed frame: {0}")]
    Malformed(&'static str),
    #[error("payload of {0} words exceeds the 255-word limit")]
    PayloadTooLong(usize),
}

/// Session parameters carried by an Authenticate that opens an update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateSetup {
    /// Image size in bytes.
    pub size: u32,
    /// Destination in the application area, in 512-byte blocks.
    pub start_block: u16,
    pub mac_method: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CommandView {
    BlockWrite { membank: u8, wordptr: u32, words: Vec<u16> },
    Authenticate { csi: u8, setup: Option<UpdateSetup> },
    SecureComm { inner_wordptr: u32, ciphertext: [u8; 16] },
    TagPrivilege,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gen2Frame {
    pub bits: Bits,
}

fn crc_register(bits: impl Iterator<Item = bool>) -> u16 {
    let mut reg: u16 = 0xFFFF;
    for b in bits {
        let fb = ((reg >> 15) & 1 == 1) ^ b;
        reg <<= 1;
        if fb {
            reg ^= 0x1021;
        }
    }
    reg
}

/// The 16-bit CRC to append after `bits`.
pub fn crc16(bits: &Bits) -> u16 {
    !crc_register(bits.iter())
}

/// Whether a frame with its trailing CRC passes the receiver check.
pub fn residue_ok(bits: &Bits) -> bool {
    crc_register(bits.iter()) == CRC_RESIDUE
}

pub fn ebv_encode(value: u32) -> Bits {
    let mut groups = vec![(value & 0x7F) as u8];
    let mut v = value >> 7;
    while v > 0 {
        groups.push((v & 0x7F) as u8);
        v >>= 7;
    }
    let mut out = Bits::new();
    for (i, g) in groups.iter().rev().enumerate() {
        out.push(i + 1 < groups.len());
        out.push_uint_msb(*g as u64, 7);
    }
    out
}

/// Decodes an EBV starting at `pos`: `(value, bits consumed)`.
pub fn ebv_decode(bits: &Bits, pos: usize) -> Result<(u32, usize), Gen2Error> {
    let mut value: u64 = 0;
    let mut at = pos;
    loop {
        if at + 8 > bits.len() {
            return Err(Gen2Error::Malformed("truncated EBV"));
        }
        let more = bits[at];
        value = (value << 7) | bits.uint_msb(at + 1, 7);
        at += 8;
        if value > u32::MAX as u64 {
            return Err(Gen2Error::Malformed("EBV overflow"));
        }
        if !more {
            return Ok((value as u32, at - pos));
        }
    }
}

fn check_download(wordptr: u32, count: usize) -> Result<(), Gen2Error> {
    if layout::download_range_ok(wordptr as usize, count) {
        Ok(())
    } else {
        Err(Gen2Error::WordptrOutOfRange { wordptr, count })
    }
}

fn words_to_block(words: &[u16]) -> [u8; 16] {
    let mut out = [0u8; 16];
    for (i, w) in words.iter().enumerate() {
        out[2 * i..2 * i + 2].copy_from_slice(&w.to_be_bytes());
    }
    out
}

pub fn block_to_words(block: &[u8; 16]) -> Vec<u16> {
    block.chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
}

fn check_blockwrite(membank: u8, wordptr: u32, count: usize) -> Result<(), Gen2Error> {
    if count == 0 {
        return Err(Gen2Error::Malformed("empty BlockWrite"));
    }
    if count > MAX_WORDS {
        return Err(Gen2Error::PayloadTooLong(count));
    }
    if membank > 3 {
        return Err(Gen2Error::Malformed("membank is two bits"));
    }
    if membank == MEMBANK_RESERVED && (wordptr == WORDPTR_AUTHENTICATE || RESERVED_WORDPTRS.contains(&wordptr)) {
        return Err(Gen2Error::UnknownDiscriminator { membank, wordptr });
    }
    if membank == MEMBANK_USER {
        check_download(wordptr, count)?;
    }
    Ok(())
}

impl CommandView {
    /// `(membank, wordptr, data words)` as placed on the wire.
    fn wire_fields(&self) -> Result<(u8, u32, Vec<u16>), Gen2Error> {
        Ok(match self {
            CommandView::BlockWrite { membank, wordptr, words } => {
                check_blockwrite(*membank, *wordptr, words.len())?;
                (*membank, *wordptr, words.clone())
            }
            CommandView::Authenticate { csi, setup } => {
                let mut words = vec![*csi as u16];
                if let Some(s) = setup {
                    words.extend([(s.size >> 16) as u16, s.size as u16, s.start_block, s.mac_method]);
                }
                (MEMBANK_RESERVED, WORDPTR_AUTHENTICATE, words)
            }
            CommandView::SecureComm { inner_wordptr, ciphertext } => {
                check_download(*inner_wordptr, 8)?;
                let mut words = vec![*inner_wordptr as u16];
                words.extend(block_to_words(ciphertext));
                (MEMBANK_RESERVED, WORDPTR_SECURECOMM, words)
            }
            CommandView::TagPrivilege => (MEMBANK_RESERVED, WORDPTR_TAGPRIVILEGE, vec![0]),
        })
    }

    fn from_wire(membank: u8, wordptr: u32, words: Vec<u16>) -> Result<CommandView, Gen2Error> {
        if membank != MEMBANK_RESERVED {
            check_blockwrite(membank, wordptr, words.len())?;
            return Ok(CommandView::BlockWrite { membank, wordptr, words });
        }
        if words.is_empty() {
            return Err(Gen2Error::Malformed("empty data field"));
        }
        match wordptr {
            WORDPTR_AUTHENTICATE => {
                if words[0] > 0xFF {
                    return Err(Gen2Error::Malformed("CSI occupies the low byte"));
                }
                let csi = words[0] as u8;
                let setup = match words.len() {
                    1 => None,
                    5 => Some(UpdateSetup {
                        size: ((words[1] as u32) << 16) | words[2] as u32,
                        start_block: words[3],
                        mac_method: words[4],
                    }),
                    _ => return Err(Gen2Error::Malformed("Authenticate carries 1 or 5 words")),
                };
                Ok(CommandView::Authenticate { csi, setup })
            }
            WORDPTR_SECURECOMM => {
                if words.len() != 9 {
                    return Err(Gen2Error::Malformed("SecureComm carries 9 words"));
                }
                let inner_wordptr = words[0] as u32;
                check_download(inner_wordptr, 8)?;
                Ok(CommandView::SecureComm {
                    inner_wordptr,
                    ciphertext: words_to_block(&words[1..]),
                })
            }
            WORDPTR_TAGPRIVILEGE => {
                if words != [0] {
                    return Err(Gen2Error::Malformed("TagPrivilege carries one zero word"));
                }
                Ok(CommandView::TagPrivilege)
            }
            _ => {
                check_blockwrite(membank, wordptr, words.len())?;
                Ok(CommandView::BlockWrite { membank, wordptr, words })
            }
        }
    }
}

pub fn encode(cmd: &CommandView, rn: u16) -> Result<Gen2Frame, Gen2Error> {
    let (membank, wordptr, words) = cmd.wire_fields()?;
    if words.len() > MAX_WORDS {
        return Err(Gen2Error::PayloadTooLong(words.len()));
    }
    let mut bits = Bits::new();
    bits.push_uint_msb(CMD_BLOCKWRITE as u64, 8);
    bits.push_uint_msb(membank as u64, 2);
    bits.extend_from(&ebv_encode(wordptr));
    bits.push_uint_msb(words.len() as u64, 8);
    for w in &words {
        bits.push_uint_msb(*w as u64, 16);
    }
    bits.push_uint_msb(rn as u64, 16);
    let crc = crc16(&bits);
    bits.push_uint_msb(crc as u64, 16);
    Ok(Gen2Frame { bits })
}

/// Header fields and the structural length of the frame starting at bit 0.
fn parse_header(bits: &Bits) -> Result<(u8, u32, usize, usize), Gen2Error> {
    if bits.len() < 8 + 2 + 8 + 8 {
        return Err(Gen2Error::Malformed("truncated header"));
    }
    let code = bits.uint_msb(0, 8) as u8;
    if code != CMD_BLOCKWRITE {
        return Err(Gen2Error::UnsupportedCommand(code));
    }
    let membank = bits.uint_msb(8, 2) as u8;
    let (wordptr, used) = ebv_decode(bits, 10)?;
    let wc_at = 10 + used;
    if bits.len() < wc_at + 8 {
        return Err(Gen2Error::Malformed("truncated word count"));
    }
    let count = bits.uint_msb(wc_at, 8) as usize;
    let total = wc_at + 8 + 16 * count + 32;
    Ok((membank, wordptr, count, total))
}

/// Decodes a frame into its command view and RN16 handle.
pub fn decode(frame: &Gen2Frame) -> Result<(CommandView, u16), Gen2Error> {
    let bits = &frame.bits;
    if bits.len() < 16 || !residue_ok(bits) {
        return Err(Gen2Error::BadCrc);
    }
    let (membank, wordptr, count, total) = parse_header(bits)?;
    if total != bits.len() {
        return Err(Gen2Error::Malformed("length disagrees with word count"));
    }
    let data_at = total - 32 - 16 * count;
    let words = (0..count)
        .map(|i| bits.uint_msb(data_at + 16 * i, 16) as u16)
        .collect();
    let rn = bits.uint_msb(total - 32, 16) as u16;
    Ok((CommandView::from_wire(membank, wordptr, words)?, rn))
}

impl Gen2Frame {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Whitespace-separated hex bytes, MSB-first, zero-padded at the end.
    pub fn to_hex(&self) -> String {
        self.bits
            .to_bytes_msb()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Inverse of [`Gen2Frame::to_hex`]; the frame length is recovered from
    /// the header.
    pub fn from_hex(s: &str) -> Result<Gen2Frame, Gen2Error> {
        let compact: String = s.split_whitespace().collect();
        let bytes = hex::decode(compact).map_err(|_| Gen2Error::Malformed("bad hex"))?;
        let bits = Bits::from_bytes_msb(&bytes);
        let (_, _, _, total) = parse_header(&bits)?;
        if total > bits.len() || bits.len() - total >= 8 || bits.iter().skip(total).any(|b| b) {
            return Err(Gen2Error::Malformed("length disagrees with word count"));
        }
        Ok(Gen2Frame {
            bits: bits.slice(0, total),
        })
    }
}

/// Splits a BlockWrite into single-word BlockWrites at consecutive pointers.
/// Other commands pass through unchanged.
pub fn reader_split(cmd: &CommandView) -> Vec<CommandView> {
    match cmd {
        CommandView::BlockWrite { membank, wordptr, words } => words
            .iter()
            .enumerate()
            .map(|(i, &w)| CommandView::BlockWrite {
                membank: *membank,
                wordptr: wordptr + i as u32,
                words: vec![w],
            })
            .collect(),
        other => vec![other.clone()],
    }
}
