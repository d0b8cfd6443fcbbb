//! Firmware images as a list of download-area segments.

use std::path::Path;

use base64::Engine as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::layout;

use super::ProtocolError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    /// Word offset within the download area.
    pub load_offset: u32,
    #[serde(serialize_with = "to_b64", deserialize_with = "from_b64")]
    pub bytes: Vec<u8>,
}

fn to_b64<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
}

fn from_b64<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
    let s = String::deserialize(d)?;
    base64::engine::general_purpose::STANDARD
        .decode(s)
        .map_err(serde::de::Error::custom)
}

impl Segment {
    fn start_byte(&self) -> usize {
        self.load_offset as usize * 2
    }

    fn end_byte(&self) -> usize {
        self.start_byte() + self.bytes.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirmwareImage {
    pub segments: Vec<Segment>,
}

/// One BlockWrite worth of image data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub wordptr: u32,
    pub words: Vec<u16>,
}

impl FirmwareImage {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        FirmwareImage {
            segments: vec![Segment { load_offset: 0, bytes }],
        }
    }

    /// Checks ordering, overlap and fit; returns the image extent in bytes.
    pub fn validate(&self) -> Result<usize, ProtocolError> {
        let extent = self.check_segments()?;
        if extent > layout::DOWNLOAD_BYTES {
            return Err(ProtocolError::InvalidImage(format!(
                "{extent} bytes exceed the {}-byte download area",
                layout::DOWNLOAD_BYTES
            )));
        }
        Ok(extent)
    }

    /// Like [`FirmwareImage::validate`] without the size limit.
    pub fn check_segments(&self) -> Result<usize, ProtocolError> {
        if self.segments.iter().all(|s| s.bytes.is_empty()) {
            return Err(ProtocolError::InvalidImage("image has no bytes".into()));
        }
        let mut sorted: Vec<&Segment> = self.segments.iter().collect();
        sorted.sort_by_key(|s| s.load_offset);
        for w in sorted.windows(2) {
            // a segment's padded last word must not reach into the next one
            if w[0].end_byte().div_ceil(2) * 2 > w[1].start_byte() {
                return Err(ProtocolError::InvalidImage(format!(
                    "segments at word {} and {} overlap",
                    w[0].load_offset, w[1].load_offset
                )));
            }
        }
        Ok(self.total_bytes())
    }

    /// Extent from the start of the download area to the last image byte.
    pub fn total_bytes(&self) -> usize {
        self.segments.iter().map(Segment::end_byte).max().unwrap_or(0)
    }

    /// Image as it lands in an erased download area; gaps read as 0xFF.
    pub fn flatten(&self) -> Vec<u8> {
        let mut out = vec![0xFF; self.total_bytes()];
        for s in &self.segments {
            out[s.start_byte()..s.end_byte()].copy_from_slice(&s.bytes);
        }
        out
    }

    /// Splits every segment into BlockWrite payloads of at most `chunk_words`.
    /// An odd trailing byte is padded with 0xFF.
    pub fn chunks(&self, chunk_words: usize) -> Vec<Chunk> {
        assert!((1..=crate::gen2::MAX_WORDS).contains(&chunk_words));
        let mut out = Vec::new();
        for s in &self.segments {
            let words: Vec<u16> = s
                .bytes
                .chunks(2)
                .map(|p| u16::from_be_bytes([p[0], *p.get(1).unwrap_or(&0xFF)]))
                .collect();
            for (i, part) in words.chunks(chunk_words).enumerate() {
                out.push(Chunk {
                    wordptr: s.load_offset + (i * chunk_words) as u32,
                    words: part.to_vec(),
                });
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("image serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ProtocolError> {
        let img: FirmwareImage = serde_json::from_str(s)?;
        img.validate()?;
        Ok(img)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ProtocolError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProtocolError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn demo_bytes(len: usize, tag: u8) -> Vec<u8> {
    let mut x: u32 = 0x1234_5678 ^ tag as u32;
    (0..len)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 17;
            x ^= x << 5;
            (x >> 8) as u8
        })
        .collect()
}

/// Bundled demo images sized like small sensing applications.
pub fn demo_images() -> Vec<(&'static str, FirmwareImage)> {
    vec![
        ("accelerometer", FirmwareImage::from_bytes(demo_bytes(399, 1))),
        ("thermometer", FirmwareImage::from_bytes(demo_bytes(273, 2))),
        ("gln", FirmwareImage::from_bytes(demo_bytes(223, 3))),
    ]
}

pub fn demo_image(name: &str) -> Option<FirmwareImage> {
    demo_images().into_iter().find(|(n, _)| *n == name).map(|(_, i)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunking_covers_every_byte() {
        let img = FirmwareImage::from_bytes((0..=200u8).collect());
        let chunks = img.chunks(32);
        assert_eq!(chunks.len(), 4);
        assert_eq!(chunks[1].wordptr, 32);
        assert_eq!(chunks[3].words.len(), 101 - 96);
        assert_eq!(*chunks[3].words.last().unwrap(), 0xC8FF);
        let mut rebuilt = Vec::new();
        for c in &chunks {
            for w in &c.words {
                rebuilt.extend_from_slice(&w.to_be_bytes());
            }
        }
        assert_eq!(&rebuilt[..201], img.flatten().as_slice());
    }

    #[test]
    fn gaps_flatten_to_erased_bytes() {
        let img = FirmwareImage {
            segments: vec![
                Segment {
                    load_offset: 0,
                    bytes: vec![1, 2, 3],
                },
                Segment {
                    load_offset: 4,
                    bytes: vec![9],
                },
            ],
        };
        assert_eq!(img.validate().unwrap(), 9);
        assert_eq!(img.flatten(), vec![1, 2, 3, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 9]);
    }

    #[test]
    fn overlap_and_size_rejected() {
        let img = FirmwareImage {
            segments: vec![
                Segment {
                    load_offset: 0,
                    bytes: vec![0; 5],
                },
                Segment {
                    load_offset: 2,
                    bytes: vec![0; 2],
                },
            ],
        };
        assert!(img.validate().is_err());
        let big = FirmwareImage::from_bytes(vec![0; layout::DOWNLOAD_BYTES + 1]);
        assert!(big.validate().is_err());
        assert!(FirmwareImage::from_bytes(vec![0; layout::DOWNLOAD_BYTES]).validate().is_ok());
    }

    #[test]
    fn json_round_trip() {
        for (_, img) in demo_images() {
            let back = FirmwareImage::from_json(&img.to_json()).unwrap();
            assert_eq!(back, img);
        }
        assert_eq!(demo_image("accelerometer").unwrap().total_bytes(), 399);
        assert_eq!(demo_image("thermometer").unwrap().total_bytes(), 273);
        assert_eq!(demo_image("gln").unwrap().total_bytes(), 223);
    }
}
