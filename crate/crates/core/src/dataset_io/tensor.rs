//! Fixed-header binary tensor files.
//!
//! Layout (all little-endian):
//!
//! | offset | size        | content                         |
//! |--------|-------------|---------------------------------|
//! | 0      | 8           | magic `SQFTENS1`                |
//! | 8      | 4           | `u32` map count F               |
//! | 12     | 4           | `u32` map height H              |
//! | 16     | 4           | `u32` map width W               |
//! | 20     | F·H·W·4     | `f32` payload, map-major, rows  |
//!
//! The same layout carries CNN activations from the offline extractor,
//! serialized template databases, and Viterbi debug dumps.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: [u8; 8] = *b"SQFTENS1";
pub const TENSOR_HEADER_LEN: usize = 20;

/// A stack of equally sized 2-D maps of `f32` activations.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapSet {
    maps: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FeatureMapSet {
    pub fn new(maps: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if maps == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!(
                "feature map dims must be positive, got {maps}x{height}x{width}"
            )));
        }
        let expected = maps
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| Error::InvalidInput("feature map dims overflow".into()))?;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            maps,
            height,
            width,
            data,
        })
    }

    pub fn maps(&self) -> usize {
        self.maps
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Row-major view of one map.
    pub fn map(&self, f: usize) -> &[f32] {
        let len = self.height * self.width;
        &self.data[f * len..(f + 1) * len]
    }

    pub fn iter_maps(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.height * self.width)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(TENSOR_HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(&TENSOR_MAGIC);
        for dim in [self.maps, self.height, self.width] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < TENSOR_MAGIC.len() {
            return Err(Error::TensorFormat {
                offset: bytes.len() as u64,
                reason: "file shorter than magic".into(),
            });
        }
        if bytes[..8] != TENSOR_MAGIC {
            return Err(Error::TensorFormat {
                offset: 0,
                reason: "bad magic".into(),
            });
        }
        if bytes.len() < TENSOR_HEADER_LEN {
            return Err(Error::TensorFormat {
                offset: bytes.len() as u64,
                reason: "truncated header".into(),
            });
        }
        let dim = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as u64;
        let (maps, height, width) = (dim(8), dim(12), dim(16));
        for (i, d) in [maps, height, width].into_iter().enumerate() {
            if d == 0 {
                return Err(Error::TensorFormat {
                    offset: 8 + 4 * i as u64,
                    reason: "zero dimension".into(),
                });
            }
        }
        let payload_len = maps
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .and_then(|v| v.checked_mul(4))
            .filter(|&v| usize::try_from(v).is_ok())
            .ok_or_else(|| Error::TensorFormat {
                offset: 8,
                reason: format!("dims {maps}x{height}x{width} overflow"),
            })? as usize;
        let payload = &bytes[TENSOR_HEADER_LEN..];
        if payload.len() < payload_len {
            return Err(Error::TensorFormat {
                offset: bytes.len() as u64,
                reason: format!(
                    "truncated payload: expected {payload_len} bytes, found {}",
                    payload.len()
                ),
            });
        }
        if payload.len() > payload_len {
            return Err(Error::TensorFormat {
                offset: (TENSOR_HEADER_LEN + payload_len) as u64,
                reason: format!("{} trailing bytes", payload.len() - payload_len),
            });
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            maps: maps as usize,
            height: height as usize,
            width: width as usize,
            data,
        })
    }
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<FeatureMapSet> {
    let bytes = fs::read(path.as_ref())?;
    FeatureMapSet::decode(&bytes)
}

/// Writes through a sibling temp file and renames, so readers never observe a
/// partially written tensor.
pub fn write_tensor(set: &FeatureMapSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&set.encode())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn write_then_read_2x2x2() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.sqft");
        let set = FeatureMapSet::new(2, 2, 2, (1..=8).map(|v| v as f32).collect()).unwrap();
        write_tensor(&set, &path).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(back, set);
        assert_eq!(fs::read(&path).unwrap().len(), 20 + 32);
    }

    #[test]
    fn wrong_magic_rejected() {
        let set = FeatureMapSet::new(1, 1, 2, vec![0.5, 1.5]).unwrap();
        let mut bytes = set.encode();
        bytes[0] = b'X';
        match FeatureMapSet::decode(&bytes) {
            Err(Error::TensorFormat { offset: 0, .. }) => {}
            other => panic!("expected bad magic, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_rejected() {
        let set = FeatureMapSet::new(2, 2, 2, vec![1.0; 8]).unwrap();
        let bytes = set.encode();
        let err = FeatureMapSet::decode(&bytes[..bytes.len() - 3]).unwrap_err();
        match err {
            Error::TensorFormat { offset, reason } => {
                assert_eq!(offset, (bytes.len() - 3) as u64);
                assert!(reason.contains("truncated"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overflowing_dims_rejected() {
        let mut bytes = TENSOR_MAGIC.to_vec();
        for _ in 0..3 {
            bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        let err = FeatureMapSet::decode(&bytes).unwrap_err();
        assert!(matches!(err, Error::TensorFormat { offset: 8, .. }), "{err:?}");
    }

    #[test]
    fn extractor_sized_file() {
        // 256 maps of 13x13, as produced for one conv layer.
        let set = FeatureMapSet::new(256, 13, 13, vec![0.0; 256 * 13 * 13]).unwrap();
        assert_eq!(set.encode().len(), 8 + 12 + 256 * 13 * 13 * 4);
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            (f, h, w, data) in (1usize..4, 1usize..5, 1usize..5).prop_flat_map(|(f, h, w)| {
                (Just(f), Just(h), Just(w), proptest::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), f * h * w))
            })
        ) {
            let set = FeatureMapSet::new(f, h, w, data).unwrap();
            let bytes = set.encode();
            let back = FeatureMapSet::decode(&bytes).unwrap();
            prop_assert_eq!(back.encode(), bytes);
            prop_assert!(back.data().iter().zip(set.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
