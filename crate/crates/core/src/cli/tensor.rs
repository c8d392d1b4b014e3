//! Portable raw image tensors and the luminance flattening used to turn RGB
//! images into feature vectors.
//!
//! Layout: magic `SQTN`, then `height`, `width`, `channels` as little-endian
//! `u32`, then `height·width·channels` bytes in row-major, channel-interleaved
//! order.

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SQTN";
const HEADER_LEN: usize = 16;

/// Weights of the red, green and blue channels.
pub const LUMA: [f64; 3] = [0.1140, 0.5870, 0.2989];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTensor {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl RawTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        let expected = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Error::Format("tensor dimensions overflow".into()))?;
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Format("tensor dimensions must be positive".into()));
        }
        if data.len() != expected {
            return Err(Error::Format(format!(
                "payload has {} bytes, dimensions need {expected}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || bytes[..4] != MAGIC {
            return Err(Error::Format("not a raw tensor (bad magic or short header)".into()));
        }
        let field = |k: usize| {
            let b: [u8; 4] = bytes[4 + 4 * k..8 + 4 * k].try_into().expect("four bytes");
            u32::from_le_bytes(b) as usize
        };
        Self::new(field(0), field(1), field(2), bytes[HEADER_LEN..].to_vec())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len());
        out.extend_from_slice(&MAGIC);
        for v in [self.height, self.width, self.channels] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }
}

/// Per-pixel weighted channel sum of an RGB tensor, row-major.
pub fn grayscale_flatten(image: &RawTensor) -> Result<Vec<f64>> {
    if image.channels != 3 {
        return Err(Error::Format(format!(
            "expected 3 channels, found {}",
            image.channels
        )));
    }
    Ok(image
        .data
        .chunks_exact(3)
        .map(|px| px.iter().zip(LUMA).map(|(&c, w)| c as f64 * w).sum())
        .collect())
}
