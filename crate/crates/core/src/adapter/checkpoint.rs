//! `NCAD` adapter checkpoint, little-endian:
//!
//! ```text
//! "NCAD" | version u32 = 1 | C u32 | H_b u32 | beta f32
//! leak f32 | threshold f32 | surrogate_width f32 | reset u8 (0 soft, 1 hard)
//! W_down (H_b*C) | b_down (H_b) | W_up (C*H_b) | b_up (C)   all f32
//! ```
//!
//! Parameters are held as `f64` in memory and stored as `f32`.

use thiserror::Error;

use super::{AdapterParams, LifParams, Reset};

const MAGIC: &[u8; 4] = b"NCAD";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 4 + 12 + 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("bad magic {0:?}, expected \"NCAD\"")]
    BadMagic([u8; 4]),
    #[error("unsupported NCAD version {0}")]
    UnsupportedVersion(u32),
    #[error("dimension mismatch: expected {expected} bytes, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unknown reset tag {0}")]
    BadReset(u8),
    #[error("invalid parameters: {0}")]
    Invalid(String),
}

pub fn write_checkpoint(p: &AdapterParams) -> Vec<u8> {
    let floats = p.blocks().iter().map(|b| b.len()).sum::<usize>();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * floats);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(p.dim as u32).to_le_bytes());
    out.extend_from_slice(&(p.bottleneck as u32).to_le_bytes());
    for v in [
        p.residual_ratio,
        p.lif.leak,
        p.lif.threshold,
        p.lif.surrogate_width,
    ] {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.push(match p.lif.reset {
        Reset::Soft => 0,
        Reset::Hard => 1,
    });
    for block in p.blocks() {
        for &v in block {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<AdapterParams, CheckpointError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        let mut got = [0u8; 4];
        let n = bytes.len().min(4);
        got[..n].copy_from_slice(&bytes[..n]);
        return Err(CheckpointError::BadMagic(got));
    }
    if bytes.len() < HEADER_LEN {
        return Err(CheckpointError::DimensionMismatch {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let f32_at = |off: usize| f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
    let version = u32_at(4);
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let (c, h) = (u32_at(8) as usize, u32_at(12) as usize);
    let reset = match bytes[32] {
        0 => Reset::Soft,
        1 => Reset::Hard,
        other => return Err(CheckpointError::BadReset(other)),
    };
    let lif = LifParams {
        leak: f32_at(20),
        threshold: f32_at(24),
        surrogate_width: f32_at(28),
        reset,
    };
    let floats = h
        .checked_mul(c)
        .and_then(|n| n.checked_mul(2))
        .and_then(|n| n.checked_add(h + c));
    let expected = floats
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .unwrap_or(usize::MAX);
    if bytes.len() != expected {
        return Err(CheckpointError::DimensionMismatch {
            expected,
            found: bytes.len(),
        });
    }
    let mut values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|ch| f32::from_le_bytes(ch.try_into().unwrap()) as f64);
    let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };
    let p = AdapterParams {
        dim: c,
        bottleneck: h,
        w_down: take(h * c),
        b_down: take(h),
        w_up: take(c * h),
        b_up: take(c),
        residual_ratio: f32_at(16),
        lif,
    };
    p.validate()
        .map_err(|e| CheckpointError::Invalid(e.to_string()))?;
    Ok(p)
}
