//! `NCFS` frame-stack container, little-endian:
//!
//! ```text
//! "NCFS" | version u32 = 1 | T u32 | H u32 | W u32
//! T*H*W pixel bytes (frame-major, row-major)
//! T x (t_start u64, t_end u64)
//! ```

use thiserror::Error;

use super::{FrameStack, BACKGROUND, OFF_VALUE, ON_VALUE};

const MAGIC: &[u8; 4] = b"NCFS";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NcfsError {
    #[error("bad magic {0:?}, expected \"NCFS\"")]
    BadMagic([u8; 4]),
    #[error("unsupported NCFS version {0}")]
    UnsupportedVersion(u32),
    #[error("dimension mismatch: header declares {expected} bytes, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("pixel {index} has value {value}, expected 0, 127 or 255")]
    InvalidPixel { index: usize, value: u8 },
}

pub fn write_framestack(fs: &FrameStack) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + fs.pixels().len() + 16 * fs.timesteps());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [fs.timesteps(), fs.height(), fs.width()] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.extend_from_slice(fs.pixels());
    for &(a, b) in fs.windows() {
        out.extend_from_slice(&a.to_le_bytes());
        out.extend_from_slice(&b.to_le_bytes());
    }
    out
}

pub fn read_framestack(bytes: &[u8]) -> Result<FrameStack, NcfsError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        let mut got = [0u8; 4];
        let n = bytes.len().min(4);
        got[..n].copy_from_slice(&bytes[..n]);
        return Err(NcfsError::BadMagic(got));
    }
    if bytes.len() < HEADER_LEN {
        return Err(NcfsError::DimensionMismatch {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(NcfsError::UnsupportedVersion(version));
    }
    let (t, h, w) = (u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize);
    let expected = t
        .checked_mul(h)
        .and_then(|n| n.checked_mul(w))
        .and_then(|n| n.checked_add(16 * t))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .unwrap_or(usize::MAX);
    if bytes.len() != expected {
        return Err(NcfsError::DimensionMismatch {
            expected,
            found: bytes.len(),
        });
    }
    let npix = t * h * w;
    let pixels = bytes[HEADER_LEN..HEADER_LEN + npix].to_vec();
    if let Some(index) = pixels
        .iter()
        .position(|&p| p != BACKGROUND && p != ON_VALUE && p != OFF_VALUE)
    {
        return Err(NcfsError::InvalidPixel {
            index,
            value: pixels[index],
        });
    }
    let windows = bytes[HEADER_LEN + npix..]
        .chunks_exact(16)
        .map(|c| {
            (
                u64::from_le_bytes(c[..8].try_into().unwrap()),
                u64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    Ok(FrameStack::from_parts(t, h, w, pixels, windows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn background_payload() {
        let fs = FrameStack::background(1, 2, 2, vec![(0, 0)]);
        let bytes = write_framestack(&fs);
        assert_eq!(&bytes[..4], b"NCFS");
        assert_eq!(
            &bytes[4..20],
            &[1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0]
        );
        assert_eq!(&bytes[20..24], &[127, 127, 127, 127]);
        assert_eq!(bytes.len(), 24 + 16);
        assert_eq!(read_framestack(&bytes).unwrap(), fs);
    }

    #[test]
    fn truncated_payload() {
        let fs = FrameStack::background(2, 3, 3, vec![(0, 5), (5, 9)]);
        let bytes = write_framestack(&fs);
        let err = read_framestack(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(err, NcfsError::DimensionMismatch { .. }));
        let err = read_framestack(&bytes[..10]).unwrap_err();
        assert!(matches!(err, NcfsError::DimensionMismatch { .. }));
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(
            read_framestack(b"NCEM\x01\0\0\0"),
            Err(NcfsError::BadMagic(_))
        ));
        assert!(matches!(
            read_framestack(b"NC"),
            Err(NcfsError::BadMagic(_))
        ));
    }

    #[test]
    fn invalid_pixel() {
        let mut bytes = write_framestack(&FrameStack::background(1, 1, 2, vec![(0, 1)]));
        bytes[21] = 12;
        assert_eq!(
            read_framestack(&bytes).unwrap_err(),
            NcfsError::InvalidPixel {
                index: 1,
                value: 12
            }
        );
    }

    #[test]
    fn wrong_version() {
        let mut bytes = write_framestack(&FrameStack::background(1, 1, 1, vec![(0, 1)]));
        bytes[4] = 2;
        assert_eq!(
            read_framestack(&bytes).unwrap_err(),
            NcfsError::UnsupportedVersion(2)
        );
    }
}
