//! `NCEM` embedding container, little-endian:
//!
//! ```text
//! "NCEM" | version u32 = 1 | role u8 (0 text, 1 visual) | rows u32 | cols u32
//! label_len u32 | label_len bytes of UTF-8, newline-separated row labels
//! rows*cols f32 values, row-major
//! ```

use super::{EmbeddingMatrix, GatewayError, Role};

const MAGIC: &[u8; 4] = b"NCEM";
const VERSION: u32 = 1;
const FIXED_HEADER: usize = 4 + 4 + 1 + 4 + 4 + 4;

pub fn write_ncem(m: &EmbeddingMatrix) -> Vec<u8> {
    let labels = m.labels().map(|l| l.join("\n")).unwrap_or_default();
    let mut out = Vec::with_capacity(FIXED_HEADER + labels.len() + 4 * m.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(m.role() as u8);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_le_bytes());
    out.extend_from_slice(labels.as_bytes());
    for v in m.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_ncem(bytes: &[u8]) -> Result<EmbeddingMatrix, GatewayError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        let mut got = [0u8; 4];
        let n = bytes.len().min(4);
        got[..n].copy_from_slice(&bytes[..n]);
        return Err(GatewayError::BadMagic(got));
    }
    if bytes.len() < FIXED_HEADER {
        return Err(GatewayError::DimensionMismatch(format!(
            "file is {} bytes, shorter than the {FIXED_HEADER}-byte header",
            bytes.len()
        )));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    let version = u32_at(4) as u32;
    if version != VERSION {
        return Err(GatewayError::UnsupportedVersion(version));
    }
    let role = Role::try_from(bytes[8])?;
    let (rows, cols, label_len) = (u32_at(9), u32_at(13), u32_at(17));

    let payload_start = FIXED_HEADER + label_len;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(payload_start));
    if expected != Some(bytes.len()) {
        return Err(GatewayError::DimensionMismatch(format!(
            "{rows}x{cols} matrix with {label_len} label bytes needs {} bytes, file has {}",
            expected.map_or_else(|| "overflowing".to_string(), |n| n.to_string()),
            bytes.len()
        )));
    }

    let values = bytes[payload_start..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let m = EmbeddingMatrix::new(role, rows, cols, values)?;
    if label_len == 0 {
        return Ok(m);
    }
    let text = std::str::from_utf8(&bytes[FIXED_HEADER..payload_start])
        .map_err(|e| GatewayError::BadLabels(e.to_string()))?;
    m.with_labels(text.split('\n').map(str::to_owned).collect())
}
