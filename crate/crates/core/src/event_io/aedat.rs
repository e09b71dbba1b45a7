use super::{Event, EventError, EventStream, Polarity};

pub const DVS128_SIZE: u16 = 128;

const RECORD_LEN: usize = 8;

/// Which value of address bit 0 denotes an ON event. Recorders disagree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OnBit {
    /// Bit 0 clear means ON (common in DVS128 dumps).
    #[default]
    Zero,
    One,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AedatOptions {
    pub on_bit: OnBit,
}

/// Decodes an AEDAT 2.0 file with DVS128 addressing using default options.
pub fn parse_aedat2(bytes: &[u8]) -> Result<EventStream, EventError> {
    parse_aedat2_with(bytes, AedatOptions::default())
}

pub fn parse_aedat2_with(bytes: &[u8], opts: AedatOptions) -> Result<EventStream, EventError> {
    let start = skip_header(bytes)?;
    let payload = &bytes[start..];
    if !payload.len().is_multiple_of(RECORD_LEN) {
        return Err(EventError::TruncatedRecord {
            len: payload.len(),
            record: RECORD_LEN,
        });
    }
    let mut events = Vec::with_capacity(payload.len() / RECORD_LEN);
    for rec in payload.chunks_exact(RECORD_LEN) {
        let addr = u32::from_be_bytes([rec[0], rec[1], rec[2], rec[3]]);
        let t = u32::from_be_bytes([rec[4], rec[5], rec[6], rec[7]]) as u64;
        let x = ((addr >> 1) & 0x7F) as u16;
        let y = ((addr >> 8) & 0x7F) as u16;
        let bit = addr & 1 == 1;
        let on = match opts.on_bit {
            OnBit::Zero => !bit,
            OnBit::One => bit,
        };
        events.push(Event::new(t, x, y, Polarity::from_bit(on)));
    }
    EventStream::new(DVS128_SIZE, DVS128_SIZE, events)
}

/// Returns the offset of the first record. Header lines start with `#`, end
/// with `\n`, and may only contain printable ASCII (plus `\t`/`\r`).
fn skip_header(bytes: &[u8]) -> Result<usize, EventError> {
    let mut pos = 0;
    while pos < bytes.len() && bytes[pos] == b'#' {
        let end = match bytes[pos..].iter().position(|&b| b == b'\n') {
            Some(rel) => pos + rel,
            None => {
                return Err(EventError::MalformedHeader {
                    offset: pos,
                    reason: "header line is not newline-terminated".into(),
                })
            }
        };
        let line = &bytes[pos..end];
        if let Some(bad) = line
            .iter()
            .position(|&b| !(b.is_ascii_graphic() || b == b' ' || b == b'\t' || b == b'\r'))
        {
            return Err(EventError::MalformedHeader {
                offset: pos + bad,
                reason: format!("non-text byte 0x{:02x} in header line", line[bad]),
            });
        }
        if let Some(version) = line.strip_prefix(b"#!AER-DAT") {
            if !version.starts_with(b"2") {
                return Err(EventError::MalformedHeader {
                    offset: pos,
                    reason: format!(
                        "unsupported AEDAT version {}",
                        String::from_utf8_lossy(version).trim()
                    ),
                });
            }
        }
        pos = end + 1;
    }
    Ok(pos)
}
