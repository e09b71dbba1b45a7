use super::{Event, EventError, EventStream, Polarity};

pub const NMNIST_WIDTH: u16 = 34;
pub const NMNIST_HEIGHT: u16 = 34;

const RECORD_LEN: usize = 5;

/// Decodes an N-MNIST (ATIS) `.bin` recording.
///
/// Record layout, 40 bits: `x:8 | y:8 | polarity:1 | timestamp:23` with the
/// timestamp big-endian in microseconds. The 23-bit counter wraps after about
/// 8.4 s; recordings are ~300 ms so the wrap is not unwound.
pub fn parse_nmnist_bin(bytes: &[u8]) -> Result<EventStream, EventError> {
    if !bytes.len().is_multiple_of(RECORD_LEN) {
        return Err(EventError::TruncatedRecord {
            len: bytes.len(),
            record: RECORD_LEN,
        });
    }
    let mut events = Vec::with_capacity(bytes.len() / RECORD_LEN);
    for (index, rec) in bytes.chunks_exact(RECORD_LEN).enumerate() {
        let x = rec[0];
        let y = rec[1];
        if x as u16 >= NMNIST_WIDTH || y as u16 >= NMNIST_HEIGHT {
            return Err(EventError::CoordinateOutOfRange {
                index,
                x: x as u32,
                y: y as u32,
                width: NMNIST_WIDTH,
                height: NMNIST_HEIGHT,
            });
        }
        let polarity = Polarity::from_bit(rec[2] & 0x80 != 0);
        let t = (((rec[2] & 0x7F) as u64) << 16) | ((rec[3] as u64) << 8) | rec[4] as u64;
        events.push(Event::new(t, x as u16, y as u16, polarity));
    }
    EventStream::new(NMNIST_WIDTH, NMNIST_HEIGHT, events)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input() {
        let s = parse_nmnist_bin(&[]).unwrap();
        assert!(s.is_empty());
        assert_eq!((s.width(), s.height()), (34, 34));
    }

    #[test]
    fn single_record() {
        let s = parse_nmnist_bin(&[0x03, 0x05, 0x80, 0x00, 0x0A]).unwrap();
        assert_eq!(s.events(), &[Event::new(10, 3, 5, Polarity::On)]);
    }

    #[test]
    fn max_timestamp_and_off() {
        let s = parse_nmnist_bin(&[33, 33, 0x7F, 0xFF, 0xFF]).unwrap();
        assert_eq!(
            s.events(),
            &[Event::new((1 << 23) - 1, 33, 33, Polarity::Off)]
        );
    }

    #[test]
    fn out_of_range_x() {
        let bytes = [0x03, 0x05, 0x80, 0x00, 0x0A, 0xFF, 0x00, 0x00, 0x00, 0x00];
        assert!(matches!(
            parse_nmnist_bin(&bytes),
            Err(EventError::CoordinateOutOfRange {
                index: 1,
                x: 255,
                ..
            })
        ));
    }

    #[test]
    fn truncated() {
        assert!(matches!(
            parse_nmnist_bin(&[1, 2, 3, 4]),
            Err(EventError::TruncatedRecord { len: 4, record: 5 })
        ));
    }

    #[test]
    fn output_is_sorted() {
        let bytes = [1, 1, 0x00, 0x00, 0x09, 2, 2, 0x80, 0x00, 0x03];
        let s = parse_nmnist_bin(&bytes).unwrap();
        assert_eq!(s.events()[0].t, 3);
        assert_eq!(s.events()[1].t, 9);
    }
}
