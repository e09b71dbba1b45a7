use std::fmt::Write;

use super::{Event, EventError, EventStream, Polarity};

/// Parses the debug format: one `t,x,y,p` event per line, decimal fields.
/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn parse_csv_events(text: &str, width: u16, height: u16) -> Result<EventStream, EventError> {
    let mut events = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(EventError::ParseError {
                line: lineno,
                reason: format!("expected 4 fields t,x,y,p, found {}", fields.len()),
            });
        }
        let field = |idx: usize, name: &str| -> Result<u64, EventError> {
            fields[idx]
                .parse::<u64>()
                .map_err(|e| EventError::ParseError {
                    line: lineno,
                    reason: format!("bad {name} {:?}: {e}", fields[idx]),
                })
        };
        let t = field(0, "t")?;
        let x = field(1, "x")?;
        let y = field(2, "y")?;
        let polarity = match field(3, "p")? {
            0 => Polarity::Off,
            1 => Polarity::On,
            p => {
                return Err(EventError::ParseError {
                    line: lineno,
                    reason: format!("polarity must be 0 or 1, found {p}"),
                })
            }
        };
        if x >= width as u64 || y >= height as u64 {
            return Err(EventError::CoordinateOutOfRange {
                index: events.len(),
                x: x.min(u32::MAX as u64) as u32,
                y: y.min(u32::MAX as u64) as u32,
                width,
                height,
            });
        }
        events.push(Event::new(t, x as u16, y as u16, polarity));
    }
    EventStream::new(width, height, events)
}

pub fn write_csv_events(stream: &EventStream) -> String {
    let mut out = String::with_capacity(stream.len() * 16);
    for e in stream.events() {
        // Writing to a String cannot fail.
        let _ = writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.polarity.as_u8());
    }
    out
}
