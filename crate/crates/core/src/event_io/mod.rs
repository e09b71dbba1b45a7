//! Canonical in-memory event streams and the dataset parsers that produce them.
//!
//! Every parser returns a stream that is sorted by timestamp (stable, so events
//! sharing a timestamp keep file order) and whose coordinates are inside the
//! sensor. Out-of-range coordinates are reported, never clamped.

mod aedat;
mod csv;
mod nmnist;

pub use self::aedat::{parse_aedat2, parse_aedat2_with, AedatOptions, OnBit, DVS128_SIZE};
pub use self::csv::{parse_csv_events, write_csv_events};
pub use self::nmnist::{parse_nmnist_bin, NMNIST_HEIGHT, NMNIST_WIDTH};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EventError {
    #[error("truncated record: {len} payload bytes is not a multiple of {record} bytes")]
    TruncatedRecord { len: usize, record: usize },
    #[error("event #{index} at ({x}, {y}) lies outside the {width}x{height} sensor")]
    CoordinateOutOfRange {
        index: usize,
        x: u32,
        y: u32,
        width: u16,
        height: u16,
    },
    #[error("malformed header at byte {offset}: {reason}")]
    MalformedHeader { offset: usize, reason: String },
    #[error("line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("event #{index} has timestamp u64::MAX, which cannot close a window")]
    TimestampOverflow { index: usize },
}

/// Sign of the brightness change that triggered an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Polarity {
    Off = 0,
    On = 1,
}

impl Polarity {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Polarity::On
        } else {
            Polarity::Off
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

/// One asynchronous pixel report. Timestamps are microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, polarity: Polarity) -> Self {
        Event { t, x, y, polarity }
    }
}

/// A recording: sensor geometry plus its events in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    width: u16,
    height: u16,
    events: Vec<Event>,
    pub label: Option<usize>,
}

impl EventStream {
    /// Validates bounds and stably sorts by timestamp.
    pub fn new(width: u16, height: u16, mut events: Vec<Event>) -> Result<Self, EventError> {
        if let Some((index, e)) = events
            .iter()
            .enumerate()
            .find(|(_, e)| e.x >= width || e.y >= height)
        {
            return Err(EventError::CoordinateOutOfRange {
                index,
                x: e.x as u32,
                y: e.y as u32,
                width,
                height,
            });
        }
        if let Some(index) = events.iter().position(|e| e.t == u64::MAX) {
            return Err(EventError::TimestampOverflow { index });
        }
        // `sort_by_key` is stable.
        events.sort_by_key(|e| e.t);
        Ok(EventStream {
            width,
            height,
            events,
            label: None,
        })
    }

    pub fn empty(width: u16, height: u16) -> Self {
        EventStream {
            width,
            height,
            events: Vec::new(),
            label: None,
        }
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// `(t_min, t_max)` of the recording, `None` when empty.
    pub fn time_span(&self) -> Option<(u64, u64)> {
        match (self.events.first(), self.events.last()) {
            (Some(a), Some(b)) => Some((a.t, b.t)),
            _ => None,
        }
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}
