//! Event streams to tri-level frame stacks.
//!
//! A recording is split into `T` time windows. Each window becomes one 8-bit
//! frame with background [`BACKGROUND`]; pixels hit by an ON event become
//! [`ON_VALUE`] and pixels hit by an OFF event become [`OFF_VALUE`].

mod ncfs;
mod oracle;

pub use self::ncfs::{read_framestack, write_framestack, NcfsError};
pub use self::oracle::project_oracle;

use thiserror::Error;

use crate::event_io::{EventStream, Polarity};

pub const BACKGROUND: u8 = 127;
pub const ON_VALUE: u8 = 255;
pub const OFF_VALUE: u8 = 0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProjectionError {
    #[error("timesteps must be at least 1")]
    ZeroTimesteps,
}

/// How the recording is cut into windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum WindowPolicy {
    /// Windows of (nearly) equal duration over `[t_min, t_max]`.
    #[default]
    EqualDuration,
    /// Contiguous runs of `ceil(N / T)` events; the last run may be shorter.
    EqualCount,
}

/// Resolution when ON and OFF events hit one pixel inside one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum OverwritePolicy {
    #[default]
    LastEventWins,
    OnDominates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProjectionConfig {
    pub timesteps: usize,
    pub window: WindowPolicy,
    pub overwrite: OverwritePolicy,
}

impl ProjectionConfig {
    pub fn new(timesteps: usize) -> Self {
        ProjectionConfig {
            timesteps,
            window: WindowPolicy::default(),
            overwrite: OverwritePolicy::default(),
        }
    }

    pub fn with_window(mut self, window: WindowPolicy) -> Self {
        self.window = window;
        self
    }

    pub fn with_overwrite(mut self, overwrite: OverwritePolicy) -> Self {
        self.overwrite = overwrite;
        self
    }
}

/// `T` frames of `height x width` pixels, frame-major then row-major, with the
/// half-open time window `[t_start, t_end)` each frame was built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameStack {
    timesteps: usize,
    height: usize,
    width: usize,
    pixels: Vec<u8>,
    windows: Vec<(u64, u64)>,
}

impl FrameStack {
    /// All-background stack.
    pub fn background(
        timesteps: usize,
        height: usize,
        width: usize,
        windows: Vec<(u64, u64)>,
    ) -> Self {
        assert_eq!(windows.len(), timesteps);
        FrameStack {
            timesteps,
            height,
            width,
            pixels: vec![BACKGROUND; timesteps * height * width],
            windows,
        }
    }

    /// Checked constructor: sizes must agree and pixels must be tri-level.
    pub fn new(
        timesteps: usize,
        height: usize,
        width: usize,
        pixels: Vec<u8>,
        windows: Vec<(u64, u64)>,
    ) -> Result<Self, NcfsError> {
        let expected = timesteps * height * width;
        if pixels.len() != expected || windows.len() != timesteps {
            return Err(NcfsError::DimensionMismatch {
                expected,
                found: pixels.len(),
            });
        }
        if let Some(index) = pixels
            .iter()
            .position(|&p| p != BACKGROUND && p != ON_VALUE && p != OFF_VALUE)
        {
            return Err(NcfsError::InvalidPixel {
                index,
                value: pixels[index],
            });
        }
        Ok(Self::from_parts(timesteps, height, width, pixels, windows))
    }

    pub(crate) fn from_parts(
        timesteps: usize,
        height: usize,
        width: usize,
        pixels: Vec<u8>,
        windows: Vec<(u64, u64)>,
    ) -> Self {
        debug_assert_eq!(pixels.len(), timesteps * height * width);
        debug_assert_eq!(windows.len(), timesteps);
        FrameStack {
            timesteps,
            height,
            width,
            pixels,
            windows,
        }
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn windows(&self) -> &[(u64, u64)] {
        &self.windows
    }

    pub fn frame(&self, i: usize) -> &[u8] {
        let n = self.height * self.width;
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn get(&self, frame: usize, y: usize, x: usize) -> u8 {
        self.pixels[(frame * self.height + y) * self.width + x]
    }

    fn set(&mut self, frame: usize, y: usize, x: usize, v: u8) {
        self.pixels[(frame * self.height + y) * self.width + x] = v;
    }
}

/// Window bounds for a stream, shared by [`project`] and the frame writer.
///
/// Equal-duration: with `D = t_max - t_min + 1`, window `i` is
/// `[t_min + floor(i*D/T), t_min + floor((i+1)*D/T))`. When `t_min == t_max`
/// everything goes to frame 0 and the rest are empty at `t_max + 1`.
///
/// Equal-count: window `i` starts at the timestamp of the first event of run
/// `i` (frame 0 starts at `t_min`) and ends where the next one starts; the last
/// ends at `t_max + 1`. Trailing empty runs get `[t_max + 1, t_max + 1)`. When
/// a run boundary splits equal timestamps, assignment follows the run, not the
/// bounds.
pub fn window_bounds(stream: &EventStream, cfg: &ProjectionConfig) -> Vec<(u64, u64)> {
    let t = cfg.timesteps;
    let Some((t_min, t_max)) = stream.time_span() else {
        return vec![(0, 0); t];
    };
    let end = t_max + 1;
    if t_min == t_max {
        let mut w = vec![(end, end); t];
        w[0] = (t_min, end);
        return w;
    }
    match cfg.window {
        WindowPolicy::EqualDuration => {
            let d = (t_max - t_min) as u128 + 1;
            let edge = |i: usize| t_min + ((i as u128 * d) / t as u128) as u64;
            (0..t).map(|i| (edge(i), edge(i + 1))).collect()
        }
        WindowPolicy::EqualCount => {
            let events = stream.events();
            let run = events.len().div_ceil(t);
            let starts: Vec<u64> = (0..t)
                .map(|i| {
                    if i == 0 {
                        t_min
                    } else {
                        events.get(i * run).map_or(end, |e| e.t)
                    }
                })
                .collect();
            (0..t)
                .map(|i| (starts[i], starts.get(i + 1).copied().unwrap_or(end)))
                .collect()
        }
    }
}

/// Projects a canonical stream onto `cfg.timesteps` tri-level frames.
///
/// An empty stream is not an error: every frame is background.
pub fn project(
    stream: &EventStream,
    cfg: &ProjectionConfig,
) -> Result<FrameStack, ProjectionError> {
    if cfg.timesteps == 0 {
        return Err(ProjectionError::ZeroTimesteps);
    }
    let windows = window_bounds(stream, cfg);
    let mut fs = FrameStack::background(
        cfg.timesteps,
        stream.height() as usize,
        stream.width() as usize,
        windows,
    );
    let events = stream.events();
    if events.is_empty() {
        return Ok(fs);
    }
    let degenerate = events[0].t == events[events.len() - 1].t;
    let run = events.len().div_ceil(cfg.timesteps);
    // Windows are sorted and events are sorted, so one forward sweep suffices.
    let mut frame = 0;
    for (j, e) in events.iter().enumerate() {
        let target = if degenerate {
            0
        } else {
            match cfg.window {
                WindowPolicy::EqualCount => j / run,
                WindowPolicy::EqualDuration => {
                    while e.t >= fs.windows[frame].1 {
                        frame += 1;
                    }
                    frame
                }
            }
        };
        let (x, y) = (e.x as usize, e.y as usize);
        let value = match e.polarity {
            Polarity::On => ON_VALUE,
            Polarity::Off => OFF_VALUE,
        };
        match cfg.overwrite {
            OverwritePolicy::LastEventWins => fs.set(target, y, x, value),
            OverwritePolicy::OnDominates => {
                if fs.get(target, y, x) != ON_VALUE {
                    fs.set(target, y, x, value);
                }
            }
        }
    }
    Ok(fs)
}
