use super::{FrameStack, OverwritePolicy, ProjectionConfig, ProjectionError, WindowPolicy};
use super::{BACKGROUND, OFF_VALUE, ON_VALUE};
use crate::event_io::{EventStream, Polarity};

/// Brute-force reference for [`super::project`].
///
/// For every frame and every pixel it rescans the whole event list, deciding
/// window membership from the event alone (no shared bounds table, no sweep).
pub fn project_oracle(
    stream: &EventStream,
    cfg: &ProjectionConfig,
) -> Result<FrameStack, ProjectionError> {
    let t_count = cfg.timesteps;
    if t_count == 0 {
        return Err(ProjectionError::ZeroTimesteps);
    }
    let (h, w) = (stream.height() as usize, stream.width() as usize);
    let events = stream.events();
    let n = events.len();

    let t_min = events.iter().map(|e| e.t).min();
    let t_max = events.iter().map(|e| e.t).max();

    // in_window(i, j): does event j belong to frame i?
    let in_window = |i: usize, j: usize| -> bool {
        let (lo, hi) = (t_min.unwrap(), t_max.unwrap());
        if lo == hi {
            return i == 0;
        }
        match cfg.window {
            WindowPolicy::EqualDuration => {
                // off >= floor(i*D/T)      <=>  T*(off + 1) > i*D
                // off <  floor((i+1)*D/T)  <=>  T*(off + 1) <= (i+1)*D
                let d = (hi - lo) as u128 + 1;
                let off = (events[j].t - lo) as u128;
                let tt = t_count as u128;
                let key = tt * (off + 1);
                key > i as u128 * d && key <= (i as u128 + 1) * d
            }
            WindowPolicy::EqualCount => {
                let run = n.div_ceil(t_count);
                j >= i * run && j < (i + 1) * run
            }
        }
    };

    let mut pixels = vec![BACKGROUND; t_count * h * w];
    for i in 0..t_count {
        for y in 0..h {
            for x in 0..w {
                let mut value = BACKGROUND;
                let mut seen_on = false;
                let mut seen_off = false;
                for j in 0..n {
                    let e = &events[j];
                    if e.x as usize != x || e.y as usize != y || !in_window(i, j) {
                        continue;
                    }
                    match e.polarity {
                        Polarity::On => {
                            seen_on = true;
                            value = ON_VALUE;
                        }
                        Polarity::Off => {
                            seen_off = true;
                            value = OFF_VALUE;
                        }
                    }
                }
                if cfg.overwrite == OverwritePolicy::OnDominates {
                    value = if seen_on {
                        ON_VALUE
                    } else if seen_off {
                        OFF_VALUE
                    } else {
                        BACKGROUND
                    };
                }
                pixels[(i * h + y) * w + x] = value;
            }
        }
    }

    let windows = match (t_min, t_max) {
        (None, _) | (_, None) => vec![(0, 0); t_count],
        (Some(lo), Some(hi)) if lo == hi => (0..t_count)
            .map(|i| {
                if i == 0 {
                    (lo, hi + 1)
                } else {
                    (hi + 1, hi + 1)
                }
            })
            .collect(),
        (Some(lo), Some(hi)) => match cfg.window {
            WindowPolicy::EqualDuration => {
                let d = (hi - lo + 1) as f64;
                // Exact for the test ranges; the fast path uses integer math.
                (0..t_count)
                    .map(|i| {
                        let a = lo + (i as f64 * d / t_count as f64).floor() as u64;
                        let b = lo + ((i + 1) as f64 * d / t_count as f64).floor() as u64;
                        (a, b)
                    })
                    .collect()
            }
            WindowPolicy::EqualCount => {
                let run = n.div_ceil(t_count);
                let first_t = |i: usize| -> u64 {
                    if i == 0 {
                        lo
                    } else if i * run < n {
                        events[i * run].t
                    } else {
                        hi + 1
                    }
                };
                (0..t_count)
                    .map(|i| {
                        (
                            first_t(i),
                            if i + 1 == t_count {
                                hi + 1
                            } else {
                                first_t(i + 1)
                            },
                        )
                    })
                    .collect()
            }
        },
    };
    Ok(FrameStack::from_parts(t_count, h, w, pixels, windows))
}
