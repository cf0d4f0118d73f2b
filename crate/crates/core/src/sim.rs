//! Synthetic data generation: turn a high-rate ground-truth frame sequence
//! into an event stream plus degraded low-rate input frames.
//!
//! Event synthesis interpolates log intensity linearly between consecutive
//! frames and emits an event at the exact crossing time whenever the
//! interpolant exceeds the per-pixel reference level by one contrast
//! threshold; the reference then steps by exactly that threshold. Crossing
//! times are closed-form, so there is no time-step parameter anywhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::event::{Event, Frame, Polarity};
use crate::{to_log, Error, Result};

/// Tunables of the ground-truth degradation pipeline.
#[derive(Clone, Debug)]
pub struct SimulationConfig {
    /// Log-intensity step per ON event.
    pub c_on: f64,
    /// Log-intensity step per OFF event.
    pub c_off: f64,
    /// Spurious events to add, as a fraction of the clean count, in [0, 1).
    pub noise_fraction: f64,
    /// Rate at which degraded frames are kept, Hz.
    pub subsample_rate: f64,
    /// Latency added to every retained frame timestamp, seconds.
    pub frame_delay: f64,
    /// Fraction of the intensity range clipped at each end, in [0, 0.5).
    pub truncation_fraction: f64,
    /// Offset guarding `ln 0` in the linear -> log conversion.
    pub log_offset: f64,
    pub rng_seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> SimulationConfig {
        SimulationConfig {
            c_on: 0.1,
            c_off: 0.1,
            noise_fraction: 0.05,
            subsample_rate: 20.0,
            frame_delay: 0.05,
            truncation_fraction: 0.25,
            log_offset: 0.01,
            rng_seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Config(msg));
        if !(self.c_on.is_finite() && self.c_on > 0.0) {
            return err(format!("c_on must be > 0, got {}", self.c_on));
        }
        if !(self.c_off.is_finite() && self.c_off > 0.0) {
            return err(format!("c_off must be > 0, got {}", self.c_off));
        }
        if !(self.noise_fraction >= 0.0 && self.noise_fraction < 1.0) {
            return err(format!(
                "noise_fraction must be in [0, 1), got {}",
                self.noise_fraction
            ));
        }
        if !(self.subsample_rate.is_finite() && self.subsample_rate > 0.0) {
            return err(format!(
                "subsample_rate must be > 0, got {}",
                self.subsample_rate
            ));
        }
        if !(self.frame_delay.is_finite() && self.frame_delay >= 0.0) {
            return err(format!(
                "frame_delay must be >= 0, got {}",
                self.frame_delay
            ));
        }
        if !(self.truncation_fraction >= 0.0 && self.truncation_fraction < 0.5) {
            return err(format!(
                "truncation_fraction must be in [0, 0.5), got {}",
                self.truncation_fraction
            ));
        }
        if !(self.log_offset.is_finite() && self.log_offset > 0.0) {
            return err(format!("log_offset must be > 0, got {}", self.log_offset));
        }
        Ok(())
    }
}

fn check_sequence(frames: &[Frame]) -> Result<()> {
    if frames.len() < 2 {
        return Err(Error::Dataset(format!(
            "need at least 2 frames, got {}",
            frames.len()
        )));
    }
    for pair in frames.windows(2) {
        if pair[1].t <= pair[0].t {
            return Err(Error::Dataset(format!(
                "frame timestamps must strictly increase, got {} -> {}",
                pair[0].t, pair[1].t
            )));
        }
    }
    let (w, h) = (frames[0].width, frames[0].height);
    for frame in frames {
        if frame.width != w || frame.height != h {
            return Err(Error::DimensionMismatch {
                expected_width: w,
                expected_height: h,
                width: frame.width,
                height: frame.height,
            });
        }
    }
    if w > u16::MAX as u32 + 1 || h > u16::MAX as u32 + 1 {
        return Err(Error::Dataset(format!(
            "sensor {w}x{h} exceeds the supported event coordinate range"
        )));
    }
    Ok(())
}

/// All threshold crossings of one pixel's piecewise-linear log track.
///
/// The reference is kept as `l0 + n_on*c_on - n_off*c_off` with integer
/// counters, so it never accumulates floating-point drift.
fn pixel_events(
    idx: usize,
    x: u16,
    y: u16,
    times: &[f64],
    logs: &[Vec<f64>],
    c_on: f64,
    c_off: f64,
    out: &mut Vec<Event>,
) {
    let l0 = logs[0][idx];
    let mut n_on: i64 = 0;
    let mut n_off: i64 = 0;
    let reference = |n_on: i64, n_off: i64| l0 + n_on as f64 * c_on - n_off as f64 * c_off;
    for j in 0..times.len() - 1 {
        let (la, lb) = (logs[j][idx], logs[j + 1][idx]);
        let (ta, tb) = (times[j], times[j + 1]);
        if lb > la {
            loop {
                let next = reference(n_on + 1, n_off);
                if next >= lb {
                    break;
                }
                let t = ta + (next - la) / (lb - la) * (tb - ta);
                out.push(Event::new(t, x, y, Polarity::On));
                n_on += 1;
            }
        } else if lb < la {
            loop {
                let next = reference(n_on, n_off + 1);
                if next <= lb {
                    break;
                }
                let t = ta + (next - la) / (lb - la) * (tb - ta);
                out.push(Event::new(t, x, y, Polarity::Off));
                n_off += 1;
            }
        }
    }
}

fn collect_events(
    width: usize,
    height: usize,
    times: &[f64],
    logs: &[Vec<f64>],
    c_on: f64,
    c_off: f64,
    parallel: bool,
) -> Vec<Event> {
    let per_pixel = |idx: usize| {
        let (x, y) = ((idx % width) as u16, (idx / width) as u16);
        let mut out = Vec::new();
        pixel_events(idx, x, y, times, logs, c_on, c_off, &mut out);
        out
    };
    let mut events: Vec<Event> = if parallel {
        #[cfg(feature = "parallel")]
        {
            (0..width * height)
                .into_par_iter()
                .map(per_pixel)
                .collect::<Vec<_>>()
                .into_iter()
                .flatten()
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..width * height).flat_map(per_pixel).collect()
        }
    } else {
        (0..width * height).flat_map(per_pixel).collect()
    };
    // Stable sort: same-timestamp events keep row-major pixel order.
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    events
}

/// Convert a ground-truth frame sequence into the event stream an idealized
/// contrast sensor would emit. Output is sorted by timestamp, stable within
/// equal stamps by row-major pixel order.
pub fn frames_to_events(frames: &[Frame], config: &SimulationConfig) -> Result<Vec<Event>> {
    config.validate()?;
    check_sequence(frames)?;
    let logs: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| Ok(to_log(f, config.log_offset)?.values))
        .collect::<Result<_>>()?;
    let times: Vec<f64> = frames.iter().map(|f| f.t).collect();
    Ok(collect_events(
        frames[0].width as usize,
        frames[0].height as usize,
        &times,
        &logs,
        config.c_on,
        config.c_off,
        cfg!(feature = "parallel"),
    ))
}

/// Single-threaded variant of [`frames_to_events`].
pub fn frames_to_events_seq(frames: &[Frame], config: &SimulationConfig) -> Result<Vec<Event>> {
    config.validate()?;
    check_sequence(frames)?;
    let logs: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| Ok(to_log(f, config.log_offset)?.values))
        .collect::<Result<_>>()?;
    let times: Vec<f64> = frames.iter().map(|f| f.t).collect();
    Ok(collect_events(
        frames[0].width as usize,
        frames[0].height as usize,
        &times,
        &logs,
        config.c_on,
        config.c_off,
        false,
    ))
}

/// Add `round(noise_fraction * N)` spurious events, uniform over pixels, the
/// stream's time span and polarity, then re-sort. Deterministic for a fixed
/// `rng_seed`.
pub fn inject_noise(
    events: Vec<Event>,
    width: u32,
    height: u32,
    config: &SimulationConfig,
) -> Result<Vec<Event>> {
    config.validate()?;
    if width == 0 || height == 0 || width > u16::MAX as u32 + 1 || height > u16::MAX as u32 + 1 {
        return Err(Error::Dataset(format!("invalid sensor {width}x{height}")));
    }
    let n_noise = (config.noise_fraction * events.len() as f64).round() as usize;
    if n_noise == 0 {
        return Ok(events);
    }
    let t0 = events.first().map(|e| e.t).unwrap_or(0.0);
    let t1 = events.last().map(|e| e.t).unwrap_or(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut all = events;
    all.reserve(n_noise);
    for _ in 0..n_noise {
        let x = rng.gen_range(0..width) as u16;
        let y = rng.gen_range(0..height) as u16;
        let t = rng.gen_range(t0..=t1);
        let polarity = if rng.gen_bool(0.5) {
            Polarity::On
        } else {
            Polarity::Off
        };
        all.push(Event::new(t, x, y, polarity));
    }
    all.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(all)
}

/// Degrade a ground-truth sequence into what a slow, low-dynamic-range frame
/// camera would deliver: intensities clipped to the central band, frames kept
/// on a uniform grid at `subsample_rate`, and timestamps delayed by
/// `frame_delay`.
pub fn degrade_frames(frames: &[Frame], config: &SimulationConfig) -> Result<Vec<Frame>> {
    config.validate()?;
    check_sequence(frames)?;
    let t0 = frames[0].t;
    let t_end = frames[frames.len() - 1].t;
    let gt_rate = (frames.len() - 1) as f64 / (t_end - t0);
    if config.subsample_rate > gt_rate {
        return Err(Error::Config(format!(
            "subsample rate {} Hz exceeds the ground-truth rate {:.3} Hz",
            config.subsample_rate, gt_rate
        )));
    }
    let lo = (config.truncation_fraction * 255.0).round() as u8;
    let hi = ((1.0 - config.truncation_fraction) * 255.0).round() as u8;

    let times: Vec<f64> = frames.iter().map(|f| f.t).collect();
    let mut picked: Vec<usize> = Vec::new();
    let mut k = 0u64;
    loop {
        let tg = t0 + k as f64 / config.subsample_rate;
        if tg > t_end {
            break;
        }
        // Nearest ground-truth frame; ties toward the earlier one.
        let i = match times.binary_search_by(|t| t.total_cmp(&tg)) {
            Ok(i) => i,
            Err(i) => {
                if i == 0 {
                    0
                } else if i == times.len() {
                    times.len() - 1
                } else if (tg - times[i - 1]) <= (times[i] - tg) {
                    i - 1
                } else {
                    i
                }
            }
        };
        if picked.last() != Some(&i) {
            picked.push(i);
        }
        k += 1;
    }

    Ok(picked
        .into_iter()
        .map(|i| {
            let src = &frames[i];
            Frame {
                t: src.t + config.frame_delay,
                width: src.width,
                height: src.height,
                pixels: src.pixels.iter().map(|&p| p.clamp(lo, hi)).collect(),
            }
        })
        .collect())
}
