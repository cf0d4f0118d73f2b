//! Per-pixel, asynchronous complementary filter.
//!
//! The filter maintains a continuous-time log-intensity estimate per pixel.
//! Between inputs each pixel obeys a first-order ODE pulling the estimate
//! toward the held reference frame, whose closed-form solution is an
//! exponential blend; an event adds an instantaneous step of one contrast
//! threshold; a new frame replaces the reference (and its gain) without
//! touching the estimate. Pixels are updated lazily: nothing ticks a global
//! clock, a pixel is only advanced by its own events, by frames and by
//! queries.
//!
//! Three modes share the machinery:
//! - `fusion`: the full filter, events plus reference frames.
//! - `events_only`: the reference is pinned to zero, leaving a high-pass
//!   integrator over events.
//! - `direct_integration`: a baseline that sums events onto the latest frame
//!   and resets the estimate wholesale whenever a frame arrives.

use std::fmt;
use std::str::FromStr;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::config::Config;
use crate::event::{Event, LogImage};
use crate::io::Dataset;
use crate::{to_log, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Fusion,
    EventsOnly,
    DirectIntegration,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Fusion => "fusion",
            Mode::EventsOnly => "events_only",
            Mode::DirectIntegration => "direct_integration",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "fusion" => Ok(Mode::Fusion),
            "events_only" => Ok(Mode::EventsOnly),
            "direct_integration" => Ok(Mode::DirectIntegration),
            _ => Err(Error::Config(format!(
                "unknown mode {s:?} (expected fusion, events_only or direct_integration)"
            ))),
        }
    }
}

/// Parameters of the piecewise-linear adaptive gain.
///
/// The gain equals `alpha1` for reference values inside `[l1, l2]` and ramps
/// linearly down to `lambda * alpha1` at `l_min` and `l_max`; values outside
/// `[l_min, l_max]` clamp to the floor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainParams {
    pub alpha1: f64,
    pub lambda: f64,
    pub l_min: f64,
    pub l_max: f64,
    pub l1: f64,
    pub l2: f64,
}

impl GainParams {
    /// Build from the ramp width expressed as a fraction of the log range:
    /// `[l1, l2] = [l_min + k, l_max - k]` with `k = kappa_fraction * (l_max - l_min)`.
    pub fn new(
        alpha1: f64,
        lambda: f64,
        l_min: f64,
        l_max: f64,
        kappa_fraction: f64,
    ) -> Result<GainParams> {
        if !(alpha1.is_finite() && alpha1 >= 0.0) {
            return Err(Error::Config(format!(
                "alpha1 must be finite and non-negative, got {alpha1}"
            )));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Config(format!(
                "lambda must be in [0, 1], got {lambda}"
            )));
        }
        if !(l_min.is_finite() && l_max.is_finite() && l_min < l_max) {
            return Err(Error::Config(format!(
                "log range [{l_min}, {l_max}] is not a valid interval"
            )));
        }
        if !(kappa_fraction >= 0.0 && kappa_fraction < 0.5) {
            return Err(Error::Config(format!(
                "kappa_fraction must be in [0, 0.5), got {kappa_fraction}"
            )));
        }
        let kappa = kappa_fraction * (l_max - l_min);
        Ok(GainParams {
            alpha1,
            lambda,
            l_min,
            l_max,
            l1: l_min + kappa,
            l2: l_max - kappa,
        })
    }

    /// Gain for a reference log-intensity value.
    pub fn alpha_for(&self, l_ref: f64) -> f64 {
        let floor = self.lambda * self.alpha1;
        if !(self.l_min..=self.l_max).contains(&l_ref) {
            return floor;
        }
        if (self.l1..=self.l2).contains(&l_ref) {
            return self.alpha1;
        }
        let rise = (1.0 - self.lambda) * self.alpha1;
        if l_ref < self.l1 {
            floor + rise * (l_ref - self.l_min) / (self.l1 - self.l_min)
        } else {
            floor + rise * (l_ref - self.l_max) / (self.l2 - self.l_max)
        }
    }
}

/// Per-pixel filter memory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelState {
    /// Current log-intensity estimate.
    pub l_hat: f64,
    /// Time of the last update at this pixel.
    pub t_last: f64,
    /// Held reference log intensity from the latest frame.
    pub l_ref: f64,
    /// Crossover gain, rad/s.
    pub alpha: f64,
}

impl PixelState {
    /// Advance to `t` along the inter-input solution. Ordering must have been
    /// checked by the caller. In direct-integration mode the estimate is left
    /// untouched and only the clock advances.
    #[inline]
    fn advance(&mut self, t: f64, direct_integration: bool) {
        if !direct_integration {
            let decay = (-self.alpha * (t - self.t_last)).exp();
            self.l_hat = decay * self.l_hat + (1.0 - decay) * self.l_ref;
        }
        self.t_last = t;
    }
}

/// The whole-image filter state plus its global parameters.
#[derive(Clone, Debug)]
pub struct FilterState {
    width: u32,
    height: u32,
    pixels: Vec<PixelState>,
    c_on: f64,
    c_off: f64,
    mode: Mode,
    gain: GainParams,
}

impl FilterState {
    pub fn new(width: u32, height: u32, mode: Mode, c_on: f64, c_off: f64, gain: GainParams) -> Result<FilterState> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!("empty sensor {width}x{height}")));
        }
        if !(c_on.is_finite() && c_on > 0.0 && c_off.is_finite() && c_off > 0.0) {
            return Err(Error::Config(format!(
                "contrast thresholds must be > 0, got c_on = {c_on}, c_off = {c_off}"
            )));
        }
        let pixel = PixelState {
            l_hat: 0.0,
            t_last: 0.0,
            l_ref: 0.0,
            alpha: gain.alpha1,
        };
        Ok(FilterState {
            width,
            height,
            pixels: vec![pixel; (width as usize) * (height as usize)],
            c_on,
            c_off,
            mode,
            gain,
        })
    }

    pub fn from_config(width: u32, height: u32, config: &Config) -> Result<FilterState> {
        config.validate()?;
        FilterState::new(
            width,
            height,
            config.mode,
            config.c_on,
            config.c_off,
            config.gain_params()?,
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn gain(&self) -> &GainParams {
        &self.gain
    }

    pub fn pixel(&self, x: u32, y: u32) -> &PixelState {
        &self.pixels[(y * self.width + x) as usize]
    }

    fn check_bounds(&self, x: u32, y: u32) -> Result<usize> {
        if x >= self.width || y >= self.height {
            return Err(Error::OutOfBounds {
                x,
                y,
                width: self.width,
                height: self.height,
            });
        }
        Ok((y * self.width + x) as usize)
    }

    /// Advance one pixel to time `t` without any input.
    pub fn decay(&mut self, x: u32, y: u32, t: f64) -> Result<()> {
        let idx = self.check_bounds(x, y)?;
        let di = self.mode == Mode::DirectIntegration;
        let px = &mut self.pixels[idx];
        if t < px.t_last {
            return Err(Error::OutOfOrder {
                x,
                y,
                t,
                t_last: px.t_last,
            });
        }
        px.advance(t, di);
        Ok(())
    }

    /// Apply one event: advance its pixel to the event time, then step the
    /// estimate by the signed contrast threshold. Only that pixel is touched.
    pub fn process_event(&mut self, ev: &Event) -> Result<()> {
        let idx = self.check_bounds(ev.x as u32, ev.y as u32)?;
        let di = self.mode == Mode::DirectIntegration;
        let step = match ev.polarity {
            crate::Polarity::On => self.c_on,
            crate::Polarity::Off => -self.c_off,
        };
        let px = &mut self.pixels[idx];
        if ev.t < px.t_last {
            return Err(Error::OutOfOrder {
                x: ev.x as u32,
                y: ev.y as u32,
                t: ev.t,
                t_last: px.t_last,
            });
        }
        px.advance(ev.t, di);
        px.l_hat += step;
        Ok(())
    }

    fn check_frame(&self, frame: &LogImage) -> Result<()> {
        if self.mode == Mode::EventsOnly {
            return Err(Error::Mode {
                mode: self.mode.as_str(),
                what: "frames cannot be processed; the reference is pinned to zero".into(),
            });
        }
        if frame.width != self.width || frame.height != self.height {
            return Err(Error::DimensionMismatch {
                expected_width: self.width,
                expected_height: self.height,
                width: frame.width,
                height: frame.height,
            });
        }
        for (i, px) in self.pixels.iter().enumerate() {
            if frame.t < px.t_last {
                return Err(Error::OutOfOrder {
                    x: i as u32 % self.width,
                    y: i as u32 / self.width,
                    t: frame.t,
                    t_last: px.t_last,
                });
            }
        }
        Ok(())
    }

    #[inline]
    fn apply_frame_pixel(px: &mut PixelState, value: f64, t: f64, gain: &GainParams, di: bool) {
        // Decay against the old reference first: the previous frame is held
        // until this instant, and the estimate stays continuous across the
        // frame boundary.
        px.advance(t, di);
        px.l_ref = value;
        px.alpha = gain.alpha_for(value);
        if di {
            px.l_hat = value;
        }
    }

    /// Apply a new reference frame (already converted to log intensity):
    /// every pixel is decayed to the frame time against the old reference,
    /// then the reference and its gain are replaced. The estimate itself is
    /// only overwritten in direct-integration mode.
    pub fn process_frame(&mut self, frame: &LogImage) -> Result<()> {
        self.check_frame(frame)?;
        let di = self.mode == Mode::DirectIntegration;
        let gain = self.gain;
        let t = frame.t;
        #[cfg(feature = "parallel")]
        self.pixels
            .par_iter_mut()
            .zip(frame.values.par_iter())
            .for_each(|(px, &v)| Self::apply_frame_pixel(px, v, t, &gain, di));
        #[cfg(not(feature = "parallel"))]
        self.pixels
            .iter_mut()
            .zip(frame.values.iter())
            .for_each(|(px, &v)| Self::apply_frame_pixel(px, v, t, &gain, di));
        Ok(())
    }

    /// Single-threaded variant of [`FilterState::process_frame`]; the default
    /// entry point dispatches on the `parallel` feature.
    pub fn process_frame_seq(&mut self, frame: &LogImage) -> Result<()> {
        self.check_frame(frame)?;
        let di = self.mode == Mode::DirectIntegration;
        let gain = self.gain;
        let t = frame.t;
        self.pixels
            .iter_mut()
            .zip(frame.values.iter())
            .for_each(|(px, &v)| Self::apply_frame_pixel(px, v, t, &gain, di));
        Ok(())
    }

    fn check_query(&self, t: f64) -> Result<()> {
        for (i, px) in self.pixels.iter().enumerate() {
            if t < px.t_last {
                return Err(Error::OutOfOrder {
                    x: i as u32 % self.width,
                    y: i as u32 / self.width,
                    t,
                    t_last: px.t_last,
                });
            }
        }
        Ok(())
    }

    /// Advance every pixel to `t` and return the full image. This is an
    /// update, not a pure read: afterwards every pixel's clock sits at `t`.
    pub fn query(&mut self, t: f64) -> Result<LogImage> {
        self.check_query(t)?;
        let di = self.mode == Mode::DirectIntegration;
        #[cfg(feature = "parallel")]
        let values: Vec<f64> = self
            .pixels
            .par_iter_mut()
            .map(|px| {
                px.advance(t, di);
                px.l_hat
            })
            .collect();
        #[cfg(not(feature = "parallel"))]
        let values: Vec<f64> = self
            .pixels
            .iter_mut()
            .map(|px| {
                px.advance(t, di);
                px.l_hat
            })
            .collect();
        Ok(LogImage {
            t,
            width: self.width,
            height: self.height,
            values,
        })
    }

    /// Single-threaded variant of [`FilterState::query`].
    pub fn query_seq(&mut self, t: f64) -> Result<LogImage> {
        self.check_query(t)?;
        let di = self.mode == Mode::DirectIntegration;
        let values: Vec<f64> = self
            .pixels
            .iter_mut()
            .map(|px| {
                px.advance(t, di);
                px.l_hat
            })
            .collect();
        Ok(LogImage {
            t,
            width: self.width,
            height: self.height,
            values,
        })
    }
}

/// A reconstruction run: the filter driven by a dataset's merged event and
/// frame streams, queryable at caller-chosen times.
pub struct Session<'a> {
    state: FilterState,
    events: &'a [Event],
    frames: Vec<LogImage>,
    next_event: usize,
    next_frame: usize,
    log_offset: f64,
}

impl<'a> Session<'a> {
    /// Set up a run over `dataset`.
    ///
    /// All pixels start at zero with gain `alpha1`. When
    /// `config.init_from_first_frame` is set (and the mode consumes frames),
    /// a first frame at or before the first event seeds both the estimate and
    /// the reference instead.
    pub fn new(dataset: &'a Dataset, config: &Config) -> Result<Session<'a>> {
        config.validate()?;
        if config.mode == Mode::EventsOnly && !dataset.frames.is_empty() {
            return Err(Error::Mode {
                mode: config.mode.as_str(),
                what: "dataset contains frames".into(),
            });
        }
        let mut state = FilterState::from_config(dataset.width, dataset.height, config)?;
        let frames: Vec<LogImage> = dataset
            .frames
            .iter()
            .map(|f| to_log(f, config.log_offset))
            .collect::<Result<_>>()?;
        if config.init_from_first_frame && config.mode != Mode::EventsOnly {
            if let Some(first) = frames.first() {
                let before_events = dataset.events.first().map_or(true, |e| first.t <= e.t);
                if before_events {
                    let gain = state.gain;
                    for (px, &v) in state.pixels.iter_mut().zip(first.values.iter()) {
                        px.l_hat = v;
                        px.l_ref = v;
                        px.alpha = gain.alpha_for(v);
                    }
                }
            }
        }
        Ok(Session {
            state,
            events: &dataset.events,
            frames,
            next_event: 0,
            next_frame: 0,
            log_offset: config.log_offset,
        })
    }

    /// Process every event and frame with timestamp <= `t`. A frame is
    /// applied before events sharing its timestamp, so their steps land on
    /// the fresh reference.
    fn advance(&mut self, t: f64) -> Result<()> {
        loop {
            let ev = self
                .events
                .get(self.next_event)
                .copied()
                .filter(|e| e.t <= t);
            let frame_t = self
                .frames
                .get(self.next_frame)
                .map(|f| f.t)
                .filter(|&ft| ft <= t);
            match (ev, frame_t) {
                (Some(e), Some(ft)) if ft > e.t => {
                    self.state.process_event(&e)?;
                    self.next_event += 1;
                }
                (_, Some(_)) => {
                    self.state.process_frame(&self.frames[self.next_frame])?;
                    self.next_frame += 1;
                }
                (Some(e), None) => {
                    self.state.process_event(&e)?;
                    self.next_event += 1;
                }
                (None, None) => return Ok(()),
            }
        }
    }

    /// Advance the merged streams through `t`, then return the image state at
    /// `t`. Query times must be nondecreasing across calls.
    pub fn query(&mut self, t: f64) -> Result<LogImage> {
        self.advance(t)?;
        self.state.query(t)
    }

    /// Consume the remaining streams without exporting anything.
    pub fn run_to_end(&mut self) -> Result<()> {
        let t_end = f64::MAX;
        self.advance(t_end)
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    pub fn log_offset(&self) -> f64 {
        self.log_offset
    }

    /// Numbers of events and frames consumed so far.
    pub fn processed(&self) -> (usize, usize) {
        (self.next_event, self.next_frame)
    }
}
