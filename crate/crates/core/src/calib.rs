//! Contrast-threshold calibration from frames and inter-frame event counts.
//!
//! Between two consecutive frames the events at a pixel should account for
//! the observed log-intensity change: `dL ~ c_on * N_on - c_off * N_off`.
//! Collecting that relation over every event-bearing pixel and frame pair
//! gives an overdetermined linear system in the two thresholds, solved by
//! least squares. Pixels whose frame values sit in the saturation ramps of
//! the log range are excluded; their readings are unreliable for the same
//! reason the adaptive gain distrusts them.

use crate::config::Config;
use crate::io::Dataset;
use crate::{to_log, Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct CalibrationResult {
    pub c_on: f64,
    pub c_off: f64,
    /// Root-mean-square residual of the fit, log units.
    pub residual: f64,
    /// Frame pairs that contributed at least one observation.
    pub n_intervals: usize,
}

/// Accumulated second moments of the observation set; enough to solve the
/// normal equations and evaluate the residual without storing observations.
#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    on_on: f64,
    on_off: f64,
    off_off: f64,
    on_dl: f64,
    off_dl: f64,
    dl_dl: f64,
    n_obs: usize,
    n_intervals: usize,
}

impl Moments {
    fn add(&mut self, n_on: f64, n_off: f64, dl: f64) {
        self.on_on += n_on * n_on;
        self.on_off += n_on * n_off;
        self.off_off += n_off * n_off;
        self.on_dl += n_on * dl;
        self.off_dl += n_off * dl;
        self.dl_dl += dl * dl;
        self.n_obs += 1;
    }
}

fn solve(m: &Moments) -> Result<CalibrationResult> {
    if m.n_obs == 0 {
        return Err(Error::Calibration(
            "no usable observations (no events between any frame pair)".into(),
        ));
    }
    if m.on_on == 0.0 {
        return Err(Error::Calibration(
            "c_on is unidentifiable: no ON events in any frame interval".into(),
        ));
    }
    if m.off_off == 0.0 {
        return Err(Error::Calibration(
            "c_off is unidentifiable: no OFF events in any frame interval".into(),
        ));
    }
    let det = m.on_on * m.off_off - m.on_off * m.on_off;
    if det <= 1e-12 * m.on_on * m.off_off {
        return Err(Error::Calibration(
            "degenerate system: ON and OFF counts are collinear".into(),
        ));
    }
    let c_on = (m.on_dl * m.off_off - m.on_off * m.off_dl) / det;
    let c_off = (m.on_off * m.on_dl - m.on_on * m.off_dl) / det;
    if !(c_on > 0.0 && c_off > 0.0) {
        return Err(Error::Calibration(format!(
            "non-positive solution c_on = {c_on}, c_off = {c_off}"
        )));
    }
    let sq = m.dl_dl - 2.0 * c_on * m.on_dl + 2.0 * c_off * m.off_dl + c_on * c_on * m.on_on
        - 2.0 * c_on * c_off * m.on_off
        + c_off * c_off * m.off_off;
    let residual = (sq.max(0.0) / m.n_obs as f64).sqrt();
    Ok(CalibrationResult {
        c_on,
        c_off,
        residual,
        n_intervals: m.n_intervals,
    })
}

/// Estimate ON/OFF contrast thresholds from a dataset's frames and events.
/// `config` supplies the log conversion offset and the saturation band used
/// for exclusion.
pub fn calibrate(dataset: &Dataset, config: &Config) -> Result<CalibrationResult> {
    if dataset.frames.len() < 2 {
        return Err(Error::Calibration(format!(
            "need at least 2 frames, got {}",
            dataset.frames.len()
        )));
    }
    if dataset.events.is_empty() {
        return Err(Error::Calibration("no events".into()));
    }
    let gain = config.gain_params()?;
    let n_px = (dataset.width as usize) * (dataset.height as usize);

    let mut moments = Moments::default();
    let mut n_on = vec![0u32; n_px];
    let mut n_off = vec![0u32; n_px];
    let mut touched: Vec<usize> = Vec::new();

    let mut log_a = to_log(&dataset.frames[0], config.log_offset)?;
    for j in 1..dataset.frames.len() {
        let log_b = to_log(&dataset.frames[j], config.log_offset)?;
        let (t_a, t_b) = (log_a.t, log_b.t);
        // Events in [t_a, t_b); a frame is applied before events sharing its
        // timestamp, so boundary events belong to the following interval.
        let lo = dataset.events.partition_point(|e| e.t < t_a);
        let hi = dataset.events.partition_point(|e| e.t < t_b);
        for ev in &dataset.events[lo..hi] {
            let idx = ev.y as usize * dataset.width as usize + ev.x as usize;
            if n_on[idx] == 0 && n_off[idx] == 0 {
                touched.push(idx);
            }
            match ev.polarity {
                crate::Polarity::On => n_on[idx] += 1,
                crate::Polarity::Off => n_off[idx] += 1,
            }
        }
        let mut used = false;
        for &idx in &touched {
            let (va, vb) = (log_a.values[idx], log_b.values[idx]);
            let saturated = |v: f64| v < gain.l1 || v > gain.l2;
            if !saturated(va) && !saturated(vb) {
                moments.add(n_on[idx] as f64, n_off[idx] as f64, vb - va);
                used = true;
            }
            n_on[idx] = 0;
            n_off[idx] = 0;
        }
        if used {
            moments.n_intervals += 1;
        }
        touched.clear();
        log_a = log_b;
    }

    solve(&moments)
}
