//! Filter configuration: a flat `key = value` text format in which every key
//! has a default, so a minimal file only needs to pin the contrast thresholds.

use std::fmt::Write as _;
use std::path::Path;

use crate::filter::{GainParams, Mode};
use crate::{Error, Result};

/// All filter tunables.
///
/// `l_min` / `l_max` bound the adaptive-gain ramp; unset they default to the
/// log of the darkest and brightest 8-bit values under `log_offset`. Override
/// them when the frame source has a narrower output range than full 8-bit.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    /// Crossover gain ceiling, rad/s.
    pub alpha1: f64,
    /// Adaptive-gain floor as a fraction of `alpha1`, in [0, 1].
    pub lambda: f64,
    /// Width of the gain ramp at each end of the log range, as a fraction of
    /// the range, in [0, 0.5).
    pub kappa_fraction: f64,
    /// Log-intensity step per ON event.
    pub c_on: f64,
    /// Log-intensity step per OFF event.
    pub c_off: f64,
    /// Offset guarding `ln 0` in the linear -> log conversion.
    pub log_offset: f64,
    pub mode: Mode,
    /// Adopt the first frame as the initial estimate when it precedes every
    /// event (fusion and direct-integration modes only).
    pub init_from_first_frame: bool,
    pub l_min: Option<f64>,
    pub l_max: Option<f64>,
}

impl Default for Config {
    fn default() -> Config {
        Config {
            alpha1: 2.0 * std::f64::consts::PI,
            lambda: 0.1,
            kappa_fraction: 0.05,
            c_on: 0.1,
            c_off: 0.1,
            log_offset: 0.01,
            mode: Mode::Fusion,
            init_from_first_frame: true,
            l_min: None,
            l_max: None,
        }
    }
}

fn parse_num(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: expected a number, got {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected true or false, got {value:?}"
        ))),
    }
}

impl Config {
    /// Apply one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "alpha1" => self.alpha1 = parse_num(key, value)?,
            "lambda" => self.lambda = parse_num(key, value)?,
            "kappa_fraction" => self.kappa_fraction = parse_num(key, value)?,
            "c_on" => self.c_on = parse_num(key, value)?,
            "c_off" => self.c_off = parse_num(key, value)?,
            "log_offset" => self.log_offset = parse_num(key, value)?,
            "l_min" => self.l_min = Some(parse_num(key, value)?),
            "l_max" => self.l_max = Some(parse_num(key, value)?),
            "mode" => self.mode = value.parse()?,
            "init_from_first_frame" => self.init_from_first_frame = parse_bool(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parse the `key = value` text format; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Config> {
        let mut config = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected `key = value`, got {line:?}"),
            })?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| Error::Parse {
                    line: i + 1,
                    msg: e.to_string(),
                })?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn read(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        Config::parse(&text)
    }

    /// Serialize in the same format [`Config::parse`] accepts.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "alpha1 = {}", self.alpha1);
        let _ = writeln!(out, "lambda = {}", self.lambda);
        let _ = writeln!(out, "kappa_fraction = {}", self.kappa_fraction);
        let _ = writeln!(out, "c_on = {}", self.c_on);
        let _ = writeln!(out, "c_off = {}", self.c_off);
        let _ = writeln!(out, "log_offset = {}", self.log_offset);
        let _ = writeln!(out, "mode = {}", self.mode);
        let _ = writeln!(out, "init_from_first_frame = {}", self.init_from_first_frame);
        if let Some(l_min) = self.l_min {
            let _ = writeln!(out, "l_min = {l_min}");
        }
        if let Some(l_max) = self.l_max {
            let _ = writeln!(out, "l_max = {l_max}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Config(msg));
        if !(self.alpha1.is_finite() && self.alpha1 > 0.0) {
            return err(format!("alpha1 must be > 0, got {}", self.alpha1));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return err(format!("lambda must be in [0, 1], got {}", self.lambda));
        }
        if !(self.kappa_fraction >= 0.0 && self.kappa_fraction < 0.5) {
            return err(format!(
                "kappa_fraction must be in [0, 0.5), got {}",
                self.kappa_fraction
            ));
        }
        if !(self.c_on.is_finite() && self.c_on > 0.0) {
            return err(format!("c_on must be > 0, got {}", self.c_on));
        }
        if !(self.c_off.is_finite() && self.c_off > 0.0) {
            return err(format!("c_off must be > 0, got {}", self.c_off));
        }
        if !(self.log_offset.is_finite() && self.log_offset > 0.0) {
            return err(format!("log_offset must be > 0, got {}", self.log_offset));
        }
        self.gain_params()?;
        Ok(())
    }

    /// Resolve the adaptive-gain parameters, filling `l_min` / `l_max` from
    /// the 8-bit log range when unset.
    pub fn gain_params(&self) -> Result<GainParams> {
        let l_min = self.l_min.unwrap_or_else(|| self.log_offset.ln());
        let l_max = self.l_max.unwrap_or_else(|| (1.0 + self.log_offset).ln());
        GainParams::new(self.alpha1, self.lambda, l_min, l_max, self.kappa_fraction)
    }
}
