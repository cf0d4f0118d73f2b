//! Domain types shared by every stage of the pipeline: events, 8-bit frames
//! and dense log-intensity images, plus the linear <-> log conversions.
//!
//! All math downstream runs on natural-log intensity `L = ln(I/255 + b)` with
//! a small positive offset `b` guarding `ln 0`. For 8-bit input every log
//! value therefore lies in `[ln b, ln(1 + b)]`.

use crate::{Error, Result};

/// Direction of the brightness change encoded by an event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Polarity {
    /// Brightness decreased (sign -1).
    Off,
    /// Brightness increased (sign +1).
    On,
}

impl Polarity {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Polarity::On => 1.0,
            Polarity::Off => -1.0,
        }
    }

    /// Decode the on-disk flag: 0 -> Off, 1 -> On.
    pub fn from_flag(flag: u64) -> Option<Polarity> {
        match flag {
            0 => Some(Polarity::Off),
            1 => Some(Polarity::On),
            _ => None,
        }
    }

    /// Encode as the on-disk flag.
    pub fn flag(self) -> u8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => 0,
        }
    }
}

/// One timestamped, polarity-tagged brightness-change packet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    /// Seconds, finite and non-negative.
    pub t: f64,
    /// Column index.
    pub x: u16,
    /// Row index.
    pub y: u16,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t: f64, x: u16, y: u16, polarity: Polarity) -> Event {
        Event { t, x, y, polarity }
    }
}

/// A grayscale 8-bit image with a capture timestamp, row-major pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl Frame {
    pub fn new(t: f64, width: u32, height: u32, pixels: Vec<u8>) -> Result<Frame> {
        if width == 0 || height == 0 {
            return Err(Error::Image(format!("empty frame {width}x{height}")));
        }
        if pixels.len() != (width as usize) * (height as usize) {
            return Err(Error::Image(format!(
                "pixel buffer of {} bytes does not match {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Frame {
            t,
            width,
            height,
            pixels,
        })
    }
}

/// Dense per-pixel log-intensity raster; the common currency of the filter,
/// simulator and calibration math.
#[derive(Clone, Debug, PartialEq)]
pub struct LogImage {
    pub t: f64,
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

impl LogImage {
    pub fn new(t: f64, width: u32, height: u32, values: Vec<f64>) -> Result<LogImage> {
        if values.len() != (width as usize) * (height as usize) {
            return Err(Error::Image(format!(
                "value buffer of {} entries does not match {width}x{height}",
                values.len()
            )));
        }
        Ok(LogImage {
            t,
            width,
            height,
            values,
        })
    }

    pub fn zeros(t: f64, width: u32, height: u32) -> LogImage {
        LogImage {
            t,
            width,
            height,
            values: vec![0.0; (width as usize) * (height as usize)],
        }
    }
}

fn check_offset(offset: f64) -> Result<()> {
    if !(offset.is_finite() && offset > 0.0) {
        return Err(Error::Config(format!(
            "log offset must be a positive finite number, got {offset}"
        )));
    }
    Ok(())
}

/// Convert an 8-bit frame to log intensity: `v = ln(pixel/255 + offset)`.
pub fn to_log(frame: &Frame, offset: f64) -> Result<LogImage> {
    check_offset(offset)?;
    let mut lut = [0.0f64; 256];
    for (p, slot) in lut.iter_mut().enumerate() {
        *slot = (p as f64 / 255.0 + offset).ln();
    }
    let values = frame.pixels.iter().map(|&p| lut[p as usize]).collect();
    Ok(LogImage {
        t: frame.t,
        width: frame.width,
        height: frame.height,
        values,
    })
}

/// Inverse of [`to_log`] for export: `pixel = clamp(round((e^v - offset) * 255), 0, 255)`.
pub fn from_log(img: &LogImage, offset: f64) -> Result<Frame> {
    check_offset(offset)?;
    let pixels = img
        .values
        .iter()
        .map(|&v| ((v.exp() - offset) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    Ok(Frame {
        t: img.t,
        width: img.width,
        height: img.height,
        pixels,
    })
}
