//! Continuous-time per-pixel intensity estimation from asynchronous event
//! streams and conventional image frames.
//!
//! The crate provides:
//! - [`filter`]: the asynchronous per-pixel complementary filter, its
//!   events-only high-pass mode and a direct-integration baseline, driven as
//!   a [`filter::Session`] over a [`io::Dataset`];
//! - [`sim`]: ground-truth degradation — frame sequences to event streams,
//!   noise injection, and low-rate clipped input frames;
//! - [`calib`]: contrast-threshold estimation from frames and inter-frame
//!   event counts;
//! - [`metrics`]: photometric error, SSIM and sequence evaluation reports;
//! - [`io`] / [`config`]: text event streams, PGM frames, frame indexes and
//!   `key = value` configuration.
//!
//! The `parallel` feature (on by default) runs the data-parallel inner loops
//! (global image updates, event synthesis, metric evaluation) on rayon;
//! without it everything is sequential. Outputs are identical either way.

pub mod calib;
pub mod config;
mod error;
pub mod event;
pub mod filter;
pub mod io;
pub mod metrics;
pub mod sim;

pub use config::Config;
pub use error::{Error, Result};
pub use event::{from_log, to_log, Event, Frame, LogImage, Polarity};
pub use filter::{FilterState, GainParams, Mode, Session};
pub use io::Dataset;
