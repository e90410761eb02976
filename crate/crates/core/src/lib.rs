//! Numerical core for wearable 6DoF sound event localization and detection.
//!
//! Everything in this crate is `no_std` (with `alloc`): a small reverse-mode
//! tensor engine, quaternion/pose algebra, the motion-sensor and acoustic
//! feature pipelines, a synthetic scene renderer, the causal SELD network
//! with its multi-modal fusion blocks, Multi-ACCDOA targets and loss, and the
//! location-dependent evaluation metrics. File and process IO lives in the
//! `seld6dof` companion crate.
#![no_std]

extern crate alloc;

pub mod accdoa;
pub mod audio;
pub mod autodiff;
mod error;
pub mod formats;
pub mod geometry;
mod math;
pub mod metrics;
pub mod net;
pub mod sensor;
pub mod sim;

pub use error::{Error, Result};

/// Speed of sound used throughout (m/s).
pub const SPEED_OF_SOUND: f64 = 343.0;
/// Audio sample rate (Hz).
pub const SAMPLE_RATE: u32 = 48_000;
/// Label / network output frame length (s).
pub const LABEL_FRAME_S: f64 = 0.1;
/// Number of sound event classes.
pub const NUM_CLASSES: usize = 12;
/// Number of Multi-ACCDOA output tracks.
pub const NUM_TRACKS: usize = 3;
