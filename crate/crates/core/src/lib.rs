//! Predictive-coding sequence memory for raw audio.
//!
//! A clip is cut into fixed-length segments, written into the weights of a
//! single-hidden-layer predictive-coding network, and recalled from a stored
//! cue either open loop or with the recall fed back into hidden inference.

pub mod audio_io;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod metrics;
pub mod pc_model;

pub use error::{PcamError, Result};
