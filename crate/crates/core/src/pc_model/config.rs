use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PcamError, Result};

/// How the stored cue hidden state is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CueInit {
    Zeros,
    /// Unit-variance Gaussian entries drawn from `seed`.
    Gaussian { seed: u64 },
}

/// Hyperparameters of the write (memorization) phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WriteConfig {
    pub epochs: usize,
    /// Hidden-state inference steps per segment.
    pub n1_iters: usize,
    /// Hidden-state inference step size.
    pub eta_h: f64,
    /// Weight learning rate.
    pub eta_w: f64,
    pub weight_init_std: f64,
    pub cue_init: CueInit,
}

impl Default for WriteConfig {
    fn default() -> Self {
        WriteConfig {
            epochs: 100,
            n1_iters: 100,
            eta_h: DEFAULT_ETA_H,
            eta_w: 1e-4,
            weight_init_std: 0.025,
            cue_init: CueInit::Gaussian { seed: 0 },
        }
    }
}

/// Hidden step size shared by the write and read defaults.
pub const DEFAULT_ETA_H: f64 = 0.1;

impl WriteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(PcamError::InvalidConfig("epochs must be >= 1".into()));
        }
        positive("write.eta_h", self.eta_h)?;
        positive("write.eta_w", self.eta_w)?;
        if !(self.weight_init_std >= 0.0) || !self.weight_init_std.is_finite() {
            return Err(PcamError::InvalidConfig(
                "weight_init_std must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadMode {
    /// Hidden states follow the feedforward chain only.
    OpenLoop,
    /// Hidden states are also relaxed against the segment being recalled.
    ClosedLoop,
}

impl ReadMode {
    pub const ALL: [ReadMode; 2] = [ReadMode::OpenLoop, ReadMode::ClosedLoop];

    pub fn as_str(self) -> &'static str {
        match self {
            ReadMode::OpenLoop => "open_loop",
            ReadMode::ClosedLoop => "closed_loop",
        }
    }
}

impl fmt::Display for ReadMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReadMode {
    type Err = PcamError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open_loop" | "open" => Ok(ReadMode::OpenLoop),
            "closed_loop" | "closed" => Ok(ReadMode::ClosedLoop),
            other => Err(PcamError::InvalidArgument(format!("unknown read mode '{other}'"))),
        }
    }
}

/// Hyperparameters of the read (recall) phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadConfig {
    pub n2_iters: usize,
    /// Output relaxation step size.
    pub eta_x: f64,
    /// Hidden relaxation step size (closed loop and primed segments).
    pub eta_h: f64,
    pub mode: ReadMode,
    pub n_segments: usize,
    /// Number of leading segments whose hidden state is relaxed against the
    /// ground truth instead of the recall. Zero means pure cued recall.
    pub prime_segments: usize,
}

impl Default for ReadConfig {
    fn default() -> Self {
        ReadConfig {
            n2_iters: 500,
            eta_x: 0.1,
            eta_h: DEFAULT_ETA_H,
            mode: ReadMode::ClosedLoop,
            n_segments: 20,
            prime_segments: 0,
        }
    }
}

impl ReadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_segments < 1 {
            return Err(PcamError::InvalidConfig("n_segments must be >= 1".into()));
        }
        positive("read.eta_x", self.eta_x)?;
        positive("read.eta_h", self.eta_h)?;
        if self.prime_segments > self.n_segments {
            return Err(PcamError::InvalidConfig(
                "prime_segments cannot exceed n_segments".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(PcamError::InvalidConfig(format!("{name} must be finite and > 0, got {v}")))
    }
}
