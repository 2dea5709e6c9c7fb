use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PcamError, Result};
use crate::pc_model::{positive, Nonlinearity, ReadConfig, ReadMode, WriteConfig, DEFAULT_ETA_H};

/// Read settings shared by every mode of a run. The mode and segment count
/// are filled in per clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadTemplate {
    pub n2_iters: usize,
    pub eta_x: f64,
    pub eta_h: f64,
    pub prime_segments: usize,
}

impl Default for ReadTemplate {
    fn default() -> Self {
        let d = ReadConfig::default();
        ReadTemplate {
            n2_iters: d.n2_iters,
            eta_x: d.eta_x,
            eta_h: DEFAULT_ETA_H,
            prime_segments: d.prime_segments,
        }
    }
}

impl ReadTemplate {
    pub fn to_config(&self, mode: ReadMode, n_segments: usize) -> ReadConfig {
        ReadConfig {
            n2_iters: self.n2_iters,
            eta_x: self.eta_x,
            eta_h: self.eta_h,
            mode,
            n_segments,
            prime_segments: self.prime_segments.min(n_segments),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// A WAV file or a directory of WAV files.
    pub input: PathBuf,
    pub output_dir: PathBuf,
    pub target_rate: u32,
    pub segment_ms: f64,
    pub max_segments: usize,
    pub hidden_dim: usize,
    pub output_nonlinearity: Nonlinearity,
    pub hidden_nonlinearity: Nonlinearity,
    pub modes: Vec<ReadMode>,
    pub normalize_peak: bool,
    pub seed: u64,
    pub max_lag_ms: f64,
    /// Clips processed in parallel.
    pub jobs: usize,
    /// Also write `<clip_id>.model.pcam` for every clip.
    pub save_models: bool,
    /// Fill the `wall_time_s` column. Off by default so that results are
    /// byte-identical across runs.
    pub record_timing: bool,
    pub write: WriteConfig,
    pub read: ReadTemplate,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            input: PathBuf::from("clips"),
            output_dir: PathBuf::from("results"),
            target_rate: 16_000,
            segment_ms: 200.0,
            max_segments: 20,
            hidden_dim: 1600,
            output_nonlinearity: Nonlinearity::Tanh,
            hidden_nonlinearity: Nonlinearity::Tanh,
            modes: ReadMode::ALL.to_vec(),
            normalize_peak: false,
            seed: 0,
            max_lag_ms: 10.0,
            jobs: 1,
            save_models: false,
            record_timing: false,
            write: WriteConfig::default(),
            read: ReadTemplate::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(s).map_err(|e| PcamError::InvalidConfig(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PcamError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(PcamError::InvalidConfig(msg));
        if self.target_rate == 0 {
            return bad("target_rate must be > 0".into());
        }
        positive("segment_ms", self.segment_ms)?;
        let seg_len = (self.segment_ms * self.target_rate as f64 / 1000.0).round();
        if seg_len < 1.0 {
            return bad(format!(
                "segment_ms {} is shorter than one sample at {} Hz",
                self.segment_ms, self.target_rate
            ));
        }
        if self.max_segments == 0 {
            return bad("max_segments must be >= 1".into());
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be >= 1".into());
        }
        if self.modes.is_empty() {
            return bad("modes must not be empty".into());
        }
        if !(self.max_lag_ms >= 0.0 && self.max_lag_ms.is_finite()) {
            return bad(format!("max_lag_ms must be finite and >= 0, got {}", self.max_lag_ms));
        }
        if self.max_lag_samples() >= seg_len as usize {
            return bad(format!(
                "max_lag_ms {} must be shorter than a segment",
                self.max_lag_ms
            ));
        }
        if self.jobs == 0 {
            return bad("jobs must be >= 1".into());
        }
        self.write.validate()?;
        self.read.to_config(ReadMode::ClosedLoop, self.max_segments).validate()?;
        if self.read.prime_segments > self.max_segments {
            return bad("read.prime_segments cannot exceed max_segments".into());
        }
        Ok(())
    }

    pub fn max_lag_samples(&self) -> usize {
        (self.max_lag_ms * self.target_rate as f64 / 1000.0).round() as usize
    }
}
