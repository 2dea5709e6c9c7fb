//! Finite-difference check of the hidden-state and weight updates against the
//! energy they descend.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{PcamError, Result};
use crate::pc_model::{MemoryModel, Nonlinearity};

pub const MAX_HIDDEN: usize = 32;
pub const MAX_SEGMENT_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub trials: usize,
    pub hidden_dim: usize,
    pub segment_len: usize,
    pub tolerance: f64,
    pub fd_step: f64,
    pub seed: u64,
    pub output_fn: Nonlinearity,
    pub hidden_fn: Nonlinearity,
    /// Multiplies the analytic updates before comparison. Anything but 1.0
    /// plants a fault the check must catch.
    pub fault_scale: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            trials: 20,
            hidden_dim: 8,
            segment_len: 4,
            tolerance: 1e-5,
            fd_step: 1e-6,
            seed: 0,
            output_fn: Nonlinearity::Tanh,
            hidden_fn: Nonlinearity::Tanh,
            fault_scale: 1.0,
        }
    }
}

impl GradcheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(PcamError::InvalidConfig("trials must be >= 1".into()));
        }
        if self.hidden_dim == 0 || self.hidden_dim > MAX_HIDDEN {
            return Err(PcamError::InvalidConfig(format!(
                "hidden_dim must be in 1..={MAX_HIDDEN}, got {}",
                self.hidden_dim
            )));
        }
        if self.segment_len == 0 || self.segment_len > MAX_SEGMENT_LEN {
            return Err(PcamError::InvalidConfig(format!(
                "segment_len must be in 1..={MAX_SEGMENT_LEN}, got {}",
                self.segment_len
            )));
        }
        for (name, v) in [("tolerance", self.tolerance), ("fd_step", self.fd_step)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PcamError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !self.fault_scale.is_finite() {
            return Err(PcamError::InvalidConfig("fault_scale must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    pub hidden_err: f64,
    pub w_out_err: f64,
    pub w_hidden_err: f64,
}

impl TrialResult {
    pub fn worst(&self) -> f64 {
        self.hidden_err.max(self.w_out_err).max(self.w_hidden_err)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub trials: Vec<TrialResult>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn worst(&self) -> f64 {
        self.trials.iter().map(TrialResult::worst).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.trials.iter().all(|t| t.worst() <= self.tolerance)
    }
}

/// `|a - b| / max(|a|, |b|)` over whole vectors; zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Runs `cfg.trials` random instances. Each compares the analytic hidden
/// direction and both weight updates with `-½` times a central difference of
/// the energy.
pub fn gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    cfg.validate()?;
    let (hdim, l) = (cfg.hidden_dim, cfg.segment_len);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut vec = |n: usize, s: f64| Array1::from_shape_simple_fn(n, || s * normal.sample(&mut rng));

    let mut trials = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let w_hidden =
            Array2::from_shape_vec((hdim, hdim), vec(hdim * hdim, 0.5).to_vec()).expect("sized");
        let w_out = Array2::from_shape_vec((l, hdim), vec(l * hdim, 0.5).to_vec()).expect("sized");
        let x = vec(l, 1.0);
        let h = vec(hdim, 1.0);
        let h_prev = vec(hdim, 1.0);
        let cue = Array1::zeros(hdim);
        let model =
            MemoryModel::from_parts(w_hidden, w_out, cue, cfg.output_fn, cfg.hidden_fn, 0)?;

        let step = cfg.fd_step;
        let energy = |m: &MemoryModel, h: &Array1<f64>| m.energy(x.view(), h.view(), h_prev.view());

        let analytic_h = model.hidden_update_direction(x.view(), h.view(), h_prev.view()) * cfg.fault_scale;
        let numeric_h: Vec<f64> = (0..hdim)
            .map(|j| {
                let (mut hp, mut hm) = (h.clone(), h.clone());
                hp[j] += step;
                hm[j] -= step;
                -(energy(&model, &hp) - energy(&model, &hm)) / (4.0 * step)
            })
            .collect();

        let (d_out, d_hidden) = model.weight_gradients(x.view(), h.view(), h_prev.view());
        let numeric_w = |pick: fn(&mut MemoryModel) -> &mut Array2<f64>| -> Vec<f64> {
            let n = pick(&mut model.clone()).len();
            (0..n)
                .map(|k| {
                    let (mut mp, mut mm) = (model.clone(), model.clone());
                    pick(&mut mp).as_slice_mut().expect("standard layout")[k] += step;
                    pick(&mut mm).as_slice_mut().expect("standard layout")[k] -= step;
                    -(energy(&mp, &h) - energy(&mm, &h)) / (4.0 * step)
                })
                .collect()
        };
        let numeric_out = numeric_w(MemoryModel::w_out_mut);
        let numeric_hidden = numeric_w(MemoryModel::w_hidden_mut);
        let scaled = |m: Array2<f64>| (m * cfg.fault_scale).into_raw_vec_and_offset().0;

        trials.push(TrialResult {
            trial,
            hidden_err: relative_error(analytic_h.as_slice().expect("contiguous"), &numeric_h),
            w_out_err: relative_error(&scaled(d_out), &numeric_out),
            w_hidden_err: relative_error(&scaled(d_hidden), &numeric_hidden),
        });
    }
    Ok(GradcheckReport {
        trials,
        tolerance: cfg.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_check_passes() {
        let rep = gradcheck(&GradcheckConfig::default()).unwrap();
        assert_eq!(rep.trials.len(), 20);
        assert!(rep.passed(), "worst {}", rep.worst());
    }

    #[test]
    fn other_nonlinearities_pass() {
        for (f, g) in [
            (Nonlinearity::Identity, Nonlinearity::Identity),
            (Nonlinearity::Relu, Nonlinearity::Tanh),
            (Nonlinearity::Tanh, Nonlinearity::Relu),
        ] {
            let cfg = GradcheckConfig {
                trials: 5,
                output_fn: f,
                hidden_fn: g,
                ..Default::default()
            };
            let rep = gradcheck(&cfg).unwrap();
            assert!(rep.passed(), "{f:?}/{g:?} worst {}", rep.worst());
        }
    }

    #[test]
    fn planted_fault_is_caught() {
        let cfg = GradcheckConfig {
            fault_scale: 1.001,
            ..Default::default()
        };
        assert!(!gradcheck(&cfg).unwrap().passed());
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            GradcheckConfig { trials: 0, ..Default::default() },
            GradcheckConfig { hidden_dim: 33, ..Default::default() },
            GradcheckConfig { segment_len: 17, ..Default::default() },
            GradcheckConfig { tolerance: 0.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(gradcheck(&cfg), Err(PcamError::InvalidConfig(_))));
        }
    }

    #[test]
    fn relative_error_cases() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(relative_error(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((relative_error(&[2.0], &[1.0]) - 0.5).abs() < 1e-15);
    }
}
