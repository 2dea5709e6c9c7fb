//! Predictive-coding sequence memory.
//!
//! A single hidden layer carries the sequence: `W_H` predicts the next hidden
//! state from the previous one and `W_out` predicts the audio segment from the
//! current hidden state. For segment `x` with hidden state `h` and previous
//! (converged) hidden state `h_prev` the energy is
//!
//! ```text
//! F = ||x - W_out f(h)||² + ||h - g(W_H h_prev)||²
//!   = ||e_x||²            + ||e_h||²
//! ```
//!
//! where `f` is the output nonlinearity and `g` the hidden one. Every update in
//! this module is a step along `-½ ∇F`; the factor two of the squared norms is
//! folded into the step sizes.
//!
//! Writing trains both matrices on one sequence ([`write_sequence`]); reading
//! replays it from the stored cue with frozen weights ([`read_sequence`]).

mod config;
mod file;
mod gram;
mod read;
mod write;

pub use config::{CueInit, ReadConfig, ReadMode, WriteConfig, DEFAULT_ETA_H};
pub(crate) use config::positive;
pub use file::{load_model, save_model, MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use read::{read_sequence, read_sequence_primed, RecallResult};
pub use write::{write_sequence, write_sequence_with};

use ndarray::{Array1, Array2, ArrayView1, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{PcamError, Result};

/// Elementwise nonlinearity with an exact derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    Tanh,
    Identity,
    /// Derivative taken as 0 at the kink.
    Relu,
}

impl Nonlinearity {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => x.tanh(),
            Nonlinearity::Identity => x,
            Nonlinearity::Relu => x.max(0.0),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Nonlinearity::Identity => 1.0,
            Nonlinearity::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `(f(x), f'(x))` with a single transcendental evaluation.
    #[inline]
    pub fn apply_with_derivative(self, x: f64) -> (f64, f64) {
        match self {
            Nonlinearity::Tanh => {
                let t = x.tanh();
                (t, 1.0 - t * t)
            }
            _ => (self.apply(x), self.derivative(x)),
        }
    }

    pub fn map(self, v: ArrayView1<f64>) -> Array1<f64> {
        v.mapv(|x| self.apply(x))
    }

    pub fn map_derivative(self, v: ArrayView1<f64>) -> Array1<f64> {
        v.mapv(|x| self.derivative(x))
    }

    /// Tag used in the model file.
    pub fn code(self) -> u8 {
        match self {
            Nonlinearity::Tanh => 0,
            Nonlinearity::Identity => 1,
            Nonlinearity::Relu => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Nonlinearity::Tanh),
            1 => Some(Nonlinearity::Identity),
            2 => Some(Nonlinearity::Relu),
            _ => None,
        }
    }
}

impl std::str::FromStr for Nonlinearity {
    type Err = PcamError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Nonlinearity::Tanh),
            "identity" => Ok(Nonlinearity::Identity),
            "relu" => Ok(Nonlinearity::Relu),
            other => Err(PcamError::InvalidArgument(format!(
                "unknown nonlinearity '{other}'"
            ))),
        }
    }
}

/// Hidden activations for one segment.
pub type HiddenState = Array1<f64>;

/// Prediction errors of the energy at one (segment, hidden state) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorPair {
    /// `x - W_out f(h)`, one entry per sample.
    pub e_x: Array1<f64>,
    /// `h - g(W_H h_prev)`, one entry per hidden unit.
    pub e_h: Array1<f64>,
}

impl ErrorPair {
    pub fn energy(&self) -> f64 {
        self.e_x.dot(&self.e_x) + self.e_h.dot(&self.e_h)
    }
}

/// The whole memory: two weight matrices plus the cue that starts recall.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryModel {
    w_hidden: Array2<f64>,
    w_out: Array2<f64>,
    cue: Array1<f64>,
    output_fn: Nonlinearity,
    hidden_fn: Nonlinearity,
    seed: u64,
}

impl MemoryModel {
    /// Fresh model with Gaussian weights drawn deterministically from `seed`.
    pub fn init(
        hidden_dim: usize,
        segment_len: usize,
        output_fn: Nonlinearity,
        hidden_fn: Nonlinearity,
        seed: u64,
        cfg: &WriteConfig,
    ) -> Result<Self> {
        if hidden_dim == 0 || segment_len == 0 {
            return Err(PcamError::InvalidArgument(format!(
                "hidden_dim and segment_len must be >= 1, got {hidden_dim} and {segment_len}"
            )));
        }
        cfg.validate()?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |rows: usize, cols: usize| -> Array2<f64> {
            if cfg.weight_init_std == 0.0 {
                return Array2::zeros((rows, cols));
            }
            let normal = Normal::new(0.0, cfg.weight_init_std).expect("validated std");
            Array2::from_shape_simple_fn((rows, cols), || normal.sample(&mut rng))
        };
        let w_hidden = draw(hidden_dim, hidden_dim);
        let w_out = draw(segment_len, hidden_dim);

        let cue = match cfg.cue_init {
            CueInit::Zeros => Array1::zeros(hidden_dim),
            CueInit::Gaussian { seed: cue_seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(cue_seed);
                rng.set_stream(1);
                let normal = Normal::new(0.0, 1.0).expect("unit normal");
                Array1::from_shape_simple_fn(hidden_dim, || normal.sample(&mut rng))
            }
        };

        Ok(MemoryModel {
            w_hidden,
            w_out,
            cue,
            output_fn,
            hidden_fn,
            seed,
        })
    }

    /// Assembles a model from explicit parts, checking shapes and finiteness.
    pub fn from_parts(
        w_hidden: Array2<f64>,
        w_out: Array2<f64>,
        cue: Array1<f64>,
        output_fn: Nonlinearity,
        hidden_fn: Nonlinearity,
        seed: u64,
    ) -> Result<Self> {
        let h = cue.len();
        if h == 0 || w_hidden.dim() != (h, h) || w_out.ncols() != h || w_out.nrows() == 0 {
            return Err(PcamError::ShapeMismatch(format!(
                "W_H {:?}, W_out {:?}, cue {}",
                w_hidden.dim(),
                w_out.dim(),
                h
            )));
        }
        let model = MemoryModel {
            w_hidden,
            w_out,
            cue,
            output_fn,
            hidden_fn,
            seed,
        };
        model.check_finite()?;
        Ok(model)
    }

    pub fn hidden_dim(&self) -> usize {
        self.cue.len()
    }

    pub fn segment_len(&self) -> usize {
        self.w_out.nrows()
    }

    pub fn w_hidden(&self) -> &Array2<f64> {
        &self.w_hidden
    }

    pub fn w_out(&self) -> &Array2<f64> {
        &self.w_out
    }

    pub fn w_hidden_mut(&mut self) -> &mut Array2<f64> {
        &mut self.w_hidden
    }

    pub fn w_out_mut(&mut self) -> &mut Array2<f64> {
        &mut self.w_out
    }

    pub fn cue(&self) -> &Array1<f64> {
        &self.cue
    }

    pub fn output_fn(&self) -> Nonlinearity {
        self.output_fn
    }

    pub fn hidden_fn(&self) -> Nonlinearity {
        self.hidden_fn
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.w_hidden.iter().any(|v| !v.is_finite()) {
            return Err(PcamError::CorruptModel("W_H"));
        }
        if self.w_out.iter().any(|v| !v.is_finite()) {
            return Err(PcamError::CorruptModel("W_out"));
        }
        if self.cue.iter().any(|v| !v.is_finite()) {
            return Err(PcamError::CorruptModel("cue"));
        }
        Ok(())
    }

    fn check_dims(&self, x: ArrayView1<f64>, h: ArrayView1<f64>, h_prev: ArrayView1<f64>) {
        assert_eq!(x.len(), self.segment_len(), "segment length mismatch");
        assert_eq!(h.len(), self.hidden_dim(), "hidden state length mismatch");
        assert_eq!(h_prev.len(), self.hidden_dim(), "previous hidden state length mismatch");
    }

    /// Feedforward hidden prediction `g(W_H h_prev)`.
    pub fn predict_hidden(&self, h_prev: ArrayView1<f64>) -> HiddenState {
        self.hidden_fn.map(self.w_hidden.dot(&h_prev).view())
    }

    /// Output prediction `W_out f(h)`.
    pub fn predict_output(&self, h: ArrayView1<f64>) -> Array1<f64> {
        self.w_out.dot(&self.output_fn.map(h))
    }

    /// Panics if the vector lengths disagree with the model.
    pub fn error_pair(
        &self,
        x_target: ArrayView1<f64>,
        h: ArrayView1<f64>,
        h_prev: ArrayView1<f64>,
    ) -> ErrorPair {
        self.check_dims(x_target, h, h_prev);
        let e_x = &x_target - &self.predict_output(h);
        let e_h = &h - &self.predict_hidden(h_prev);
        ErrorPair { e_x, e_h }
    }

    pub fn energy(&self, x: ArrayView1<f64>, h: ArrayView1<f64>, h_prev: ArrayView1<f64>) -> f64 {
        self.error_pair(x, h, h_prev).energy()
    }

    /// `-e_h + f'(h) ⊙ W_outᵀ e_x`, i.e. `-½ ∂F/∂h`.
    pub fn hidden_update_direction(
        &self,
        x_target: ArrayView1<f64>,
        h: ArrayView1<f64>,
        h_prev: ArrayView1<f64>,
    ) -> Array1<f64> {
        let ErrorPair { e_x, e_h } = self.error_pair(x_target, h, h_prev);
        let back = self.w_out.t().dot(&e_x);
        let mut dir = self.output_fn.map_derivative(h) * back;
        dir -= &e_h;
        dir
    }

    /// One inference step on the hidden state with step size `eta_h`.
    pub fn infer_hidden_step(
        &self,
        x_target: ArrayView1<f64>,
        h: ArrayView1<f64>,
        h_prev: ArrayView1<f64>,
        eta_h: f64,
    ) -> HiddenState {
        let dir = self.hidden_update_direction(x_target, h, h_prev);
        let mut next = h.to_owned();
        next.scaled_add(eta_h, &dir);
        next
    }

    /// Unscaled weight updates `(ΔW_out, ΔW_H)`, each equal to `-½ ∂F/∂W`:
    /// `ΔW_out = e_x f(h)ᵀ` and `ΔW_H = (e_h ⊙ g'(W_H h_prev)) h_prevᵀ`.
    pub fn weight_gradients(
        &self,
        x_target: ArrayView1<f64>,
        h: ArrayView1<f64>,
        h_prev: ArrayView1<f64>,
    ) -> (Array2<f64>, Array2<f64>) {
        let ErrorPair { e_x, e_h } = self.error_pair(x_target, h, h_prev);
        let f_h = self.output_fn.map(h);
        let pre = self.w_hidden.dot(&h_prev);
        let hidden_err = e_h * self.hidden_fn.map_derivative(pre.view());
        (outer(&e_x, &f_h), outer(&hidden_err, &h_prev.to_owned()))
    }

    /// Applies both weight updates scaled by `eta_w`. Nothing but the two
    /// matrices changes.
    pub fn apply_weight_update(
        &mut self,
        x_target: ArrayView1<f64>,
        h: ArrayView1<f64>,
        h_prev: ArrayView1<f64>,
        eta_w: f64,
    ) {
        let (d_out, d_hidden) = self.weight_gradients(x_target, h, h_prev);
        self.w_out.scaled_add(eta_w, &d_out);
        self.w_hidden.scaled_add(eta_w, &d_hidden);
    }
}

/// Same as [`MemoryModel::init`], under its operation name.
pub fn init_model(
    hidden_dim: usize,
    segment_len: usize,
    output_fn: Nonlinearity,
    hidden_fn: Nonlinearity,
    seed: u64,
    cfg: &WriteConfig,
) -> Result<MemoryModel> {
    MemoryModel::init(hidden_dim, segment_len, output_fn, hidden_fn, seed, cfg)
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut m = Array2::zeros((a.len(), b.len()));
    Zip::from(m.rows_mut()).and(a).for_each(|mut row, &ai| {
        row.assign(&(b * ai));
    });
    m
}
