use ndarray::{Array1, Array2, ArrayView1};

use super::gram::PackedSym;
use super::write::dot;
use super::{MemoryModel, ReadConfig, ReadMode};
use crate::audio_io::SegmentedSequence;
use crate::error::{PcamError, Result};

/// Output of a read.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallResult {
    /// Recalled segments, one row per segment.
    pub segments: Array2<f64>,
    /// Final hidden state of every segment.
    pub hidden_trajectory: Array2<f64>,
    /// Per segment, the read energy after each relaxation iteration.
    pub energy_trace: Vec<Vec<f64>>,
    pub mode: ReadMode,
}

/// Recalls `cfg.n_segments` segments from the stored cue. The model is not
/// modified.
///
/// Per segment the hidden state starts at its feedforward prediction and the
/// output estimate `x̂` at zero. Each of the `n2_iters` iterations first moves
/// `x̂` toward the prediction, `x̂ += eta_x (W_out f(h) - x̂)`, and then, in
/// closed-loop mode only, takes one hidden inference step that uses the
/// updated `x̂` as its target. The recorded energy is
/// `||h - g(W_H ĥ)||² + ||x̂ - W_out f(h)||²` after each iteration.
pub fn read_sequence(model: &MemoryModel, cfg: &ReadConfig) -> Result<RecallResult> {
    if cfg.prime_segments > 0 {
        return Err(PcamError::InvalidConfig(
            "prime_segments > 0 needs ground truth; use read_sequence_primed".into(),
        ));
    }
    read_impl(model, cfg, None)
}

/// Like [`read_sequence`], but the first `cfg.prime_segments` hidden states
/// are relaxed against the matching ground-truth segments of `prime` rather
/// than against the recall, in either mode.
pub fn read_sequence_primed(
    model: &MemoryModel,
    cfg: &ReadConfig,
    prime: &SegmentedSequence,
) -> Result<RecallResult> {
    if prime.segment_len() != model.segment_len() {
        return Err(PcamError::ShapeMismatch(format!(
            "priming segments have {} samples, model expects {}",
            prime.segment_len(),
            model.segment_len()
        )));
    }
    if prime.n_segments() < cfg.prime_segments {
        return Err(PcamError::ShapeMismatch(format!(
            "{} priming segments requested, {} available",
            cfg.prime_segments,
            prime.n_segments()
        )));
    }
    read_impl(model, cfg, Some(prime))
}

enum Feedback<'a> {
    /// Hidden state stays at its feedforward prediction.
    None,
    /// Hidden state is relaxed against the current recall.
    Recall,
    /// Hidden state is relaxed against a known segment.
    Truth(ArrayView1<'a, f64>),
}

fn read_impl(
    model: &MemoryModel,
    cfg: &ReadConfig,
    prime: Option<&SegmentedSequence>,
) -> Result<RecallResult> {
    cfg.validate()?;
    model.check_finite()?;

    let hdim = model.hidden_dim();
    let seg_len = model.segment_len();
    let g = model.hidden_fn;
    let needs_gram = cfg.n2_iters > 0
        && (cfg.mode == ReadMode::ClosedLoop || cfg.prime_segments > 0);
    let gram = needs_gram.then(|| PackedSym::gram(&model.w_out));

    let mut segments = Array2::zeros((cfg.n_segments, seg_len));
    let mut hidden_trajectory = Array2::zeros((cfg.n_segments, hdim));
    let mut energy_trace = Vec::with_capacity(cfg.n_segments);

    let mut prev = model.cue.clone();
    for mu in 0..cfg.n_segments {
        let target = g.map(model.w_hidden.dot(&prev).view());
        let feedback = match (prime, cfg.mode) {
            (Some(p), _) if mu < cfg.prime_segments => Feedback::Truth(p.segments().row(mu)),
            (_, ReadMode::OpenLoop) => Feedback::None,
            (_, ReadMode::ClosedLoop) => Feedback::Recall,
        };
        let (x_hat, h, trace) = match (feedback, gram.as_ref()) {
            (Feedback::None, _) | (_, None) => relax_open(model, &target, cfg),
            (fb, Some(gram)) => relax_coupled(model, gram, &target, cfg, fb),
        };
        if !trace.iter().all(|v| v.is_finite()) || !h.iter().all(|v| v.is_finite()) {
            return Err(PcamError::Diverged {
                epoch: 0,
                segment: mu,
                what: "read state",
            });
        }
        segments.row_mut(mu).assign(&x_hat);
        hidden_trajectory.row_mut(mu).assign(&h);
        energy_trace.push(trace);
        prev = h;
    }

    Ok(RecallResult {
        segments,
        hidden_trajectory,
        energy_trace,
        mode: cfg.mode,
    })
}

/// Output relaxation with the hidden state pinned at its prediction, so
/// the hidden error term is identically zero.
fn relax_open(
    model: &MemoryModel,
    target: &Array1<f64>,
    cfg: &ReadConfig,
) -> (Array1<f64>, Array1<f64>, Vec<f64>) {
    let seg_len = model.segment_len();
    let mut x_hat = Array1::zeros(seg_len);
    let mut trace = Vec::with_capacity(cfg.n2_iters);
    if cfg.n2_iters > 0 {
        let pred = model.predict_output(target.view());
        for _ in 0..cfg.n2_iters {
            let mut energy = 0.0;
            for (x, p) in x_hat.iter_mut().zip(pred.iter()) {
                *x += cfg.eta_x * (p - *x);
                let r = *x - p;
                energy += r * r;
            }
            trace.push(energy);
        }
    }
    (x_hat, target.clone(), trace)
}

/// Joint relaxation of `x̂` and `h`.
///
/// `x̂` starts at zero and only ever moves toward `W_out f(h)`, so it stays in
/// the column space of `W_out` and is tracked through coefficients `c` with
/// `x̂ = W_out c`. The back-projected output error is then `G (c - f(h))` for
/// recall feedback and `W_outᵀ x - G f(h)` for ground-truth feedback.
fn relax_coupled(
    model: &MemoryModel,
    gram: &PackedSym,
    target: &Array1<f64>,
    cfg: &ReadConfig,
    feedback: Feedback<'_>,
) -> (Array1<f64>, Array1<f64>, Vec<f64>) {
    let hdim = model.hidden_dim();
    let f = model.output_fn;
    let (eta_x, eta_h) = (cfg.eta_x, cfg.eta_h);
    let target = target.as_slice().expect("contiguous");
    let truth_back: Option<Vec<f64>> = match feedback {
        Feedback::Truth(x) => Some(model.w_out.t().dot(&x).to_vec()),
        _ => None,
    };

    let mut h = target.to_vec();
    let mut coef = vec![0.0; hdim];
    let mut f_h = vec![0.0; hdim];
    let mut df_h = vec![0.0; hdim];
    let mut resid = vec![0.0; hdim];
    let mut g_resid = vec![0.0; hdim];
    let mut g_f = vec![0.0; hdim];
    let mut trace = Vec::with_capacity(cfg.n2_iters);

    for it in 0..=cfg.n2_iters {
        for j in 0..hdim {
            (f_h[j], df_h[j]) = f.apply_with_derivative(h[j]);
            resid[j] = coef[j] - f_h[j];
        }
        // G (c - f(h)) gives both the energy of the state left by the previous
        // iteration and, rescaled, this iteration's back-projection.
        gram.mul_vec(&resid, &mut g_resid);
        if it > 0 {
            let hidden: f64 = h.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
            // A Gram quadratic form can round a few ulps below zero.
            trace.push(hidden + dot(&resid, &g_resid).max(0.0));
        }
        if it == cfg.n2_iters {
            break;
        }

        for j in 0..hdim {
            coef[j] += eta_x * (f_h[j] - coef[j]);
        }
        match &truth_back {
            None => {
                // After the x̂ step, c - f(h) = (1 - eta_x) · resid.
                let keep = 1.0 - eta_x;
                for j in 0..hdim {
                    let back = keep * g_resid[j];
                    h[j] += eta_h * (df_h[j] * back - (h[j] - target[j]));
                }
            }
            Some(b) => {
                gram.mul_vec(&f_h, &mut g_f);
                for j in 0..hdim {
                    let back = b[j] - g_f[j];
                    h[j] += eta_h * (df_h[j] * back - (h[j] - target[j]));
                }
            }
        }
    }

    let x_hat = model.w_out.dot(&Array1::from(coef));
    (x_hat, Array1::from(h), trace)
}
