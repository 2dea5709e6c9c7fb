use ndarray::{Array1, Array2};

use super::gram::PackedSym;
use super::{MemoryModel, WriteConfig};
use crate::audio_io::SegmentedSequence;
use crate::error::{PcamError, Result};

/// Trains `model` on `seq` and returns it together with the total energy of
/// every epoch.
///
/// Each epoch restarts from the cue. For every segment the hidden state starts
/// at its feedforward prediction, takes `n1_iters` inference steps against the
/// segment, and then both weight matrices take one update step. The converged
/// hidden state becomes the previous state for the next segment. The energy
/// recorded for a segment is evaluated at the converged hidden state, before
/// the weight update.
pub fn write_sequence(
    model: MemoryModel,
    seq: &SegmentedSequence,
    cfg: &WriteConfig,
) -> Result<(MemoryModel, Vec<f64>)> {
    write_sequence_with(model, seq, cfg, |_, _| {})
}

/// [`write_sequence`] with a callback invoked after every epoch with the
/// zero-based epoch index and that epoch's total energy.
pub fn write_sequence_with(
    mut model: MemoryModel,
    seq: &SegmentedSequence,
    cfg: &WriteConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(MemoryModel, Vec<f64>)> {
    cfg.validate()?;
    if seq.segment_len() != model.segment_len() {
        return Err(PcamError::ShapeMismatch(format!(
            "sequence segments have {} samples, model expects {}",
            seq.segment_len(),
            model.segment_len()
        )));
    }
    model.check_finite()?;

    let hdim = model.hidden_dim();
    let seg_len = model.segment_len();
    let data = seq.segments();
    let n_seg = data.nrows();
    let f = model.output_fn;
    let g = model.hidden_fn;
    let (eta_h, eta_w) = (cfg.eta_h, cfg.eta_w);

    // back[μ] = W_outᵀ x_μ, kept in sync with W_out through rank-one updates.
    let mut gram = PackedSym::gram(&model.w_out);
    let mut back: Array2<f64> = data.dot(&model.w_out);

    let mut pre = vec![0.0; hdim];
    let mut target = vec![0.0; hdim];
    let mut h = vec![0.0; hdim];
    let mut f_h = vec![0.0; hdim];
    let mut df_h = vec![0.0; hdim];
    let mut gf = vec![0.0; hdim];
    let mut wt_e = vec![0.0; hdim];
    let mut e_x = vec![0.0; seg_len];
    let mut hidden_err = vec![0.0; hdim];

    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut prev: Array1<f64> = model.cue.clone();
        let mut total = 0.0;
        for mu in 0..n_seg {
            let x = data.row(mu);
            let x = x.as_slice().expect("standard layout");
            let prev_s = prev.as_slice().expect("contiguous");

            // Feedforward prediction g(W_H ĥ).
            let w_hidden = model.w_hidden.as_slice().expect("standard layout");
            for (i, row) in w_hidden.chunks_exact(hdim).enumerate() {
                pre[i] = dot(row, prev_s);
                target[i] = g.apply(pre[i]);
            }
            h.copy_from_slice(&target);

            let b = back.row(mu);
            let b = b.as_slice().expect("standard layout");
            for _ in 0..cfg.n1_iters {
                for j in 0..hdim {
                    (f_h[j], df_h[j]) = f.apply_with_derivative(h[j]);
                }
                gram.mul_vec(&f_h, &mut gf);
                for j in 0..hdim {
                    let drive = df_h[j] * (b[j] - gf[j]) - (h[j] - target[j]);
                    h[j] += eta_h * drive;
                }
            }
            for j in 0..hdim {
                f_h[j] = f.apply(h[j]);
            }

            // One pass over W_out: residual, back-projection, and the update.
            let w_out = model.w_out.as_slice_mut().expect("standard layout");
            wt_e.fill(0.0);
            let mut energy_x = 0.0;
            for (r, row) in w_out.chunks_exact_mut(hdim).enumerate() {
                let e = x[r] - dot(row, &f_h);
                e_x[r] = e;
                energy_x += e * e;
                for ((acc, w), fj) in wt_e.iter_mut().zip(row.iter_mut()).zip(&f_h) {
                    *acc += e * *w;
                    *w += eta_w * e * fj;
                }
            }
            let mut energy_h = 0.0;
            for j in 0..hdim {
                let e = h[j] - target[j];
                energy_h += e * e;
                hidden_err[j] = e * g.derivative(pre[j]);
            }
            let energy = energy_x + energy_h;
            if !energy.is_finite() {
                return Err(PcamError::Diverged {
                    epoch,
                    segment: mu,
                    what: "energy",
                });
            }
            if h.iter().any(|v| !v.is_finite()) {
                return Err(PcamError::Diverged {
                    epoch,
                    segment: mu,
                    what: "hidden state",
                });
            }
            total += energy;

            gram.rank2_update(&f_h, &wt_e, eta_w, eta_w * eta_w * energy_x);
            for nu in 0..n_seg {
                let x_nu = data.row(nu);
                let e_dot = dot(&e_x, x_nu.as_slice().expect("standard layout"));
                let mut b_nu = back.row_mut(nu);
                for (bj, fj) in b_nu.iter_mut().zip(&f_h) {
                    *bj += eta_w * e_dot * fj;
                }
            }

            let w_hidden = model.w_hidden.as_slice_mut().expect("standard layout");
            for (row, &d) in w_hidden.chunks_exact_mut(hdim).zip(&hidden_err) {
                let scale = eta_w * d;
                for (w, p) in row.iter_mut().zip(prev_s) {
                    *w += scale * p;
                }
            }

            prev = Array1::from(h.clone());
        }
        on_epoch(epoch, total);
        history.push(total);
    }
    Ok((model, history))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let mut ac = a.chunks_exact(8);
    let mut bc = b.chunks_exact(8);
    for (x, y) in (&mut ac).zip(&mut bc) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ac
        .remainder()
        .iter()
        .zip(bc.remainder())
        .map(|(x, y)| x * y)
        .sum();
    acc.iter().sum::<f64>() + tail
}
