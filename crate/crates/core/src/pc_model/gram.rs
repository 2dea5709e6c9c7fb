//! Cached `W_outᵀ W_out` for the inner relaxation loops.
//!
//! Back-projecting the output error costs two passes over `W_out` per step:
//! `W_outᵀ (x - W_out f(h))`. With `b = W_outᵀ x` and `G = W_outᵀ W_out` cached,
//! the same quantity is `b - G f(h)`, one pass over an `H x H` symmetric
//! matrix. Only the upper triangle is stored, halving the memory traffic of
//! the hot loop.

use ndarray::Array2;

/// Symmetric matrix, upper triangle packed row by row.
#[derive(Debug, Clone)]
pub(crate) struct PackedSym {
    n: usize,
    data: Vec<f64>,
}

const LANES: usize = 8;

impl PackedSym {
    /// `Wᵀ W` for a row-major `rows x n` matrix.
    pub(crate) fn gram(w: &Array2<f64>) -> Self {
        let n = w.ncols();
        let full = w.t().dot(w);
        let mut data = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            data.extend(full.row(i).iter().skip(i).copied());
        }
        PackedSym { n, data }
    }

    #[cfg(test)]
    pub(crate) fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.data[self.row_offset(i) + (j - i)]
    }

    #[cfg(test)]
    fn row_offset(&self, i: usize) -> usize {
        i * self.n - i * i.saturating_sub(1) / 2
    }

    /// `y = G v`.
    pub(crate) fn mul_vec(&self, v: &[f64], y: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(v.len(), n);
        debug_assert_eq!(y.len(), n);
        y.fill(0.0);
        let mut off = 0;
        for i in 0..n {
            let len = n - i;
            let row = &self.data[off..off + len];
            off += len;
            let vi = v[i];
            let diag = row[0] * vi;

            // Upper part of row i contributes a dot product to y[i] and,
            // by symmetry, an axpy into y[i+1..].
            let rest = &row[1..];
            let (y_head, y_tail) = y.split_at_mut(i + 1);
            let v_tail = &v[i + 1..];
            let mut acc = [0.0; LANES];
            let mut rc = rest.chunks_exact(LANES);
            let mut vc = v_tail.chunks_exact(LANES);
            let mut yc = y_tail.chunks_exact_mut(LANES);
            for ((r, vv), yy) in (&mut rc).zip(&mut vc).zip(&mut yc) {
                for k in 0..LANES {
                    acc[k] += r[k] * vv[k];
                    yy[k] += r[k] * vi;
                }
            }
            let mut tail = 0.0;
            for ((r, vv), yy) in rc
                .remainder()
                .iter()
                .zip(vc.remainder())
                .zip(yc.into_remainder())
            {
                tail += r * vv;
                *yy += r * vi;
            }
            y_head[i] += diag + acc.iter().sum::<f64>() + tail;
        }
    }

    /// `G += a (x yᵀ + y xᵀ) + b x xᵀ`.
    pub(crate) fn rank2_update(&mut self, x: &[f64], y: &[f64], a: f64, b: f64) {
        let n = self.n;
        let mut off = 0;
        for i in 0..n {
            let len = n - i;
            let row = &mut self.data[off..off + len];
            off += len;
            let cy = a * x[i];
            let cx = a * y[i] + b * x[i];
            for ((g, &xj), &yj) in row.iter_mut().zip(&x[i..]).zip(&y[i..]) {
                *g += cy * yj + cx * xj;
            }
        }
    }
}
