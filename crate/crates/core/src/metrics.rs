//! Waveform-level fidelity between original and recalled audio.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::audio_io::SegmentedSequence;
use crate::error::{PcamError, Result};

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(PcamError::ShapeMismatch(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn segment_mse(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b)?;
    if a.is_empty() {
        return Err(PcamError::InvalidArgument("mse of empty vectors".into()));
    }
    let sse: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sse / a.len() as f64)
}

/// Cosine similarity, defined as 0 when either vector has zero norm.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b)?;
    let na = sum_sq(a);
    let nb = sum_sq(b);
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Signal-to-noise ratio of `estimate` against `reference`, in dB.
/// Returns `f64::INFINITY` when the residual is exactly zero.
pub fn snr_db(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    same_len(reference, estimate)?;
    let signal = sum_sq(reference);
    if signal == 0.0 {
        return Err(PcamError::InvalidArgument("snr of a zero reference".into()));
    }
    let noise: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(r, e)| (r - e) * (r - e))
        .sum();
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

/// Normalized cross-correlation at a single lag. A positive lag means the
/// estimate trails the reference: `Σ_n r[n] e[n + lag] / (|r| |e|)`.
pub fn xcorr_at(reference: &[f64], estimate: &[f64], lag: isize) -> f64 {
    let nr = sum_sq(reference);
    let ne = sum_sq(estimate);
    if nr == 0.0 || ne == 0.0 {
        return 0.0;
    }
    let n = reference.len() as isize;
    let (start, end) = (0.max(-lag), n.min(n - lag));
    let mut acc = 0.0;
    for i in start..end {
        acc += reference[i as usize] * estimate[(i + lag) as usize];
    }
    (acc / (nr.sqrt() * ne.sqrt())).clamp(-1.0, 1.0)
}

/// Highest normalized cross-correlation over lags in `[-max_lag, max_lag]`.
/// Ties go to the smaller `|lag|`, then to the negative lag.
pub fn xcorr_peak(reference: &[f64], estimate: &[f64], max_lag: usize) -> Result<(f64, isize)> {
    same_len(reference, estimate)?;
    if max_lag >= reference.len() {
        return Err(PcamError::InvalidArgument(format!(
            "max_lag {max_lag} must be below the signal length {}",
            reference.len()
        )));
    }
    let max_lag = max_lag as isize;
    let mut best = (xcorr_at(reference, estimate, 0), 0);
    for k in 1..=max_lag {
        for lag in [-k, k] {
            let c = xcorr_at(reference, estimate, lag);
            if c > best.0 {
                best = (c, lag);
            }
        }
    }
    Ok(best)
}

/// Per-segment fidelity numbers. `snr_db` is NaN for a silent reference
/// segment, where the ratio is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentFidelity {
    pub mse: f64,
    pub cosine: f64,
    pub snr_db: f64,
    pub xcorr_peak: f64,
    pub xcorr_lag: isize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub per_segment: Vec<SegmentFidelity>,
    pub clip_cosine: f64,
    pub clip_snr_db: f64,
    pub n_segments: usize,
}

impl FidelityReport {
    pub fn mean_segment_cosine(&self) -> f64 {
        self.per_segment.iter().map(|s| s.cosine).sum::<f64>() / self.n_segments as f64
    }

    pub fn min_segment_cosine(&self) -> f64 {
        self.per_segment
            .iter()
            .map(|s| s.cosine)
            .fold(f64::INFINITY, f64::min)
    }

    /// Median lag, rounded toward zero for an even count.
    pub fn median_xcorr_lag(&self) -> f64 {
        let mut lags: Vec<isize> = self.per_segment.iter().map(|s| s.xcorr_lag).collect();
        lags.sort_unstable();
        let n = lags.len();
        if n % 2 == 1 {
            lags[n / 2] as f64
        } else {
            (lags[n / 2 - 1] + lags[n / 2]) as f64 / 2.0
        }
    }
}

fn snr_or_nan(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if sum_sq(reference) == 0.0 {
        Ok(f64::NAN)
    } else {
        snr_db(reference, estimate)
    }
}

/// Compares `recalled` (one row per segment) against `original`. Clip-level
/// numbers use the concatenated segments cut back to the original length.
pub fn fidelity_report(
    original: &SegmentedSequence,
    recalled: ArrayView2<f64>,
    max_lag: usize,
) -> Result<FidelityReport> {
    let orig = original.segments();
    if orig.dim() != recalled.dim() {
        return Err(PcamError::ShapeMismatch(format!(
            "original is {:?}, recall is {:?}",
            orig.dim(),
            recalled.dim()
        )));
    }
    let mut per_segment = Vec::with_capacity(orig.nrows());
    for (o, r) in orig.rows().into_iter().zip(recalled.rows()) {
        let o = o.to_vec();
        let r = r.to_vec();
        let (xcorr_peak, xcorr_lag) = xcorr_peak(&o, &r, max_lag)?;
        per_segment.push(SegmentFidelity {
            mse: segment_mse(&o, &r)?,
            cosine: cosine_sim(&o, &r)?,
            snr_db: snr_or_nan(&o, &r)?,
            xcorr_peak,
            xcorr_lag,
        });
    }
    let n = original.original_len();
    let clip_o: Vec<f64> = orig.iter().take(n).copied().collect();
    let clip_r: Vec<f64> = recalled.iter().take(n).copied().collect();
    Ok(FidelityReport {
        n_segments: per_segment.len(),
        per_segment,
        clip_cosine: cosine_sim(&clip_o, &clip_r)?,
        clip_snr_db: snr_or_nan(&clip_o, &clip_r)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn mse_basics() {
        assert_eq!(segment_mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(segment_mse(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!(segment_mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cosine_basics() {
        let a = [0.3, -1.2, 2.0];
        assert!((cosine_sim(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((cosine_sim(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(cosine_sim(&a, &[0.0; 3]).unwrap(), 0.0);
        assert!(cosine_sim(&a, &[1.0]).is_err());
    }

    #[test]
    fn snr_basics() {
        let r = [0.5, -0.25, 1.0];
        assert_eq!(snr_db(&r, &r).unwrap(), f64::INFINITY);
        assert!(snr_db(&r, &[0.0; 3]).unwrap().abs() < 1e-12);
        assert!(snr_db(&[0.0; 3], &r).is_err());
    }

    #[test]
    fn xcorr_basics() {
        let r: Vec<f64> = (0..64).map(|i| ((i * 37 % 11) as f64 - 5.0) / 5.0).collect();
        assert_eq!(xcorr_peak(&r, &r, 10).unwrap().1, 0);
        assert!((xcorr_peak(&r, &r, 10).unwrap().0 - 1.0).abs() < 1e-12);

        let mut shifted = vec![0.0; r.len()];
        shifted[5..].copy_from_slice(&r[..r.len() - 5]);
        let (peak, lag) = xcorr_peak(&r, &shifted, 8).unwrap();
        assert_eq!(lag, 5);
        assert!(peak > 0.9);

        let (peak0, lag0) = xcorr_peak(&r, &shifted, 0).unwrap();
        assert_eq!(lag0, 0);
        assert_eq!(peak0, cosine_sim(&r, &shifted).unwrap());

        assert!(xcorr_peak(&r, &r, 64).is_err());
    }

    #[test]
    fn xcorr_ties_prefer_small_then_negative_lag() {
        // Constant signals correlate equally at ±1 once edges are excluded by
        // symmetry; the peak is at lag 0 anyway.
        let r = [1.0, 0.0, 1.0];
        let e = [0.0, 1.0, 0.0];
        // lag -1 and +1 both give 1/sqrt(2); lag 0 gives 0.
        let (peak, lag) = xcorr_peak(&r, &e, 1).unwrap();
        assert_eq!(lag, -1);
        assert!((peak - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn report_on_identical_and_silent_recall() {
        let seg = Array2::from_shape_fn((3, 8), |(i, j)| ((i * 8 + j) as f64 * 0.7).sin());
        let orig = SegmentedSequence::new(seg.clone(), 8000, 24).unwrap();
        let rep = fidelity_report(&orig, seg.view(), 2).unwrap();
        assert_eq!(rep.n_segments, 3);
        for s in &rep.per_segment {
            assert!((s.cosine - 1.0).abs() < 1e-12);
            assert_eq!(s.mse, 0.0);
            assert_eq!(s.xcorr_lag, 0);
        }
        assert!((rep.clip_cosine - 1.0).abs() < 1e-12);

        let zeros = Array2::zeros((3, 8));
        let rep = fidelity_report(&orig, zeros.view(), 2).unwrap();
        assert_eq!(rep.clip_cosine, 0.0);
        assert!(rep.per_segment.iter().all(|s| s.cosine == 0.0));

        assert!(fidelity_report(&orig, Array2::zeros((2, 8)).view(), 2).is_err());
    }

    #[test]
    fn median_lag() {
        let mk = |lags: &[isize]| FidelityReport {
            per_segment: lags
                .iter()
                .map(|&l| SegmentFidelity {
                    mse: 0.0,
                    cosine: 0.0,
                    snr_db: 0.0,
                    xcorr_peak: 0.0,
                    xcorr_lag: l,
                })
                .collect(),
            clip_cosine: 0.0,
            clip_snr_db: 0.0,
            n_segments: lags.len(),
        };
        assert_eq!(mk(&[3, -1, 2]).median_xcorr_lag(), 2.0);
        assert_eq!(mk(&[3, -1, 2, 4]).median_xcorr_lag(), 2.5);
    }
}
