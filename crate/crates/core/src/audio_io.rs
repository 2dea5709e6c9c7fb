//! Waveform loading, resampling and segmentation.
//!
//! Everything is converted to 64-bit mono on ingest. Multichannel input is
//! mixed down by averaging channels; no gain is applied unless the caller asks
//! for [`peak_normalize`].

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;

use crate::error::{PcamError, Result};

/// Mono audio signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(PcamError::InvalidArgument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(PcamError::InvalidArgument(format!(
                "sample {i} is not finite"
            )));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Sample encodings accepted by [`save_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let wav_err = |source| PcamError::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(PcamError::UnsupportedEncoding("zero channels".into()));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (format, bits) => {
            return Err(PcamError::UnsupportedEncoding(format!(
                "{bits}-bit {format:?}; expected 16-bit int or 32-bit float"
            )))
        }
    };

    if interleaved.len() < channels {
        return Err(PcamError::EmptyAudio);
    }

    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    Waveform::new(samples, spec.sample_rate)
}

/// Writes a mono WAV. PCM16 output clamps to [-1, 1] before quantizing.
pub fn save_wav(w: &Waveform, path: impl AsRef<Path>, encoding: WavEncoding) -> Result<()> {
    let path = path.as_ref();
    let wav_err = |source| PcamError::Wav {
        path: path.to_path_buf(),
        source,
    };
    let (bits_per_sample, sample_format) = match encoding {
        WavEncoding::Pcm16 => (16, hound::SampleFormat::Int),
        WavEncoding::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample,
        sample_format,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    match encoding {
        WavEncoding::Pcm16 => {
            for &s in &w.samples {
                writer.write_sample(quantize_pcm16(s)).map_err(wav_err)?;
            }
        }
        WavEncoding::Float32 => {
            for &s in &w.samples {
                writer.write_sample(s as f32).map_err(wav_err)?;
            }
        }
    }
    writer.finalize().map_err(wav_err)
}

// Scale by 2^15 in both directions so 16-bit payloads survive a round trip.
fn quantize_pcm16(s: f64) -> i16 {
    (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Zero crossings of the lowpass kernel kept on each side of the output instant.
pub const RESAMPLE_ZERO_CROSSINGS: usize = 32;
/// Passband edge as a fraction of the lower Nyquist frequency.
pub const RESAMPLE_ROLLOFF: f64 = 0.945;
/// Kaiser window shape parameter (roughly 90 dB stopband).
pub const RESAMPLE_KAISER_BETA: f64 = 8.6;

/// Band-limited resampling with a Kaiser-windowed sinc kernel.
///
/// The kernel is evaluated exactly at every tap, so any pair of integer rates
/// works. Samples outside the signal are treated as zero. The output has
/// `round(len * target_rate / sample_rate)` samples.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(PcamError::InvalidArgument("target rate must be positive".into()));
    }
    if target_rate == w.sample_rate {
        return Ok(w.clone());
    }
    let src_rate = w.sample_rate as f64;
    let ratio = target_rate as f64 / src_rate;
    let out_len = (w.len() as f64 * ratio).round() as usize;

    let cutoff = RESAMPLE_ROLLOFF * ratio.min(1.0);
    let half_width = RESAMPLE_ZERO_CROSSINGS as f64 / cutoff;
    let i0_beta = bessel_i0(RESAMPLE_KAISER_BETA);
    let x = &w.samples;
    let n_in = x.len() as i64;

    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        // Exact position of output sample n on the input time axis.
        let t = (n as u64 * w.sample_rate as u64) as f64 / target_rate as f64;
        let first = ((t - half_width).ceil() as i64).max(0);
        let last = ((t + half_width).floor() as i64).min(n_in - 1);
        let mut acc = 0.0;
        for k in first..=last {
            let d = t - k as f64;
            acc += x[k as usize] * kernel(d, cutoff, half_width, i0_beta);
        }
        out.push(acc);
    }
    Waveform::new(out, target_rate)
}

fn kernel(d: f64, cutoff: f64, half_width: f64, i0_beta: f64) -> f64 {
    let u = d / half_width;
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let window = bessel_i0(RESAMPLE_KAISER_BETA * (1.0 - u * u).sqrt()) / i0_beta;
    cutoff * sinc(cutoff * d) * window
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let half_sq = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= half_sq / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Scales the waveform so its largest absolute sample equals `target`.
/// Silent input is returned unchanged.
pub fn peak_normalize(w: &Waveform, target: f64) -> Waveform {
    let peak = w.samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    if peak == 0.0 {
        return w.clone();
    }
    let gain = target / peak;
    Waveform {
        samples: w.samples.iter().map(|s| s * gain).collect(),
        sample_rate: w.sample_rate,
    }
}

/// A waveform cut into `T` equal segments of `l` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedSequence {
    segments: Array2<f64>,
    sample_rate: u32,
    original_len: usize,
}

impl SegmentedSequence {
    /// Wraps a `T x l` array. `original_len` is the number of real (unpadded)
    /// samples and must leave less than one segment of padding.
    pub fn new(segments: Array2<f64>, sample_rate: u32, original_len: usize) -> Result<Self> {
        let (t, l) = segments.dim();
        if t == 0 || l == 0 {
            return Err(PcamError::ShapeMismatch(format!(
                "segmented sequence needs T >= 1 and l >= 1, got {t}x{l}"
            )));
        }
        if sample_rate == 0 {
            return Err(PcamError::InvalidArgument("sample rate must be positive".into()));
        }
        let total = t * l;
        if original_len > total || total - original_len >= l {
            return Err(PcamError::ShapeMismatch(format!(
                "original length {original_len} inconsistent with {t} segments of {l}"
            )));
        }
        if segments.iter().any(|v| !v.is_finite()) {
            return Err(PcamError::InvalidArgument("segments contain non-finite values".into()));
        }
        Ok(SegmentedSequence {
            segments,
            sample_rate,
            original_len,
        })
    }

    pub fn segments(&self) -> &Array2<f64> {
        &self.segments
    }

    pub fn n_segments(&self) -> usize {
        self.segments.nrows()
    }

    pub fn segment_len(&self) -> usize {
        self.segments.ncols()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn original_len(&self) -> usize {
        self.original_len
    }
}

/// Segment length in samples for a duration in milliseconds.
pub fn segment_len_for(segment_ms: f64, sample_rate: u32) -> Result<usize> {
    if !(segment_ms > 0.0) || !segment_ms.is_finite() {
        return Err(PcamError::InvalidArgument(format!(
            "segment_ms must be positive, got {segment_ms}"
        )));
    }
    let l = (segment_ms * sample_rate as f64 / 1000.0).round() as usize;
    if l == 0 {
        return Err(PcamError::InvalidArgument(format!(
            "{segment_ms} ms at {sample_rate} Hz rounds to zero samples"
        )));
    }
    Ok(l)
}

/// Cuts `w` into fixed-length segments, zero-padding the last one. With
/// `max_segments`, only the leading segments are kept.
pub fn segment(w: &Waveform, segment_ms: f64, max_segments: Option<usize>) -> Result<SegmentedSequence> {
    let l = segment_len_for(segment_ms, w.sample_rate)?;
    if w.is_empty() {
        return Err(PcamError::EmptyAudio);
    }
    if max_segments == Some(0) {
        return Err(PcamError::InvalidArgument("max_segments must be at least 1".into()));
    }
    let mut t = w.len().div_ceil(l);
    if let Some(max) = max_segments {
        t = t.min(max);
    }
    let kept = w.len().min(t * l);
    let mut flat = vec![0.0; t * l];
    flat[..kept].copy_from_slice(&w.samples[..kept]);
    let segments = Array2::from_shape_vec((t, l), flat).expect("shape matches buffer");
    SegmentedSequence::new(segments, w.sample_rate, kept)
}

/// Concatenates segments and drops the trailing padding.
pub fn reassemble(s: &SegmentedSequence) -> Waveform {
    let mut samples: Vec<f64> = s.segments.iter().copied().collect();
    samples.truncate(s.original_len);
    Waveform {
        samples,
        sample_rate: s.sample_rate,
    }
}
