#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use pcam::audio_io::{save_wav, SegmentedSequence, WavEncoding, Waveform};

/// Three sinusoids at incommensurate ratios.
pub fn three_tone(n: usize, rate: f64, base_hz: f64, phase: f64) -> Vec<f64> {
    let freqs = [base_hz, base_hz * 2f64.sqrt(), base_hz * 1.618_033_988_749_895];
    let amps = [0.5, 0.3, 0.2];
    (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            freqs
                .iter()
                .zip(amps)
                .map(|(f, a)| a * (2.0 * PI * f * t + phase).sin())
                .sum()
        })
        .collect()
}

/// Five 64-sample segments of a continuous three-tone signal at 16 kHz.
pub fn toy_sequence() -> SegmentedSequence {
    let (t, l) = (5, 64);
    let s = three_tone(t * l, 16_000.0, 440.0, 0.0);
    SegmentedSequence::new(Array2::from_shape_vec((t, l), s).unwrap(), 16_000, t * l).unwrap()
}

/// Clip `k` of the desk corpus: 4 s at 16 kHz, a three-tone chord with its
/// own base pitch under a slow amplitude envelope.
pub fn desk_clip(k: usize) -> Waveform {
    let rate = 16_000.0;
    let n = 4 * 16_000;
    let base = 150.0 + 37.0 * k as f64;
    let tones = three_tone(n, rate, base, 0.3 * k as f64);
    let env_hz = 0.5 + 0.11 * k as f64;
    let s = tones
        .iter()
        .enumerate()
        .map(|(i, v)| v * (0.6 + 0.4 * (2.0 * PI * env_hz * i as f64 / rate).sin()))
        .collect();
    Waveform::new(s, 16_000).unwrap()
}

pub fn write_desk_corpus(dir: &Path, n: usize) -> Vec<PathBuf> {
    std::fs::create_dir_all(dir).unwrap();
    (0..n)
        .map(|k| {
            let path = dir.join(format!("clip_{k:02}.wav"));
            save_wav(&desk_clip(k), &path, WavEncoding::Pcm16).unwrap();
            path
        })
        .collect()
}
