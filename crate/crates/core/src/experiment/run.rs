use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::audio_io::{
    load_wav, peak_normalize, reassemble, resample, save_wav, segment, SegmentedSequence,
    WavEncoding,
};
use crate::error::{PcamError, Result};
use crate::metrics::{fidelity_report, FidelityReport};
use crate::pc_model::{
    read_sequence_primed, save_model, write_sequence, MemoryModel, ReadMode,
};

pub const RESULTS_CSV: &str = "results.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SWEEP_CSV: &str = "sweep.csv";

/// One (clip, mode) outcome. Metric fields are empty for failed clips.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub clip_id: String,
    pub mode: ReadMode,
    pub clip_cosine: Option<f64>,
    pub clip_snr_db: Option<f64>,
    pub mean_seg_cosine: Option<f64>,
    pub min_seg_cosine: Option<f64>,
    pub xcorr_lag_median: Option<f64>,
    pub wall_time_s: Option<f64>,
    /// `ok`, or `error:<kind>: <message>`.
    pub status: String,
    pub config_hash: String,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn ok(clip_id: &str, mode: ReadMode, rep: &FidelityReport, hash: &str) -> Self {
        RunRecord {
            clip_id: clip_id.to_string(),
            mode,
            clip_cosine: Some(rep.clip_cosine),
            clip_snr_db: Some(rep.clip_snr_db),
            mean_seg_cosine: Some(rep.mean_segment_cosine()),
            min_seg_cosine: Some(rep.min_segment_cosine()),
            xcorr_lag_median: Some(rep.median_xcorr_lag()),
            wall_time_s: None,
            status: "ok".into(),
            config_hash: hash.to_string(),
        }
    }

    fn failed(clip_id: &str, mode: ReadMode, err: &PcamError, hash: &str) -> Self {
        let msg = err.to_string().replace(['\n', '\r'], " ");
        RunRecord {
            clip_id: clip_id.to_string(),
            mode,
            clip_cosine: None,
            clip_snr_db: None,
            mean_seg_cosine: None,
            min_seg_cosine: None,
            xcorr_lag_median: None,
            wall_time_s: None,
            status: format!("error:{}: {msg}", err.kind()),
            config_hash: hash.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: ReadMode,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean_clip_cosine: Option<f64>,
    pub median_clip_cosine: Option<f64>,
    pub mean_clip_snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub n_clips: usize,
    pub modes: Vec<ModeSummary>,
    /// Clips where both modes succeeded.
    pub n_compared: usize,
    /// Clips where the closed-loop clip cosine is strictly higher.
    pub n_closed_beats_open: usize,
    pub closed_beats_open_fraction: Option<f64>,
}

/// WAV files named by `input`: the file itself, or every `.wav` directly
/// inside a directory, sorted by name.
pub fn discover_clips(input: &Path) -> Result<Vec<PathBuf>> {
    let meta = fs::metadata(input).map_err(|e| PcamError::io(input, e))?;
    if meta.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut clips = Vec::new();
    for entry in fs::read_dir(input).map_err(|e| PcamError::io(input, e))? {
        let path = entry.map_err(|e| PcamError::io(input, e))?.path();
        let is_wav = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if is_wav && path.is_file() {
            clips.push(path);
        }
    }
    clips.sort();
    if clips.is_empty() {
        return Err(PcamError::InvalidArgument(format!(
            "no .wav files in {}",
            input.display()
        )));
    }
    Ok(clips)
}

pub fn clip_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn recalled_wav_name(clip_id: &str, mode: ReadMode) -> String {
    format!("{clip_id}.{mode}.recalled.wav")
}

/// Loads, resamples, optionally normalizes and segments one clip.
pub fn prepare_clip(path: &Path, cfg: &ExperimentConfig) -> Result<SegmentedSequence> {
    let mut wave = resample(&load_wav(path)?, cfg.target_rate)?;
    if cfg.normalize_peak {
        wave = peak_normalize(&wave, 1.0);
    }
    segment(&wave, cfg.segment_ms, Some(cfg.max_segments))
}

fn run_clip(path: &Path, cfg: &ExperimentConfig, hash: &str) -> Vec<RunRecord> {
    let id = clip_id(path);
    let started = Instant::now();
    let written = (|| -> Result<(SegmentedSequence, MemoryModel)> {
        let seq = prepare_clip(path, cfg)?;
        let model = MemoryModel::init(
            cfg.hidden_dim,
            seq.segment_len(),
            cfg.output_nonlinearity,
            cfg.hidden_nonlinearity,
            cfg.seed,
            &cfg.write,
        )?;
        let (model, _) = write_sequence(model, &seq, &cfg.write)?;
        if cfg.save_models {
            save_model(&model, cfg.output_dir.join(format!("{id}.model.pcam")))?;
        }
        Ok((seq, model))
    })();
    let write_time = started.elapsed().as_secs_f64();

    let (seq, model) = match written {
        Ok(v) => v,
        Err(e) => {
            return cfg
                .modes
                .iter()
                .map(|&m| RunRecord::failed(&id, m, &e, hash))
                .collect()
        }
    };

    cfg.modes
        .iter()
        .map(|&mode| {
            let started = Instant::now();
            let outcome = (|| -> Result<RunRecord> {
                let read_cfg = cfg.read.to_config(mode, seq.n_segments());
                let recall = read_sequence_primed(&model, &read_cfg, &seq)?;
                let rep = fidelity_report(&seq, recall.segments.view(), cfg.max_lag_samples())?;
                let recalled =
                    SegmentedSequence::new(recall.segments, seq.sample_rate(), seq.original_len())?;
                save_wav(
                    &reassemble(&recalled),
                    cfg.output_dir.join(recalled_wav_name(&id, mode)),
                    WavEncoding::Float32,
                )?;
                Ok(RunRecord::ok(&id, mode, &rep, hash))
            })();
            let mut record = outcome.unwrap_or_else(|e| RunRecord::failed(&id, mode, &e, hash));
            if cfg.record_timing {
                record.wall_time_s = Some(write_time + started.elapsed().as_secs_f64());
            }
            record
        })
        .collect()
}

/// Writes a model per clip, reads it back in every configured mode and
/// scores the recall. Emits recalled WAVs, `results.csv` and `summary.json`
/// under `cfg.output_dir`. A clip that fails yields error rows and the run
/// carries on.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let clips = discover_clips(&cfg.input)?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| PcamError::io(&cfg.output_dir, e))?;
    let hash = cfg.config_hash();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| PcamError::InvalidConfig(format!("thread pool: {e}")))?;
    let per_clip: Vec<Vec<RunRecord>> =
        pool.install(|| clips.par_iter().map(|c| run_clip(c, cfg, &hash)).collect());
    let mut records: Vec<RunRecord> = per_clip.into_iter().flatten().collect();
    records.sort_by(|a, b| (&a.clip_id, a.mode).cmp(&(&b.clip_id, b.mode)));

    write_results_csv(&records, &cfg.output_dir.join(RESULTS_CSV))?;
    let summary = summarize(&records, &hash);
    let json_path = cfg.output_dir.join(SUMMARY_JSON);
    let json = serde_json::to_string_pretty(&summary)?;
    fs::write(&json_path, json + "\n").map_err(|e| PcamError::io(&json_path, e))?;
    Ok(records)
}

pub const CSV_COLUMNS: [&str; 9] = [
    "clip_id",
    "mode",
    "clip_cosine",
    "clip_snr_db",
    "mean_seg_cosine",
    "min_seg_cosine",
    "xcorr_lag_median",
    "wall_time_s",
    "status",
];

fn csv_fields(r: &RunRecord) -> Vec<String> {
    let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    vec![
        r.clip_id.clone(),
        r.mode.to_string(),
        num(r.clip_cosine),
        num(r.clip_snr_db),
        num(r.mean_seg_cosine),
        num(r.min_seg_cosine),
        num(r.xcorr_lag_median),
        num(r.wall_time_s),
        r.status.clone(),
    ]
}

pub fn write_results_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record(csv_fields(r))?;
    }
    w.flush().map_err(|e| PcamError::io(path, e))
}

fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some((sorted[n / 2 - 1] + sorted[n / 2]) / 2.0),
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn summarize(records: &[RunRecord], config_hash: &str) -> RunSummary {
    let mut clip_ids: Vec<&str> = records.iter().map(|r| r.clip_id.as_str()).collect();
    clip_ids.dedup();

    let mut modes: Vec<ReadMode> = records.iter().map(|r| r.mode).collect();
    modes.sort();
    modes.dedup();
    let modes = modes
        .into_iter()
        .map(|mode| {
            let of_mode: Vec<&RunRecord> = records.iter().filter(|r| r.mode == mode).collect();
            let mut cos: Vec<f64> = of_mode.iter().filter_map(|r| r.clip_cosine).collect();
            cos.sort_by(f64::total_cmp);
            let snr: Vec<f64> = of_mode
                .iter()
                .filter_map(|r| r.clip_snr_db)
                .filter(|v| v.is_finite())
                .collect();
            ModeSummary {
                mode,
                n_ok: of_mode.iter().filter(|r| r.is_ok()).count(),
                n_failed: of_mode.iter().filter(|r| !r.is_ok()).count(),
                mean_clip_cosine: mean(&cos),
                median_clip_cosine: median(&cos),
                mean_clip_snr_db: mean(&snr),
            }
        })
        .collect();

    let cosine_of = |id: &str, mode| {
        records
            .iter()
            .find(|r| r.clip_id == id && r.mode == mode)
            .and_then(|r| r.clip_cosine)
    };
    let pairs: Vec<(f64, f64)> = clip_ids
        .iter()
        .filter_map(|id| Some((cosine_of(id, ReadMode::OpenLoop)?, cosine_of(id, ReadMode::ClosedLoop)?)))
        .collect();
    let wins = pairs.iter().filter(|(open, closed)| closed > open).count();
    RunSummary {
        config_hash: config_hash.to_string(),
        n_clips: clip_ids.len(),
        modes,
        n_compared: pairs.len(),
        n_closed_beats_open: wins,
        closed_beats_open_fraction: (!pairs.is_empty()).then(|| wins as f64 / pairs.len() as f64),
    }
}

/// Parameter varied by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    HiddenDim,
    MaxSegments,
    N2Iters,
    SegmentMs,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::HiddenDim => "hidden_dim",
            SweepAxis::MaxSegments => "max_segments",
            SweepAxis::N2Iters => "n2_iters",
            SweepAxis::SegmentMs => "segment_ms",
        }
    }

    /// `base` with this axis set to `value`. Count axes need integral values.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let count = || -> Result<usize> {
            if value.fract() != 0.0 || value < 0.0 || !value.is_finite() {
                return Err(PcamError::InvalidConfig(format!(
                    "{} takes whole numbers, got {value}",
                    self.as_str()
                )));
            }
            Ok(value as usize)
        };
        let mut cfg = base.clone();
        match self {
            SweepAxis::HiddenDim => cfg.hidden_dim = count()?,
            SweepAxis::MaxSegments => cfg.max_segments = count()?,
            SweepAxis::N2Iters => cfg.read.n2_iters = count()?,
            SweepAxis::SegmentMs => cfg.segment_ms = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = PcamError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hidden_dim" => Ok(SweepAxis::HiddenDim),
            "max_segments" => Ok(SweepAxis::MaxSegments),
            "n2_iters" => Ok(SweepAxis::N2Iters),
            "segment_ms" => Ok(SweepAxis::SegmentMs),
            other => Err(PcamError::InvalidArgument(format!("unknown sweep axis '{other}'"))),
        }
    }
}

/// One [`run_experiment`] per value, each in `<output_dir>/<axis>=<value>`,
/// plus a long-format `sweep.csv` in `base.output_dir`. Every value is
/// validated before any clip is processed.
pub fn sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
) -> Result<Vec<(f64, Vec<RunRecord>)>> {
    if values.is_empty() {
        return Err(PcamError::InvalidConfig("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|&v| {
            let mut cfg = axis.apply(base, v)?;
            cfg.output_dir = base.output_dir.join(format!("{}={v}", axis.as_str()));
            Ok((v, cfg))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut blocks = Vec::with_capacity(configs.len());
    for (v, cfg) in configs {
        blocks.push((v, run_experiment(&cfg)?));
    }

    let path = base.output_dir.join(SWEEP_CSV);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["axis", "value"].iter().chain(CSV_COLUMNS.iter()))?;
    for (value, records) in &blocks {
        for record in records {
            let mut row = vec![axis.as_str().to_string(), value.to_string()];
            row.extend(csv_fields(record));
            w.write_record(row)?;
        }
    }
    w.flush().map_err(|e| PcamError::io(&path, e))?;
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, mode: ReadMode, cos: Option<f64>) -> RunRecord {
        RunRecord {
            clip_id: id.into(),
            mode,
            clip_cosine: cos,
            clip_snr_db: cos.map(|_| 1.0),
            mean_seg_cosine: cos,
            min_seg_cosine: cos,
            xcorr_lag_median: cos.map(|_| 0.0),
            wall_time_s: None,
            status: if cos.is_some() { "ok".into() } else { "error:x: y".into() },
            config_hash: String::new(),
        }
    }

    #[test]
    fn summary_counts_wins() {
        use ReadMode::*;
        let records = vec![
            rec("a", OpenLoop, Some(0.1)),
            rec("a", ClosedLoop, Some(0.9)),
            rec("b", OpenLoop, Some(0.5)),
            rec("b", ClosedLoop, Some(0.4)),
            rec("c", OpenLoop, None),
            rec("c", ClosedLoop, None),
        ];
        let s = summarize(&records, "h");
        assert_eq!(s.n_clips, 3);
        assert_eq!(s.n_compared, 2);
        assert_eq!(s.n_closed_beats_open, 1);
        assert_eq!(s.closed_beats_open_fraction, Some(0.5));
        let open = &s.modes[0];
        assert_eq!(open.mode, OpenLoop);
        assert_eq!((open.n_ok, open.n_failed), (2, 1));
        assert!((open.mean_clip_cosine.unwrap() - 0.3).abs() < 1e-12);
        assert!((open.median_clip_cosine.unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn sweep_axis_values_are_checked() {
        let base = ExperimentConfig::default();
        assert!(SweepAxis::HiddenDim.apply(&base, 0.0).is_err());
        assert!(SweepAxis::HiddenDim.apply(&base, 2.5).is_err());
        assert!(SweepAxis::SegmentMs.apply(&base, 0.0).is_err());
        assert_eq!(SweepAxis::N2Iters.apply(&base, 7.0).unwrap().read.n2_iters, 7);
        assert_eq!(SweepAxis::SegmentMs.apply(&base, 50.0).unwrap().segment_ms, 50.0);
        assert!("hidden_dim".parse::<SweepAxis>().is_ok());
        assert!("epochs".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn names() {
        assert_eq!(
            recalled_wav_name("dog_01", ReadMode::ClosedLoop),
            "dog_01.closed_loop.recalled.wav"
        );
        assert_eq!(clip_id(Path::new("/x/y/dog_01.wav")), "dog_01");
    }
}
