//! Config-driven runs over a corpus of clips: write one model per clip, read
//! it back in each mode, score the recall and emit CSV/JSON results.

mod config;
mod run;

pub use config::{ExperimentConfig, ReadTemplate};
pub use run::{
    clip_id, discover_clips, prepare_clip, recalled_wav_name, run_experiment, summarize, sweep,
    write_results_csv, ModeSummary, RunRecord, RunSummary, SweepAxis, CSV_COLUMNS, RESULTS_CSV,
    SUMMARY_JSON, SWEEP_CSV,
};
