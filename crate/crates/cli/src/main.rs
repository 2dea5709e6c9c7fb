use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pcam::audio_io::{load_wav, resample, save_wav, segment, WavEncoding, Waveform};
use pcam::experiment::{run_experiment, summarize, sweep, ExperimentConfig, RunRecord, SweepAxis};
use pcam::gradcheck::{gradcheck, GradcheckConfig};
use pcam::metrics::fidelity_report;
use pcam::pc_model::{
    load_model, read_sequence, save_model, write_sequence_with, MemoryModel, Nonlinearity,
    ReadConfig, ReadMode,
};
use pcam::PcamError;

/// Predictive-coding memory for audio sequences.
#[derive(Parser)]
#[command(name = "pcam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Memorize one WAV clip into a model file.
    Write(WriteArgs),
    /// Recall a clip from a model file.
    Read(ReadArgs),
    /// Compare an original and a recalled WAV; prints JSON.
    Eval(EvalArgs),
    /// Run an experiment from a TOML config.
    Run(RunArgs),
    /// Repeat an experiment over values of one parameter.
    Sweep(SweepArgs),
    /// Check the update rules against finite differences of the energy.
    Gradcheck(GradcheckArgs),
    /// Print the full experiment config with every default filled in.
    PrintConfig(PrintConfigArgs),
}

#[derive(Args)]
struct WriteArgs {
    /// Clip to memorize.
    #[arg(long)]
    input: PathBuf,
    /// Where to write the model.
    #[arg(long)]
    model_out: PathBuf,
    /// Base settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    n1_iters: Option<usize>,
    #[arg(long)]
    eta_h: Option<f64>,
    #[arg(long)]
    eta_w: Option<f64>,
    #[arg(long)]
    weight_init_std: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    segment_ms: Option<f64>,
    #[arg(long)]
    max_segments: Option<usize>,
    #[arg(long)]
    target_rate: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    normalize_peak: bool,
}

#[derive(Args)]
struct ReadArgs {
    #[arg(long)]
    model: PathBuf,
    /// Recalled audio, written as 32-bit float WAV.
    #[arg(long)]
    output: PathBuf,
    /// open_loop or closed_loop.
    #[arg(long, default_value = "closed_loop")]
    mode: ReadMode,
    /// Number of segments to recall.
    #[arg(long, default_value_t = ReadConfig::default().n_segments)]
    segments: usize,
    #[arg(long, default_value_t = ReadConfig::default().n2_iters)]
    n2_iters: usize,
    #[arg(long, default_value_t = ReadConfig::default().eta_x)]
    eta_x: f64,
    #[arg(long, default_value_t = ReadConfig::default().eta_h)]
    eta_h: f64,
    /// Sample rate stamped on the output WAV.
    #[arg(long, default_value_t = 16_000)]
    sample_rate: u32,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    original: PathBuf,
    #[arg(long)]
    recalled: PathBuf,
    #[arg(long, default_value_t = 200.0)]
    segment_ms: f64,
    #[arg(long, default_value_t = 10.0)]
    max_lag_ms: f64,
    /// Cut both signals to the shorter length instead of failing.
    #[arg(long)]
    truncate: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `jobs` from the config.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// hidden_dim, max_segments, n2_iters or segment_ms.
    #[arg(long)]
    axis: SweepAxis,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = GradcheckConfig::default().trials)]
    trials: usize,
    #[arg(long, default_value_t = GradcheckConfig::default().hidden_dim)]
    hidden: usize,
    #[arg(long, default_value_t = GradcheckConfig::default().segment_len)]
    seglen: usize,
    #[arg(long, default_value_t = GradcheckConfig::default().tolerance)]
    tolerance: f64,
    #[arg(long, default_value_t = GradcheckConfig::default().fd_step)]
    fd_step: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "tanh")]
    f: Nonlinearity,
    #[arg(long, default_value = "tanh")]
    g: Nonlinearity,
    #[arg(long, default_value_t = 1.0, hide = true)]
    fault_scale: f64,
}

#[derive(Args)]
struct PrintConfigArgs {
    /// Fill defaults into an existing config instead of printing the stock one.
    #[arg(long)]
    config: Option<PathBuf>,
}

enum Outcome {
    Ok,
    Failed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid usage");
            let first = first.trim_start_matches("error: ");
            eprintln!("error kind=usage msg={first:?}");
            return ExitCode::from(2);
        }
    };
    match dispatch(cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error kind={} msg={:?}", e.kind(), e.to_string());
            let code = match e {
                PcamError::InvalidConfig(_) | PcamError::InvalidArgument(_) => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn dispatch(cmd: Command) -> pcam::Result<Outcome> {
    match cmd {
        Command::Write(a) => cmd_write(a),
        Command::Read(a) => cmd_read(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::PrintConfig(a) => cmd_print_config(a),
    }
}

fn base_config(path: Option<&Path>) -> pcam::Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn cmd_write(a: WriteArgs) -> pcam::Result<Outcome> {
    let mut cfg = base_config(a.config.as_deref())?;
    cfg.input = a.input.clone();
    macro_rules! set {
        ($($flag:ident => $($field:ident).+),* $(,)?) => {
            $(if let Some(v) = a.$flag { cfg.$($field).+ = v; })*
        };
    }
    set!(
        epochs => write.epochs,
        n1_iters => write.n1_iters,
        eta_h => write.eta_h,
        eta_w => write.eta_w,
        weight_init_std => write.weight_init_std,
        hidden => hidden_dim,
        segment_ms => segment_ms,
        max_segments => max_segments,
        target_rate => target_rate,
        seed => seed,
    );
    cfg.normalize_peak |= a.normalize_peak;
    cfg.write.validate()?;

    let seq = pcam::experiment::prepare_clip(&a.input, &cfg)?;
    let model = MemoryModel::init(
        cfg.hidden_dim,
        seq.segment_len(),
        cfg.output_nonlinearity,
        cfg.hidden_nonlinearity,
        cfg.seed,
        &cfg.write,
    )?;
    let (model, history) = write_sequence_with(model, &seq, &cfg.write, |epoch, energy| {
        println!("epoch={epoch} energy={energy}");
    })?;
    save_model(&model, &a.model_out)?;
    println!(
        "model={} hidden_dim={} segment_len={} segments={} sample_rate={} final_energy={}",
        a.model_out.display(),
        model.hidden_dim(),
        model.segment_len(),
        seq.n_segments(),
        seq.sample_rate(),
        history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(Outcome::Ok)
}

fn cmd_read(a: ReadArgs) -> pcam::Result<Outcome> {
    let model = load_model(&a.model)?;
    let cfg = ReadConfig {
        n2_iters: a.n2_iters,
        eta_x: a.eta_x,
        eta_h: a.eta_h,
        mode: a.mode,
        n_segments: a.segments,
        prime_segments: 0,
    };
    let recall = read_sequence(&model, &cfg)?;
    let samples: Vec<f64> = recall.segments.iter().copied().collect();
    let wave = Waveform::new(samples, a.sample_rate)?;
    save_wav(&wave, &a.output, WavEncoding::Float32)?;
    for (mu, trace) in recall.energy_trace.iter().enumerate() {
        println!(
            "segment={mu} final_energy={}",
            trace.last().copied().unwrap_or(0.0)
        );
    }
    println!(
        "output={} mode={} segments={} samples={}",
        a.output.display(),
        recall.mode,
        a.segments,
        wave.len()
    );
    Ok(Outcome::Ok)
}

fn cmd_eval(a: EvalArgs) -> pcam::Result<Outcome> {
    let original = load_wav(&a.original)?;
    let mut recalled = load_wav(&a.recalled)?;
    if recalled.sample_rate() != original.sample_rate() {
        recalled = resample(&recalled, original.sample_rate())?;
    }
    let rate = original.sample_rate();
    let (mut o, mut r) = (original.into_samples(), recalled.into_samples());
    if o.len() != r.len() {
        if !a.truncate {
            return Err(PcamError::ShapeMismatch(format!(
                "original has {} samples, recall has {} (use --truncate)",
                o.len(),
                r.len()
            )));
        }
        let n = o.len().min(r.len());
        o.truncate(n);
        r.truncate(n);
    }
    let orig_seq = segment(&Waveform::new(o, rate)?, a.segment_ms, None)?;
    let rec_seq = segment(&Waveform::new(r, rate)?, a.segment_ms, None)?;
    let max_lag = (a.max_lag_ms * rate as f64 / 1000.0).round() as usize;
    let report = fidelity_report(&orig_seq, rec_seq.segments().view(), max_lag)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(Outcome::Ok)
}

fn print_records(records: &[RunRecord]) {
    let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "-".into());
    for r in records {
        println!(
            "clip_id={} mode={} clip_cosine={} clip_snr_db={} status={:?}",
            r.clip_id,
            r.mode,
            num(r.clip_cosine),
            num(r.clip_snr_db),
            r.status
        );
    }
}

fn run_config(path: &Path, jobs: Option<usize>, out: Option<PathBuf>) -> pcam::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(j) = jobs {
        cfg.jobs = j;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(a: RunArgs) -> pcam::Result<Outcome> {
    let cfg = run_config(&a.config, a.jobs, a.output_dir)?;
    let records = run_experiment(&cfg)?;
    print_records(&records);
    let s = summarize(&records, &cfg.config_hash());
    for m in &s.modes {
        println!(
            "summary mode={} n_ok={} n_failed={} mean_clip_cosine={}",
            m.mode,
            m.n_ok,
            m.n_failed,
            m.mean_clip_cosine.map(|v| v.to_string()).unwrap_or_else(|| "-".into())
        );
    }
    println!(
        "summary closed_beats_open={}/{} config_hash={}",
        s.n_closed_beats_open, s.n_compared, s.config_hash
    );
    Ok(Outcome::Ok)
}

fn cmd_sweep(a: SweepArgs) -> pcam::Result<Outcome> {
    let cfg = run_config(&a.config, a.jobs, a.output_dir)?;
    for (value, records) in sweep(&cfg, a.axis, &a.values)? {
        println!("axis={} value={value} rows={}", a.axis.as_str(), records.len());
        print_records(&records);
    }
    Ok(Outcome::Ok)
}

fn cmd_gradcheck(a: GradcheckArgs) -> pcam::Result<Outcome> {
    let cfg = GradcheckConfig {
        trials: a.trials,
        hidden_dim: a.hidden,
        segment_len: a.seglen,
        tolerance: a.tolerance,
        fd_step: a.fd_step,
        seed: a.seed,
        output_fn: a.f,
        hidden_fn: a.g,
        fault_scale: a.fault_scale,
    };
    let report = gradcheck(&cfg)?;
    for t in &report.trials {
        println!(
            "trial={} worst_rel_err={:e} hidden={:e} w_out={:e} w_hidden={:e}",
            t.trial,
            t.worst(),
            t.hidden_err,
            t.w_out_err,
            t.w_hidden_err
        );
    }
    let passed = report.passed();
    println!(
        "status={} worst_rel_err={:e} tolerance={:e}",
        if passed { "pass" } else { "fail" },
        report.worst(),
        report.tolerance
    );
    Ok(if passed { Outcome::Ok } else { Outcome::Failed })
}

fn cmd_print_config(a: PrintConfigArgs) -> pcam::Result<Outcome> {
    print!("{}", base_config(a.config.as_deref())?.to_toml_string());
    Ok(Outcome::Ok)
}
