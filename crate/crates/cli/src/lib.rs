//! Command-line front end: `train`, `eval`, `predict` and `inspect`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 internal invariant violation.

pub mod config;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use spikefuse::data::{
    load_beats, load_csv, read_beat_rows, split, synth_ett, synth_multimodal, window, window_inputs, CsvSchema,
    Direction, Normalizer, Sample, SeriesDataset, Split, SplitMode, SynthTask, Target, WindowTarget,
};
use spikefuse::fusion::Task;
use spikefuse::model::{InputShape, Model};
use spikefuse::numerics::{fft1d, softmax, Tensor};
use spikefuse::param::Parameterized;
use spikefuse::train::{evaluate, predict_all, train_loop, Checkpoint, Control, History, Metrics, RngState};
use spikefuse::ErrorKind;

pub use config::{RunConfig, TaskKind};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const HISTORY_FILE: &str = "history.csv";
pub const TRACES_FILE: &str = "traces.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const SPECTRUM_FILE: &str = "spectrum.csv";
/// Samples used for an activation heatmap.
const HEATMAP_SAMPLES: usize = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] spikefuse::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => 1,
                ErrorKind::Data => 2,
                ErrorKind::Internal => 3,
            },
            CliError::Io { .. } => 2,
            CliError::Internal(_) => 3,
        }
    }

    fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Self {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "spikefuse", version, about = "Multi-modal spiking network for time series")]
pub struct Cli {
    /// Log progress at info level.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Checkpoint to read (or, for train, to write).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Disable wavelet preprocessing.
    #[arg(long)]
    pub no_wavelet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InspectWhat {
    Heatmap,
    Spectrum,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a checkpoint, history.csv and traces.csv.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Dataset override (CSV path or "synthetic").
        #[arg(long)]
        data: Option<String>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
    },
    /// Write predictions for every sample of an input CSV.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Emit activation heatmaps or training spectra as CSV.
    Inspect {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        what: InspectWhat,
        /// Sample source override for heatmaps.
        #[arg(long)]
        data: Option<String>,
        /// traces.csv to analyse (defaults to the one beside the checkpoint).
        #[arg(long)]
        traces: Option<PathBuf>,
        /// Also write a grayscale PGM rendering of the heatmap.
        #[arg(long)]
        render: bool,
    },
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Train { common } => cmd_train(&common).map(|_| ()),
        Command::Eval { common, data, split } => cmd_eval(&common, data.as_deref(), split).map(|_| ()),
        Command::Predict { common, input } => cmd_predict(&common, &input).map(|_| ()),
        Command::Inspect {
            common,
            what,
            data,
            traces,
            render,
        } => cmd_inspect(&common, what, data.as_deref(), traces.as_deref(), render).map(|_| ()),
    }
}

/// Configuration snapshot stored inside a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub config: RunConfig,
    pub input: InputShape,
    pub channels: Vec<String>,
}

/// Samples of a configured source, normalized with train-split statistics.
pub struct Prepared {
    pub split: Split,
    pub normalizer: Normalizer,
    pub channels: Vec<String>,
}

fn resolve_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if common.no_wavelet {
        cfg.wavelet = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn target_index(channels: &[String], cfg: &RunConfig, path: &str) -> Result<usize> {
    channels.iter().position(|c| *c == cfg.target_column).ok_or_else(|| {
        CliError::Core(spikefuse::Error::MissingColumn {
            path: PathBuf::from(path),
            column: cfg.target_column.clone(),
        })
    })
}

fn forecast_series(cfg: &RunConfig) -> Result<SeriesDataset> {
    if cfg.is_synthetic() {
        return Ok(synth_ett(cfg.seed, cfg.synth_rows));
    }
    let schema = CsvSchema {
        timestamp_column: cfg.timestamp_column.clone(),
        value_columns: cfg.value_columns.clone(),
        label_column: None,
        gap_policy: cfg.gap_policy,
    };
    Ok(load_csv(Path::new(&cfg.data), &schema)?)
}

/// Raw (unnormalized) samples and channel names of the configured source.
pub fn load_samples(cfg: &RunConfig) -> Result<(Vec<Sample>, Vec<String>, Option<usize>)> {
    match cfg.task {
        TaskKind::Classify => {
            let samples = if cfg.is_synthetic() {
                synth_multimodal(
                    cfg.seed,
                    cfg.synth_samples,
                    SynthTask::Classify {
                        classes: cfg.classes,
                        len: cfg.synth_len,
                    },
                )?
            } else {
                load_beats(Path::new(&cfg.data), &cfg.label_column)?
            };
            if let Some(bad) = samples.iter().filter_map(|s| s.label()).find(|&c| c >= cfg.classes) {
                return Err(spikefuse::Error::Data(format!("label {bad} outside 0..{}", cfg.classes)).into());
            }
            Ok((samples, vec!["value".into()], None))
        }
        TaskKind::Forecast => {
            let ds = forecast_series(cfg)?;
            let target = target_index(&ds.channels, cfg, &cfg.data)?;
            let samples = window(
                &ds,
                cfg.lookback,
                cfg.horizon,
                cfg.stride,
                WindowTarget::Forecast { channel: target },
                target,
            )?;
            Ok((samples, ds.channels, Some(target)))
        }
    }
}

fn split_mode(task: TaskKind) -> SplitMode {
    match task {
        TaskKind::Classify => SplitMode::Stratified,
        TaskKind::Forecast => SplitMode::Chronological,
    }
}

fn normalize_all(samples: &[Sample], n: &Normalizer) -> Result<Vec<Sample>> {
    Ok(samples
        .iter()
        .map(|s| n.sample(s, Direction::Apply))
        .collect::<spikefuse::Result<_>>()?)
}

/// Loads, splits and normalizes data. With `normalizer` given, it is used
/// instead of fitting one on the train split.
pub fn prepare(cfg: &RunConfig, normalizer: Option<&Normalizer>) -> Result<Prepared> {
    let (samples, channels, target) = load_samples(cfg)?;
    let raw = split(samples, cfg.split, cfg.seed, split_mode(cfg.task))?;
    if raw.train.is_empty() || raw.val.is_empty() {
        return Err(spikefuse::Error::Data(format!(
            "split {:?} leaves an empty train or validation set",
            cfg.split
        ))
        .into());
    }
    let normalizer = match normalizer {
        Some(n) => n.clone(),
        None => Normalizer::fit_samples(&raw.train, &channels, target)?,
    };
    let split = Split {
        train: normalize_all(&raw.train, &normalizer)?,
        val: normalize_all(&raw.val, &normalizer)?,
        test: normalize_all(&raw.test, &normalizer)?,
    };
    Ok(Prepared {
        split,
        normalizer,
        channels,
    })
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let target = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(CliError::io(format!("temp file in {}", dir.display())))?;
    tmp.write_all(bytes).map_err(CliError::io(format!("writing {}", target.display())))?;
    tmp.as_file().sync_all().map_err(CliError::io(format!("syncing {}", target.display())))?;
    tmp.persist(&target)
        .map_err(|e| CliError::io(format!("renaming onto {}", target.display()))(e.error))?;
    Ok(target)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))
}

pub fn history_csv(history: &History, task: Task) -> String {
    let mut s = String::from("epoch,train_loss,val_loss");
    for m in Metrics::names(task) {
        s.push(',');
        s.push_str(m);
    }
    s.push('\n');
    for r in &history.records {
        write!(s, "{},{},{}", r.epoch, r.train_loss, r.val_loss).unwrap();
        for v in r.metrics.values() {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn traces_csv(history: &History) -> String {
    let mut s = String::from("epoch,component,index,value\n");
    for r in &history.records {
        for (name, values) in r.traces.components() {
            for (i, v) in values.iter().enumerate() {
                writeln!(s, "{},{name},{i},{v}", r.epoch).unwrap();
            }
        }
    }
    s
}

/// Result of a completed training command.
pub struct TrainOutcome {
    pub history: History,
    pub checkpoint: PathBuf,
    pub out_dir: PathBuf,
}

pub fn cmd_train(common: &Common) -> Result<TrainOutcome> {
    let cfg = resolve_config(common)?;
    let prepared = prepare(&cfg, None)?;
    let task = cfg.task_spec();
    let input = InputShape::of(&prepared.split.train[0])?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::new(cfg.model(), task, input, &mut rng)?;
    log::info!("model has {} parameters", model.param_count());

    let history = train_loop(
        &mut model,
        &prepared.split.train,
        &prepared.split.val,
        &cfg.train(),
        &mut rng,
        |_| Control::Continue,
    )?;

    let snapshot = Snapshot {
        config: RunConfig {
            out: PathBuf::new(),
            ..cfg.clone()
        },
        input,
        channels: prepared.channels.clone(),
    };
    let checkpoint = Checkpoint {
        config: serde_json::to_string(&snapshot).map_err(|e| CliError::Internal(e.to_string()))?,
        rng: RngState::capture(&rng),
        normalizer: Some(prepared.normalizer.clone()),
        tensors: model.params().into_iter().map(|(n, t)| (n, t.clone())).collect(),
    };

    let out_dir = cfg.out.clone();
    let ckpt_path = common.checkpoint.clone().unwrap_or_else(|| out_dir.join(CHECKPOINT_FILE));
    ensure_dir(&out_dir)?;
    let ckpt_dir = ckpt_path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    ensure_dir(ckpt_dir)?;
    let ckpt_name = ckpt_path
        .file_name()
        .ok_or_else(|| CliError::Usage(format!("--checkpoint {} has no file name", ckpt_path.display())))?
        .to_string_lossy()
        .into_owned();
    write_atomic(&out_dir, HISTORY_FILE, history_csv(&history, task).as_bytes())?;
    write_atomic(&out_dir, TRACES_FILE, traces_csv(&history).as_bytes())?;
    let checkpoint_path = write_atomic(ckpt_dir, &ckpt_name, &checkpoint.to_bytes())?;
    if let Some(last) = history.records.last() {
        println!(
            "trained {} epochs (best {}): val_loss {} {}",
            history.records.len(),
            history.best_epoch,
            last.val_loss,
            format_metrics(task, &last.metrics)
        );
    }
    Ok(TrainOutcome {
        history,
        checkpoint: checkpoint_path,
        out_dir,
    })
}

fn format_metrics(task: Task, m: &Metrics) -> String {
    Metrics::names(task)
        .iter()
        .zip(m.values())
        .map(|(n, v)| format!("{n}={v:.6}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// A model restored from a checkpoint file.
pub struct Restored {
    pub model: Model,
    pub snapshot: Snapshot,
    pub normalizer: Normalizer,
    pub path: PathBuf,
}

fn checkpoint_path(common: &Common) -> Result<PathBuf> {
    if let Some(p) = &common.checkpoint {
        return Ok(p.clone());
    }
    if let Some(out) = &common.out {
        return Ok(out.join(CHECKPOINT_FILE));
    }
    if common.config.is_some() {
        return Ok(resolve_config(common)?.out.join(CHECKPOINT_FILE));
    }
    Err(CliError::Usage("no checkpoint given (use --checkpoint, --out or --config)".into()))
}

pub fn restore(common: &Common) -> Result<Restored> {
    let path = checkpoint_path(common)?;
    let bytes = std::fs::read(&path).map_err(CliError::io(format!("reading checkpoint {}", path.display())))?;
    let ckpt = Checkpoint::from_bytes(&bytes)?;
    let snapshot: Snapshot = serde_json::from_str(&ckpt.config)
        .map_err(|e| spikefuse::Error::Integrity(format!("config snapshot: {e}")))?;
    if common.no_wavelet && snapshot.config.wavelet {
        return Err(CliError::Usage("--no-wavelet conflicts with a checkpoint trained with wavelets".into()));
    }
    let normalizer = ckpt
        .normalizer
        .clone()
        .ok_or_else(|| spikefuse::Error::Integrity("checkpoint has no normalizer".into()))?;
    let cfg = &snapshot.config;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = Model::new(cfg.model(), cfg.task_spec(), snapshot.input, &mut rng)
        .map_err(|e| spikefuse::Error::Integrity(format!("checkpoint config: {e}")))?;
    model.load_params(&ckpt.tensors)?;
    Ok(Restored {
        model,
        snapshot,
        normalizer,
        path,
    })
}

fn output_dir(common: &Common, restored: &Restored) -> PathBuf {
    common.out.clone().unwrap_or_else(|| {
        restored
            .path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    })
}

fn with_data_override(cfg: &RunConfig, data: Option<&str>, seed: Option<u64>) -> RunConfig {
    let mut cfg = cfg.clone();
    if let Some(d) = data {
        cfg.data = d.to_string();
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg
}

fn check_shapes(model: &Model, samples: &[Sample]) -> Result<()> {
    if let Some(s) = samples.first() {
        let got = InputShape::of(s)?;
        if got != model.input_shape() {
            return Err(spikefuse::Error::Data(format!(
                "data shape {got:?} does not match the checkpoint input {:?}",
                model.input_shape()
            ))
            .into());
        }
    }
    Ok(())
}

pub fn cmd_eval(common: &Common, data: Option<&str>, which: SplitName) -> Result<Metrics> {
    let restored = restore(common)?;
    let cfg = with_data_override(&restored.snapshot.config, data, common.seed);
    let prepared = prepare(&cfg, Some(&restored.normalizer))?;
    let samples: Vec<Sample> = match which {
        SplitName::Train => prepared.split.train,
        SplitName::Val => prepared.split.val,
        SplitName::Test => prepared.split.test,
        SplitName::All => {
            let Split { train, val, test } = prepared.split;
            train.into_iter().chain(val).chain(test).collect()
        }
    };
    if samples.is_empty() {
        return Err(spikefuse::Error::Data(format!("the {which:?} split is empty")).into());
    }
    check_shapes(&restored.model, &samples)?;
    let evaluation = evaluate(&restored.model, &samples, cfg.batch_size, cfg.loss)?;
    let task = restored.model.task();
    let names = Metrics::names(task);
    let mut csv = names.join(",");
    csv.push('\n');
    csv.push_str(
        &evaluation
            .metrics
            .values()
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    csv.push('\n');
    let dir = output_dir(common, &restored);
    ensure_dir(&dir)?;
    write_atomic(&dir, METRICS_FILE, csv.as_bytes())?;
    println!("{which:?} ({} samples): {}", samples.len(), format_metrics(task, &evaluation.metrics));
    Ok(evaluation.metrics)
}

fn prediction_inputs(restored: &Restored, input: &Path) -> Result<Vec<Sample>> {
    let cfg = &restored.snapshot.config;
    let raw = match cfg.task {
        TaskKind::Classify => read_beat_rows(input, &cfg.label_column)?
            .into_iter()
            .enumerate()
            .map(|(i, (values, _))| {
                let l = values.len();
                Sample::from_window(Tensor::new(vec![1, l], values)?, 0, Target::Horizon(Vec::new()), i)
            })
            .collect::<spikefuse::Result<Vec<_>>>()?,
        TaskKind::Forecast => {
            let schema = CsvSchema {
                timestamp_column: cfg.timestamp_column.clone(),
                value_columns: restored.snapshot.channels.clone(),
                label_column: None,
                gap_policy: cfg.gap_policy,
            };
            let ds = load_csv(input, &schema)?;
            let target = target_index(&ds.channels, cfg, &input.to_string_lossy())?;
            window_inputs(&ds, cfg.lookback, cfg.stride, target)?
        }
    };
    let samples = normalize_all(&raw, &restored.normalizer)?;
    check_shapes(&restored.model, &samples)?;
    Ok(samples)
}

/// Writes one prediction row per input sample; returns the CSV text.
pub fn cmd_predict(common: &Common, input: &Path) -> Result<String> {
    let restored = restore(common)?;
    let samples = prediction_inputs(&restored, input)?;
    let cfg = &restored.snapshot.config;
    let outputs = predict_all(&restored.model, &samples, cfg.batch_size)?;
    let width = outputs.shape()[1];
    let mut csv = String::new();
    match restored.model.task() {
        Task::Classification { classes } => {
            csv.push_str("label");
            (0..classes).for_each(|c| write!(csv, ",p{c}").unwrap());
            csv.push('\n');
            let probs = softmax(&outputs, 1)?;
            for row in probs.data().chunks(width) {
                let label = spikefuse::train::argmax_rows(&Tensor::new(vec![1, width], row.to_vec())?)[0];
                write!(csv, "{label}").unwrap();
                row.iter().for_each(|p| write!(csv, ",{p}").unwrap());
                csv.push('\n');
            }
        }
        Task::Regression { horizon } => {
            csv.push_str(&(1..=horizon).map(|h| format!("h{h}")).collect::<Vec<_>>().join(","));
            csv.push('\n');
            for row in outputs.data().chunks(width) {
                let values = restored.normalizer.horizon(row, Direction::Invert)?;
                csv.push_str(&values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
                csv.push('\n');
            }
        }
    }
    let dir = output_dir(common, &restored);
    ensure_dir(&dir)?;
    write_atomic(&dir, PREDICTIONS_FILE, csv.as_bytes())?;
    println!("wrote {} predictions to {}", samples.len(), dir.join(PREDICTIONS_FILE).display());
    Ok(csv)
}

/// Per-neuron activity of each component.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub image_encoder: Vec<f64>,
    pub series_encoder: Vec<f64>,
    pub fused: Vec<f64>,
}

impl Heatmap {
    pub fn columns(&self) -> [(&'static str, &[f64]); 3] {
        [
            ("image_encoder", &self.image_encoder),
            ("series_encoder", &self.series_encoder),
            ("fused", &self.fused),
        ]
    }

    pub fn rows(&self) -> usize {
        self.columns().iter().map(|(_, c)| c.len()).max().unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("neuron,image_encoder,series_encoder,fused\n");
        for i in 0..self.rows() {
            write!(s, "{i}").unwrap();
            for (_, col) in self.columns() {
                match col.get(i) {
                    Some(v) => write!(s, ",{v}").unwrap(),
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }

    /// Plain PGM with one column per component, one row per neuron.
    pub fn to_pgm(&self) -> String {
        let rows = self.rows();
        let mut s = format!("P2\n3 {rows}\n255\n");
        for i in 0..rows {
            let line: Vec<String> = self
                .columns()
                .iter()
                .map(|(_, c)| ((c.get(i).copied().unwrap_or(0.0).clamp(0.0, 1.0) * 255.0).round() as u8).to_string())
                .collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }
}

/// Mean over the two leading axes of a tensor, per trailing element.
fn rate_per_neuron(t: &Tensor, positive_only: bool) -> Vec<f64> {
    let shape = t.shape();
    let outer = shape[0] * shape[1];
    let n = t.len() / outer.max(1);
    let mut acc = vec![0.0; n];
    for chunk in t.data().chunks(n) {
        for (a, &v) in acc.iter_mut().zip(chunk) {
            *a += if positive_only { f64::from(u8::from(v > 0.0)) } else { v };
        }
    }
    acc.iter_mut().for_each(|a| *a /= outer as f64);
    acc
}

pub fn heatmap(model: &Model, samples: &[Sample]) -> Result<Heatmap> {
    let refs: Vec<&Sample> = samples.iter().take(HEATMAP_SAMPLES).collect();
    let act = model.activations(&model.prepare(&refs)?)?;
    Ok(Heatmap {
        image_encoder: rate_per_neuron(act.image.values(), false),
        series_encoder: rate_per_neuron(act.series.values(), false),
        fused: rate_per_neuron(&act.fused, true),
    })
}

pub fn heatmap_file(wavelet: bool) -> &'static str {
    if wavelet {
        "heatmap_wavelet_on.csv"
    } else {
        "heatmap_wavelet_off.csv"
    }
}

/// Amplitude spectrum of every `(epoch, component)` trace in a traces CSV.
pub fn spectrum_csv(traces: &str) -> Result<String> {
    let mut series: Vec<((usize, String), Vec<f64>)> = Vec::new();
    for (n, line) in traces.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || spikefuse::Error::Data(format!("traces line {}: malformed {line:?}", n + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad().into());
        }
        let epoch: usize = f[0].parse().map_err(|_| bad())?;
        let value: f64 = f[3].parse().map_err(|_| bad())?;
        let key = (epoch, f[1].to_string());
        match series.last_mut() {
            Some((k, v)) if *k == key => v.push(value),
            _ => series.push((key, vec![value])),
        }
    }
    if series.is_empty() {
        return Err(spikefuse::Error::Data("traces file has no rows".into()).into());
    }
    let mut s = String::from("epoch,component,bin,amplitude\n");
    for ((epoch, component), values) in series {
        let n = values.len().next_power_of_two();
        let mut padded = values;
        padded.resize(n, 0.0);
        let amps = fft1d(&padded)?.amplitudes();
        for (bin, a) in amps.iter().take(n / 2 + 1).enumerate() {
            writeln!(s, "{epoch},{component},{bin},{a}").unwrap();
        }
    }
    Ok(s)
}

pub fn cmd_inspect(
    common: &Common,
    what: InspectWhat,
    data: Option<&str>,
    traces: Option<&Path>,
    render: bool,
) -> Result<PathBuf> {
    match what {
        InspectWhat::Heatmap => {
            let restored = restore(common)?;
            let cfg = with_data_override(&restored.snapshot.config, data, common.seed);
            let prepared = prepare(&cfg, Some(&restored.normalizer))?;
            let samples = if prepared.split.val.is_empty() {
                &prepared.split.train
            } else {
                &prepared.split.val
            };
            check_shapes(&restored.model, samples)?;
            let map = heatmap(&restored.model, samples)?;
            let dir = output_dir(common, &restored);
            let name = heatmap_file(restored.model.config().wavelet);
            let pgm = render.then(|| map.to_pgm());
            ensure_dir(&dir)?;
            let path = write_atomic(&dir, name, map.to_csv().as_bytes())?;
            if let Some(pgm) = pgm {
                write_atomic(&dir, &name.replace(".csv", ".pgm"), pgm.as_bytes())?;
            }
            println!("wrote {}", path.display());
            Ok(path)
        }
        InspectWhat::Spectrum => {
            let (traces_path, dir) = match traces {
                Some(t) => {
                    let dir = common
                        .out
                        .clone()
                        .or_else(|| t.parent().filter(|p| !p.as_os_str().is_empty()).map(Path::to_path_buf))
                        .unwrap_or_else(|| PathBuf::from("."));
                    (t.to_path_buf(), dir)
                }
                None => {
                    let ckpt = checkpoint_path(common)?;
                    let dir = ckpt
                        .parent()
                        .filter(|p| !p.as_os_str().is_empty())
                        .map(Path::to_path_buf)
                        .unwrap_or_else(|| PathBuf::from("."));
                    (dir.join(TRACES_FILE), common.out.clone().unwrap_or(dir))
                }
            };
            let text = std::fs::read_to_string(&traces_path)
                .map_err(CliError::io(format!("reading traces {}", traces_path.display())))?;
            let csv = spectrum_csv(&text)?;
            ensure_dir(&dir)?;
            let path = write_atomic(&dir, SPECTRUM_FILE, csv.as_bytes())?;
            println!("wrote {}", path.display());
            Ok(path)
        }
    }
}
