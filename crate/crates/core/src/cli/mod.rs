//! Command-line front end: `shard`, `train`, `eval`, `bench` and `tune`.

mod config;
mod model_file;

pub use self::config::{parse_pairs, parse_search_space, DataSpec, RunConfig, DEFAULT_CHUNK_ROWS};
pub use self::model_file::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    apply_standardizer, fit_standardizer, load_csv, split_train_holdout, synth_rings, synth_uniform, write_shards,
    DataMatrix, DataSource, ShardSet, SplitSpec, StandardizerParams,
};
use crate::error::{Result, SomError};
use crate::metrics::{
    extrapolate_baseline, quantization_error_source, scaling_efficiency, time_run, BenchRecord, QeReport,
};
use crate::parallel::{train_parallel, ParallelOptions};
use crate::sampling::{SamplingBudget, SamplingConfig, SamplingMode, Sampler};
use crate::topology::{RefreshPolicy, TopologyKind};
use crate::trainer::{train_with, RunLog, SomConfig, SomModel, TrainOptions};
use crate::tune::{
    best_per_seed, distill_defaults, pareto_front, run_study, stability_score, SearchSpace, StudySettings,
};

/// An error tagged with the pipeline stage that produced it.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: SomError,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage {}: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

type CliResult<T> = std::result::Result<T, StageError>;

#[derive(Debug, Parser)]
#[command(name = "topsom", version, about = "Self-organizing maps with lattice and graph topologies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Standardize, split and write the training rows as binary shards.
    Shard(ShardArgs),
    /// Train a map and write the model, log and QE report.
    Train(TrainArgs),
    /// Quantization error of a saved model on one data partition.
    Eval(EvalArgs),
    /// Time training on synthetic workloads along one axis.
    Bench(BenchArgs),
    /// Random-search tuning with Pareto front, distilled defaults and stability.
    Tune(TuneArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct Overrides {
    /// Run config file (key = value, or JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads G.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub topology: Option<TopologyKind>,
    #[arg(long)]
    pub sampling: Option<SamplingMode>,
    /// Fixed per-iteration sample count m0.
    #[arg(long, conflicts_with = "rho")]
    pub budget: Option<usize>,
    /// Proportional sampling rate.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Abort the run after this many seconds.
    #[arg(long = "timeout-s")]
    pub timeout_s: Option<f64>,
}

impl Overrides {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load_unchecked(path).stage("config")?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            c.som.seed = seed;
        }
        if let Some(g) = self.workers {
            c.workers = g;
        }
        if let Some(t) = self.topology {
            c.som.topology = t;
        }
        if let Some(m) = self.sampling {
            c.sampling.mode = m;
        }
        if let Some(m0) = self.budget {
            c.sampling.budget = SamplingBudget::Fixed { m0 };
        }
        if let Some(rho) = self.rho {
            c.sampling.budget = SamplingBudget::Proportional { rho };
        }
        if let Some(out) = &self.out {
            c.out_dir = Some(out.clone());
        }
        if let Some(t) = self.timeout_s {
            c.timeout_s = Some(t);
        }
        c.validate().stage("config")?;
        c.check_paths().stage("dataset")?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct ShardArgs {
    #[command(flatten)]
    pub run: Overrides,
    #[arg(long, default_value_t = 4)]
    pub shards: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Partition {
    Train,
    Holdout,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Evaluate on a partition of this run config's dataset.
    #[arg(long, conflicts_with = "csv")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "train")]
    pub partition: Partition,
    /// Evaluate on the rows of a CSV file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, requires = "csv")]
    pub header: bool,
    /// Standardizer JSON written by `train`, applied to `--csv` rows.
    #[arg(long, requires = "csv")]
    pub standardizer: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchAxis {
    Samples,
    Dims,
    Grid,
}

impl BenchAxis {
    fn as_str(self) -> &'static str {
        match self {
            BenchAxis::Samples => "samples",
            BenchAxis::Dims => "dims",
            BenchAxis::Grid => "grid",
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub axis: BenchAxis,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub workers: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "hex")]
    pub topology: Vec<TopologyKind>,
    #[arg(long, default_value = "full")]
    pub sampling: SamplingMode,
    #[arg(long, conflicts_with = "rho")]
    pub budget: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long = "timeout-s", default_value_t = 300.0)]
    pub timeout_s: f64,
    #[arg(long = "base-samples", default_value_t = 10_000)]
    pub base_samples: usize,
    #[arg(long = "base-dims", default_value_t = 16)]
    pub base_dims: usize,
    #[arg(long = "base-grid", default_value_t = 16)]
    pub base_grid: usize,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the records to this JSON-lines file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub run: Overrides,
    /// Search space file; defaults cover every tunable parameter.
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Shard(a) => cmd_shard(&a),
        Command::Train(a) => cmd_train(&a.run).map(|_| ()),
        Command::Eval(a) => cmd_eval(&a).map(|_| ()),
        Command::Bench(a) => cmd_bench(&a).map(|_| ()),
        Command::Tune(a) => cmd_tune(&a),
    }
}

/// Training rows plus, when available, the holdout partition.
pub struct PreparedData {
    pub train: TrainRows,
    pub holdout: Option<DataMatrix>,
    pub standardizer: Option<StandardizerParams>,
}

pub enum TrainRows {
    Memory(DataMatrix),
    Shards(ShardSet),
}

impl TrainRows {
    pub fn source(&self) -> DataSource<'_> {
        match self {
            TrainRows::Memory(m) => DataSource::Memory(m),
            TrainRows::Shards(s) => DataSource::Shards(s),
        }
    }
}

fn load_raw(spec: &DataSpec) -> Result<DataMatrix> {
    match spec {
        DataSpec::Csv { path, header } => load_csv(path, *header),
        DataSpec::SynthRings { rows, noise, seed } => synth_rings(*rows, *noise, *seed),
        DataSpec::SynthUniform { rows, cols, seed } => synth_uniform(*rows, *cols, *seed),
        DataSpec::Shards { dir, chunk_rows } => ShardSet::open(dir, *chunk_rows)?.load_all(),
    }
}

/// Ingest, standardize over all rows, then split. Shard directories are used as
/// prepared: their rows are the training set and an optional `holdout`
/// subdirectory is the holdout set.
pub fn prepare_data(run: &RunConfig) -> Result<PreparedData> {
    if let DataSpec::Shards { dir, chunk_rows } = &run.data {
        let train = ShardSet::open(dir, *chunk_rows)?;
        let holdout_dir = dir.join("holdout");
        let holdout = if holdout_dir.is_dir() {
            Some(ShardSet::open(&holdout_dir, *chunk_rows)?.load_all()?)
        } else {
            None
        };
        return Ok(PreparedData {
            train: TrainRows::Shards(train),
            holdout,
            standardizer: None,
        });
    }
    let raw = load_raw(&run.data)?;
    let (data, standardizer) = if run.standardize {
        let params = fit_standardizer(&raw)?;
        (apply_standardizer(&raw, &params)?, Some(params))
    } else {
        (raw, None)
    };
    let (train, holdout) = split_train_holdout(
        &data,
        &SplitSpec {
            train_fraction: run.train_fraction,
            seed: run.split_seed,
        },
    )?;
    Ok(PreparedData {
        train: TrainRows::Memory(train),
        holdout: Some(holdout),
        standardizer,
    })
}

fn out_dir(run: &RunConfig) -> Result<PathBuf> {
    let dir = run
        .out_dir
        .clone()
        .ok_or_else(|| SomError::Config("an output directory is required (--out)".into()))?;
    fs::create_dir_all(&dir).map_err(|e| SomError::io(&dir, e))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| SomError::Config(e.to_string()))?;
    text.push('\n');
    crate::io_util::write_atomic(path, text.as_bytes())
}

fn write_json_lines<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r).map_err(|e| SomError::Config(e.to_string()))?);
        text.push('\n');
    }
    crate::io_util::write_atomic(path, text.as_bytes())
}

pub fn cmd_shard(args: &ShardArgs) -> CliResult<()> {
    let run = args.run.resolve()?;
    if matches!(run.data, DataSpec::Shards { .. }) {
        return Err(SomError::Config("shard needs a csv or synthetic source".into())).stage("config");
    }
    let dir = out_dir(&run).stage("output")?;
    let prepared = prepare_data(&run).stage("dataset")?;
    let TrainRows::Memory(train) = &prepared.train else {
        unreachable!("non-shard sources load into memory")
    };
    write_shards(train, &dir, args.shards, DEFAULT_CHUNK_ROWS).stage("shard")?;
    if let Some(h) = &prepared.holdout {
        write_shards(h, dir.join("holdout"), 1, DEFAULT_CHUNK_ROWS).stage("shard")?;
    }
    if let Some(p) = &prepared.standardizer {
        write_json(&dir.join("standardizer.json"), p).stage("output")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub qe_train: f64,
    pub qe_holdout: Option<f64>,
    pub qe_balanced: Option<f64>,
    pub n_train: usize,
    pub n_holdout: usize,
    pub nodes: usize,
    pub dim: usize,
    pub topology: String,
    pub workers: usize,
    pub reduce_count: usize,
    pub refresh_count: usize,
    pub barrier_wait_s: f64,
    pub runtime_s: f64,
}

/// Trains per `run` (in `G` worker threads when `workers > 1`).
pub fn train_run(run: &RunConfig, data: DataSource<'_>, log_qe: bool) -> Result<(SomModel, RunLog)> {
    let mut sampler = Sampler::new(run.sampling.clone(), data.n_rows(), run.som.seed)?;
    let options = TrainOptions {
        log_qe,
        use_influence_cache: true,
        deadline: run.timeout_s.map(|s| Instant::now() + Duration::from_secs_f64(s)),
    };
    if run.workers > 1 {
        let par = ParallelOptions {
            barrier_timeout: Duration::from_secs_f64(run.barrier_timeout_s),
            ..ParallelOptions::new(run.workers)
        };
        train_parallel(&run.som, data, &mut sampler, &par, &options)
    } else {
        train_with(&run.som, data, &mut sampler, &options)
    }
}

pub fn cmd_train(overrides: &Overrides) -> CliResult<TrainReport> {
    let run = overrides.resolve()?;
    let dir = out_dir(&run).stage("output")?;
    let prepared = prepare_data(&run).stage("dataset")?;
    let data = prepared.train.source();

    let start = Instant::now();
    let (model, log) = train_run(&run, data, true).stage("train")?;
    let runtime_s = start.elapsed().as_secs_f64();

    let qe_train = quantization_error_source(&model.weights, model.dim, data).stage("evaluate")?;
    let qe_holdout = prepared
        .holdout
        .as_ref()
        .map(|h| quantization_error_source(&model.weights, model.dim, DataSource::Memory(h)))
        .transpose()
        .stage("evaluate")?;
    let report = TrainReport {
        qe_train,
        qe_holdout,
        qe_balanced: qe_holdout.map(|h| QeReport::new(qe_train, h).qe_balanced),
        n_train: data.n_rows(),
        n_holdout: prepared.holdout.as_ref().map_or(0, |h| h.n_rows()),
        nodes: model.n_nodes(),
        dim: model.dim,
        topology: model.kind().as_str().into(),
        workers: run.workers,
        reduce_count: log.reduce_count,
        refresh_count: log.refresh_count,
        barrier_wait_s: log.barrier_wait_s,
        runtime_s,
    };

    save_model(&model, dir.join("model.fsom")).stage("output")?;
    write_json_lines(&dir.join("log.jsonl"), &log.records).stage("output")?;
    write_json(&dir.join("report.json"), &report).stage("output")?;
    if let Some(p) = &prepared.standardizer {
        write_json(&dir.join("standardizer.json"), p).stage("output")?;
    }
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub qe: f64,
    pub n_samples: usize,
    pub dim: usize,
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<EvalReport> {
    let model = load_model(&args.model).stage("model")?;
    let data: DataMatrix = match (&args.config, &args.csv) {
        (Some(cfg), None) => {
            let run = RunConfig::load(cfg).stage("config")?;
            let prepared = prepare_data(&run).stage("dataset")?;
            match args.partition {
                Partition::Train => match prepared.train {
                    TrainRows::Memory(m) => m,
                    TrainRows::Shards(s) => s.load_all().stage("dataset")?,
                },
                Partition::Holdout => prepared
                    .holdout
                    .ok_or_else(|| SomError::Empty("dataset has no holdout partition".into()))
                    .stage("dataset")?,
            }
        }
        (None, Some(csv)) => {
            let raw = load_csv(csv, args.header).stage("dataset")?;
            match &args.standardizer {
                Some(path) => {
                    let text = fs::read_to_string(path).map_err(|e| SomError::io(path, e)).stage("dataset")?;
                    let params: StandardizerParams = serde_json::from_str(&text)
                        .map_err(|e| SomError::Config(format!("standardizer: {e}")))
                        .stage("dataset")?;
                    apply_standardizer(&raw, &params).stage("dataset")?
                }
                None => raw,
            }
        }
        _ => {
            return Err(SomError::Config("eval needs exactly one of --config or --csv".into())).stage("config");
        }
    };
    let qe = quantization_error_source(&model.weights, model.dim, DataSource::Memory(&data)).stage("evaluate")?;
    let report = EvalReport {
        qe,
        n_samples: data.n_rows(),
        dim: data.n_cols(),
    };
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(report)
}

pub fn cmd_bench(args: &BenchArgs) -> CliResult<Vec<BenchRecord>> {
    let bad = |msg: &str| Err(SomError::Config(msg.into())).stage("config");
    if args.values.is_empty() || args.workers.is_empty() || args.topology.is_empty() {
        return bad("bench needs values, workers and topologies");
    }
    if args.workers.contains(&0) || args.values.contains(&0) {
        return bad("bench values and worker counts must be positive");
    }
    let sampling = SamplingConfig {
        mode: args.sampling,
        budget: match (args.budget, args.rho) {
            (Some(m0), _) => SamplingBudget::Fixed { m0 },
            (None, Some(rho)) => SamplingBudget::Proportional { rho },
            (None, None) => SamplingBudget::Proportional { rho: 1.0 },
        },
        ..SamplingConfig::default()
    };
    let mut out = match &args.out {
        Some(path) => Some(BufWriter::new(
            File::create(path).map_err(|e| SomError::io(path, e)).stage("output")?,
        )),
        None => None,
    };

    let mut records = Vec::new();
    for &topology in &args.topology {
        // measured single-worker runtimes, (axis value, seconds)
        let mut baselines: Vec<(u64, f64)> = Vec::new();
        for &value in &args.values {
            let (n, d, side) = match args.axis {
                BenchAxis::Samples => (value as usize, args.base_dims, args.base_grid),
                BenchAxis::Dims => (args.base_samples, value as usize, args.base_grid),
                BenchAxis::Grid => (args.base_samples, args.base_dims, value as usize),
            };
            let data = synth_uniform(n, d, args.seed).stage("dataset")?;
            let som = SomConfig {
                width: side,
                height: side,
                topology,
                n_iters: args.iters,
                refresh: RefreshPolicy::for_iterations(args.iters),
                seed: args.seed,
                ..SomConfig::default()
            };
            for &g in &args.workers {
                let run = RunConfig {
                    som: som.clone(),
                    sampling: sampling.clone(),
                    workers: g,
                    timeout_s: Some(args.timeout_s),
                    ..RunConfig::default()
                };
                let timing = time_run(args.repeats, || train_run(&run, DataSource::Memory(&data), false).map(|_| ()));
                let mut rec = BenchRecord {
                    axis: args.axis.as_str().into(),
                    value,
                    workers: g,
                    topology: topology.as_str().into(),
                    sampling: args.sampling.as_str().into(),
                    nodes: side * side,
                    runtime_mean_s: None,
                    runtime_std_s: None,
                    efficiency_pct: None,
                    extrapolated: false,
                    timed_out: false,
                };
                match timing {
                    Ok(t) => {
                        rec.runtime_mean_s = Some(t.mean_s);
                        rec.runtime_std_s = Some(t.std_s);
                        if g == 1 {
                            baselines.push((value, t.mean_s));
                        }
                        let measured = baselines.iter().find(|(v, _)| *v == value).map(|b| b.1);
                        let t1 = match measured {
                            Some(t1) => Some(t1),
                            None => {
                                let last = baselines
                                    .iter()
                                    .filter(|(v, _)| *v < value)
                                    .max_by_key(|(v, _)| *v)
                                    .map(|&(v, t)| (v as f64, t));
                                let t1 = extrapolate_baseline(last, value as f64).ok();
                                rec.extrapolated = t1.is_some();
                                t1
                            }
                        };
                        rec.efficiency_pct = t1.and_then(|t1| scaling_efficiency(t1, t.mean_s, g).ok());
                    }
                    Err(SomError::Deadline { .. }) => rec.timed_out = true,
                    Err(e) => return Err(e).stage("bench"),
                }
                let line = serde_json::to_string(&rec).expect("record serializes");
                println!("{line}");
                if let Some(w) = out.as_mut() {
                    writeln!(w, "{line}").map_err(|e| SomError::io(args.out.clone().unwrap_or_default(), e)).stage("output")?;
                }
                records.push(rec);
            }
        }
    }
    if let Some(mut w) = out {
        w.flush().map_err(|e| SomError::io(args.out.clone().unwrap_or_default(), e)).stage("output")?;
    }
    Ok(records)
}

pub fn cmd_tune(args: &TuneArgs) -> CliResult<()> {
    let run = args.run.resolve()?;
    let dir = out_dir(&run).stage("output")?;
    let space = match &args.space {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| SomError::io(path, e)).stage("config")?;
            parse_search_space(&text, run.som.clone()).stage("config")?
        }
        None => SearchSpace {
            base: run.som.clone(),
            ..SearchSpace::default()
        },
    };
    let prepared = prepare_data(&run).stage("dataset")?;
    let train = match prepared.train {
        TrainRows::Memory(m) => m,
        TrainRows::Shards(s) => s.load_all().stage("dataset")?,
    };
    let holdout = prepared
        .holdout
        .ok_or_else(|| SomError::Empty("tuning needs a holdout partition".into()))
        .stage("dataset")?;

    let trials_path = dir.join("trials.jsonl");
    let mut trials_out = BufWriter::new(
        File::create(&trials_path).map_err(|e| SomError::io(&trials_path, e)).stage("output")?,
    );
    let settings = StudySettings {
        n_trials: args.trials,
        seeds: args.seeds.clone(),
        sampling: run.sampling.clone(),
        workers: run.workers,
    };
    let records = run_study(&space, &train, &holdout, &settings, |r| {
        let line = serde_json::to_string(r).map_err(|e| SomError::Config(e.to_string()))?;
        writeln!(trials_out, "{line}")
            .and_then(|_| trials_out.flush())
            .map_err(|e| SomError::io(&trials_path, e))
    })
    .stage("tune")?;
    drop(trials_out);

    write_json_lines(&dir.join("pareto.jsonl"), &pareto_front(&records)).stage("output")?;
    let best = best_per_seed(&records);
    write_json_lines(&dir.join("best_per_seed.jsonl"), &best).stage("output")?;
    let defaults = distill_defaults(&best, &space).stage("tune")?;
    let defaults_run = RunConfig {
        som: defaults,
        out_dir: None,
        ..run.clone()
    };
    crate::io_util::write_atomic(&dir.join("defaults.cfg"), defaults_run.to_config_text().as_bytes())
        .stage("output")?;
    let stability = stability_score(&best).stage("tune")?;
    write_json(&dir.join("stability.json"), &stability).stage("output")?;
    Ok(())
}
