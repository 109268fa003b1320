//! Command-line front end. Each subcommand parses flags, loads inputs,
//! calls one library operation and writes its outputs plus a
//! `run_manifest` echoing every resolved option.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use blockprune_core::data::{
    generate_dataset, Dataset, DatasetMeta, GeneratorSpec, MolecularSample, Split,
};
use blockprune_core::model::{Checkpoint, LossWeights, ModelConfig};
use blockprune_core::relevance::block_relevance;
use blockprune_core::rng;
use blockprune_core::surgery::{ablate_block, reduce_blocks, Strategy};
use blockprune_core::training::{
    distill, evaluate, finetune, pretrain, Budget, EvalMetrics, FeatureMatch, KdConfig,
    TrainBudget, TrainOutcome,
};

use crate::efficiency::efficiency_table;
use crate::error::{Error, Result};
use crate::report::{
    manifest_path, manifest_text, metrics_csv, relevance_csv, table2_csv, train_log_csv, write_text,
};
use crate::sweep::{run_sweep, write_sweep, Arm, SweepConfig};
use crate::{checkpoint, xyz, WallClock};

#[derive(Parser, Debug)]
#[command(
    name = "blockprune",
    version,
    about = "Relevance-guided block pruning for message-passing interatomic potentials"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a Lennard-Jones labelled dataset
    Gen(GenArgs),
    /// Train a model from scratch on a dataset's train split
    Pretrain(PretrainArgs),
    /// Score every block's relevance
    Relevance(RelevanceArgs),
    /// Remove trailing interaction blocks
    Prune(PruneArgs),
    /// Remove a single interaction block
    Ablate(AblateArgs),
    /// Distill a reduced student from its teacher
    Distill(DistillArgs),
    /// Fine-tune a checkpoint and report test metrics
    Finetune(FinetuneArgs),
    /// From-scratch baseline at a given depth
    Scratch(PretrainArgs),
    /// Force and energy errors of a checkpoint
    Eval(EvalArgs),
    /// Inference throughput, FLOPs and parameters
    Bench(BenchArgs),
    /// Run every reduction arm and emit all tables
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Kind {
    Upstream,
    Downstream,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum StrategyArg {
    Sliced,
    Random,
}

impl StrategyArg {
    fn resolve(self, seed: u64) -> Strategy {
        match self {
            StrategyArg::Sliced => Strategy::Sliced,
            StrategyArg::Random => Strategy::Random { seed },
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FeatureMatchArg {
    Deepest,
    All,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub count: usize,
    /// `downstream` shifts the pair potential that `upstream` uses for the
    /// same seed
    #[arg(long, value_enum, default_value = "upstream")]
    pub kind: Kind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Dataset file
    #[arg(long)]
    pub data: PathBuf,
    /// Seed of the train/val/test assignment
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub steps: Option<usize>,
    /// Wall-clock training budget; replaces --steps
    #[arg(long, conflicts_with = "steps")]
    pub budget_seconds: Option<f64>,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub alpha_e: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha_f: f64,
    /// Steps between validation evaluations (0 disables)
    #[arg(long, default_value_t = 100)]
    pub eval_every: usize,
    /// Training log CSV (default: <out>.log.csv)
    #[arg(long)]
    pub log: Option<PathBuf>,
}

impl TrainArgs {
    fn budget(&self, default_steps: usize, default_lr: f64, seed: u64) -> TrainBudget {
        TrainBudget {
            budget: match self.budget_seconds {
                Some(s) => Budget::WallClock(s),
                None => Budget::Steps(self.steps.unwrap_or(default_steps)),
            },
            batch_size: self.batch,
            learning_rate: self.lr.unwrap_or(default_lr),
            seed,
        }
    }

    fn weights(&self) -> Result<LossWeights> {
        Ok(LossWeights::new(self.alpha_e, self.alpha_f)?)
    }
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Interaction blocks (the embedding block comes on top)
    #[arg(long, default_value_t = 6)]
    pub blocks: u32,
    #[arg(long, default_value_t = 5)]
    pub mlp_layers: u32,
    #[arg(long, default_value_t = 32)]
    pub node_dim: u32,
    #[arg(long, default_value_t = 16)]
    pub edge_dim: u32,
    #[arg(long, default_value_t = 8)]
    pub n_rbf: u32,
    #[arg(long, default_value_t = 1.6)]
    pub cutoff: f64,
    #[arg(long, default_value_t = 3)]
    pub species: u32,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RelevanceArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "val")]
    pub split: SplitArg,
    /// Use only the first N samples of the split
    #[arg(long)]
    pub max_samples: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PruneArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Retained interaction blocks
    #[arg(long)]
    pub blocks: usize,
    #[arg(long, value_enum, default_value = "sliced")]
    pub strategy: StrategyArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Block index as in the relevance report (1 = first interaction block)
    #[arg(long)]
    pub block: usize,
    #[arg(long, value_enum, default_value = "sliced")]
    pub strategy: StrategyArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DistillArgs {
    #[arg(long)]
    pub teacher: PathBuf,
    /// Reduced student checkpoint
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Comma list of out, energy, n2n, e2e, mlp:<n'>
    #[arg(long, default_value = "out,n2n,e2e,mlp:1")]
    pub kd_terms: String,
    #[arg(long, value_enum, default_value = "deepest")]
    pub feature_match: FeatureMatchArg,
    /// Add the supervised loss to the distillation objective
    #[arg(long)]
    pub with_labels: bool,
    #[arg(long, default_value_t = 0.015)]
    pub data_fraction: f64,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Re-initialize the energy and force heads first
    #[arg(long)]
    pub head_reset: bool,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Checkpoints; the first is the reference for deltas
    #[arg(long = "in", num_args = 1.., required = true)]
    pub input: Vec<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 64)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    #[arg(long, default_value_t = 5)]
    pub passes: usize,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub teacher: PathBuf,
    /// Directory holding upstream.xyzf and downstream.xyzf
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Retained interaction block counts to sweep
    #[arg(long, value_delimiter = ',', default_value = "5,4,3,2")]
    pub blocks: Vec<usize>,
    /// Comma list of br, random, kd
    #[arg(long, value_delimiter = ',', default_value = "br,random,kd")]
    pub arms: Vec<String>,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value = "out,n2n,e2e,mlp:1")]
    pub kd_terms: String,
    #[arg(long, default_value_t = 0.015)]
    pub data_fraction: f64,
    /// Distillation steps
    #[arg(long, default_value_t = 300)]
    pub kd_steps: usize,
    /// Downstream fine-tuning steps per arm
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    #[arg(long)]
    pub head_reset: bool,
    /// Wall-clock budget of each convergence curve
    #[arg(long, default_value_t = 10.0)]
    pub budget_seconds: f64,
    #[arg(long, value_delimiter = ',', default_value = "6,3")]
    pub curve_blocks: Vec<usize>,
    #[arg(long, default_value_t = 25)]
    pub curve_eval_every: usize,
    #[arg(long, default_value_t = 64)]
    pub bench_samples: usize,
    #[arg(long, default_value_t = 3)]
    pub bench_passes: usize,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `out,energy,n2n,e2e,mlp:<n'>` (or `none`) into the term switches
/// of a default [`KdConfig`].
pub fn parse_kd_terms(spec: &str) -> std::result::Result<KdConfig, String> {
    let mut kd = KdConfig {
        distill_output: false,
        distill_energy: false,
        distill_mlp_layers: 0,
        distill_n2n: false,
        distill_e2e: false,
        ..KdConfig::default()
    };
    for term in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match term {
            "none" => {}
            "out" => kd.distill_output = true,
            "energy" => kd.distill_energy = true,
            "n2n" => kd.distill_n2n = true,
            "e2e" => kd.distill_e2e = true,
            t => {
                let n = t
                    .strip_prefix("mlp:")
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| format!("unknown distillation term {t:?}"))?;
                kd.distill_mlp_layers = n;
            }
        }
    }
    Ok(kd)
}

fn usage(flag: &str, detail: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("--{flag}: {detail}"))
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<blockprune_core::Error> for Failure {
    fn from(e: blockprune_core::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn need_file(flag: &str, path: &Path) -> std::result::Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(flag, format!("cannot read {}", path.display())))
    }
}

fn load_ckpt(flag: &str, path: &Path) -> std::result::Result<Checkpoint, Failure> {
    need_file(flag, path)?;
    Ok(checkpoint::load(path)?)
}

fn load_data(args: &DataArgs) -> std::result::Result<Dataset, Failure> {
    need_file("data", &args.data)?;
    let samples = xyz::read_samples(&args.data)?;
    Ok(file_dataset(&args.data, samples, args.split_seed))
}

pub fn file_dataset(path: &Path, samples: Vec<MolecularSample>, split_seed: u64) -> Dataset {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(
        samples,
        DatasetMeta {
            name,
            seed: split_seed,
            potential: None,
        },
    )
}

fn select(dataset: &Dataset, split: SplitArg) -> Vec<MolecularSample> {
    match split {
        SplitArg::Train => dataset.split(Split::Train).samples,
        SplitArg::Val => dataset.split(Split::Val).samples,
        SplitArg::Test => dataset.split(Split::Test).samples,
        SplitArg::All => dataset.samples.clone(),
    }
}

fn split_name(split: SplitArg) -> &'static str {
    match split {
        SplitArg::Train => "train",
        SplitArg::Val => "val",
        SplitArg::Test => "test",
        SplitArg::All => "all",
    }
}

fn with_suffix(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn save_training(out: &Path, log: Option<&PathBuf>, result: &TrainOutcome) -> Outcome {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    checkpoint::save(out, &result.checkpoint)?;
    let log_path = log.cloned().unwrap_or_else(|| with_suffix(out, ".log.csv"));
    write_text(&log_path, &train_log_csv(&result.log)?)?;
    Ok(())
}

fn save_ckpt(out: &Path, ckpt: &Checkpoint) -> Outcome {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    checkpoint::save(out, ckpt)?;
    Ok(())
}

fn write_metrics(out: &Path, split: &str, m: EvalMetrics) -> Outcome {
    write_text(
        &with_suffix(out, ".metrics.csv"),
        &metrics_csv(&[(split, m)])?,
    )?;
    Ok(())
}

fn kd_config(
    terms: &str,
    lambda: f64,
    fraction: f64,
    feature_match: FeatureMatchArg,
    with_labels: bool,
) -> std::result::Result<KdConfig, Failure> {
    let mut kd = parse_kd_terms(terms).map_err(|e| usage("kd-terms", e))?;
    kd.lambda = lambda;
    kd.data_fraction = fraction;
    kd.include_ground_truth_loss = with_labels;
    kd.feature_match = match feature_match {
        FeatureMatchArg::Deepest => FeatureMatch::DeepestRetained,
        FeatureMatchArg::All => FeatureMatch::AllRetained,
    };
    Ok(kd)
}

fn model_config(a: &PretrainArgs) -> ModelConfig {
    ModelConfig {
        blocks: a.blocks + 1,
        mlp_layers: a.mlp_layers,
        node_dim: a.node_dim,
        edge_dim: a.edge_dim,
        n_rbf: a.n_rbf,
        cutoff: a.cutoff,
        species_count: a.species,
        seed: (a.seed & 0xffff_ffff) as u32,
    }
}

fn run_command(cmd: &Command) -> Outcome {
    match cmd {
        Command::Gen(a) => {
            let spec = match a.kind {
                Kind::Upstream => GeneratorSpec::upstream(a.count, a.seed),
                Kind::Downstream => GeneratorSpec::upstream(a.count, a.seed)
                    .downstream(a.count, rng::derive(a.seed, 1)),
            };
            let ds = generate_dataset(&spec)?;
            write_text(&a.out, &xyz::write_samples(&ds.samples))?;
        }
        Command::Pretrain(a) | Command::Scratch(a) => {
            let data = load_data(&a.data)?;
            let cfg = model_config(a);
            cfg.validate().map_err(|e| usage("blocks", e))?;
            let budget = a.train.budget(2000, 1e-3, a.seed);
            let clock = WallClock::start();
            let out = pretrain(
                &cfg,
                &data,
                &budget,
                a.train.weights()?,
                a.train.eval_every,
                Some(&clock),
            )?;
            save_training(&a.out, a.train.log.as_ref(), &out)?;
            if matches!(cmd, Command::Scratch(_)) {
                let m = evaluate(
                    &checkpoint::rounded(&out.checkpoint),
                    &data.split(Split::Test).samples,
                )?;
                write_metrics(&a.out, "test", m)?;
            }
        }
        Command::Relevance(a) => {
            let ckpt = load_ckpt("in", &a.input)?;
            let data = load_data(&a.data)?;
            let mut samples = select(&data, a.split);
            if let Some(n) = a.max_samples {
                samples.truncate(n);
            }
            let r = block_relevance(&ckpt, &samples, LossWeights::default())?;
            write_text(&a.out, &relevance_csv(&r)?)?;
        }
        Command::Prune(a) => {
            let ckpt = load_ckpt("in", &a.input)?;
            let reduced = reduce_blocks(&ckpt, a.blocks + 1, a.strategy.resolve(a.seed))
                .map_err(|e| usage("blocks", e))?;
            save_ckpt(&a.out, &reduced)?;
        }
        Command::Ablate(a) => {
            let ckpt = load_ckpt("in", &a.input)?;
            let reduced = ablate_block(&ckpt, a.block, a.strategy.resolve(a.seed))
                .map_err(|e| usage("block", e))?;
            save_ckpt(&a.out, &reduced)?;
        }
        Command::Distill(a) => {
            let teacher = load_ckpt("teacher", &a.teacher)?;
            let student = load_ckpt("in", &a.input)?;
            let data = load_data(&a.data)?;
            let kd = kd_config(
                &a.kd_terms,
                a.lambda,
                a.data_fraction,
                a.feature_match,
                a.with_labels,
            )?;
            kd.validate(student.config().mlp_layers as usize)
                .map_err(|e| usage("kd-terms", e))?;
            let budget = a.train.budget(300, 3e-4, a.seed);
            let out = distill(
                &teacher,
                student,
                &data,
                &kd,
                &budget,
                a.train.weights()?,
                a.train.eval_every,
            )?;
            save_training(&a.out, a.train.log.as_ref(), &out)?;
        }
        Command::Finetune(a) => {
            let ckpt = load_ckpt("in", &a.input)?;
            let data = load_data(&a.data)?;
            let budget = a.train.budget(300, 3e-4, a.seed);
            let clock = WallClock::start();
            let (out, _) = finetune(
                ckpt,
                &data,
                &budget,
                a.train.weights()?,
                a.head_reset,
                a.train.eval_every,
                Some(&clock),
            )?;
            save_training(&a.out, a.train.log.as_ref(), &out)?;
            // report the model as saved, after f32 rounding
            let m = evaluate(
                &checkpoint::rounded(&out.checkpoint),
                &data.split(Split::Test).samples,
            )?;
            write_metrics(&a.out, "test", m)?;
        }
        Command::Eval(a) => {
            let ckpt = load_ckpt("in", &a.input)?;
            let data = load_data(&a.data)?;
            let m = evaluate(&ckpt, &select(&data, a.split))?;
            write_text(&a.out, &metrics_csv(&[(split_name(a.split), m)])?)?;
        }
        Command::Bench(a) => {
            let ckpts = a
                .input
                .iter()
                .map(|p| load_ckpt("in", p))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let data = load_data(&a.data)?;
            let mut samples = data.split(Split::Val).samples;
            if samples.is_empty() {
                samples = data.samples.clone();
            }
            samples.truncate(a.samples.max(1));
            let refs: Vec<&Checkpoint> = ckpts.iter().collect();
            let rows = efficiency_table(&refs, &samples, a.warmup, a.passes, a.workers)?;
            write_text(&a.out, &table2_csv(&rows)?)?;
        }
        Command::Sweep(a) => {
            let teacher = load_ckpt("teacher", &a.teacher)?;
            let up_path = a.data_dir.join("upstream.xyzf");
            let down_path = a.data_dir.join("downstream.xyzf");
            need_file("data-dir", &up_path)?;
            need_file("data-dir", &down_path)?;
            let upstream = file_dataset(&up_path, xyz::read_samples(&up_path)?, a.split_seed);
            let downstream = file_dataset(&down_path, xyz::read_samples(&down_path)?, a.split_seed);
            let arms = a
                .arms
                .iter()
                .map(|s| Arm::parse(s).ok_or_else(|| usage("arms", format!("unknown arm {s:?}"))))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let mut cfg = SweepConfig::new(a.seed);
            cfg.blocks = a.blocks.clone();
            cfg.arms = arms;
            cfg.kd = kd_config(
                &a.kd_terms,
                a.lambda,
                a.data_fraction,
                FeatureMatchArg::Deepest,
                false,
            )?;
            cfg.kd_budget = TrainBudget::steps(a.kd_steps, a.batch, a.lr, a.seed);
            cfg.finetune_budget = TrainBudget::steps(a.steps, a.batch, a.lr, a.seed);
            cfg.head_reset = a.head_reset;
            cfg.curve_blocks = a.curve_blocks.clone();
            cfg.curve_seconds = a.budget_seconds;
            cfg.curve_eval_every = a.curve_eval_every;
            cfg.bench_samples = a.bench_samples;
            cfg.bench_passes = a.bench_passes;
            cfg.bench_workers = a.workers;
            let result = run_sweep(&teacher, &upstream, &downstream, &cfg)?;
            std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
            write_sweep(&a.out, &result)?;
        }
    }
    Ok(())
}

fn out_path(cmd: &Command) -> &Path {
    match cmd {
        Command::Gen(a) => &a.out,
        Command::Pretrain(a) | Command::Scratch(a) => &a.out,
        Command::Relevance(a) => &a.out,
        Command::Prune(a) => &a.out,
        Command::Ablate(a) => &a.out,
        Command::Distill(a) => &a.out,
        Command::Finetune(a) => &a.out,
        Command::Eval(a) => &a.out,
        Command::Bench(a) => &a.out,
        Command::Sweep(a) => &a.out,
    }
}

/// Every resolved option of the invoked subcommand, defaults included.
pub fn resolved_options(matches: &ArgMatches) -> Vec<(String, String)> {
    let Some((name, sub)) = matches.subcommand() else {
        return Vec::new();
    };
    let mut out = vec![("subcommand".to_string(), name.to_string())];
    for id in sub.ids() {
        if let Some(raw) = sub.get_raw(id.as_str()) {
            let vals: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
            out.push((id.as_str().replace('_', "-"), vals.join(",")));
        }
    }
    out
}

/// Runs the CLI and returns the process exit code: 0 on success, 1 for
/// usage errors, 2 for runtime errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 1;
        }
    };
    match run_command(&cli.command) {
        Ok(()) => {
            let out = out_path(&cli.command);
            let text = manifest_text(&resolved_options(&matches));
            if let Err(e) = write_text(&manifest_path(out), &text) {
                eprintln!("error: {e}");
                return 2;
            }
            0
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}
