//! The `rankfuse` command-line driver.
//!
//! Exit codes: 0 on success, 1 for usage errors (bad flags, bad config
//! file), 2 for runtime and data errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};

use rankfuse_core::cp::AlsConfig;
use rankfuse_core::neural::{
    evaluate_noisy, ModelDims, ModelParams, Optimizer, TrainConfig, Variant,
};
use rankfuse_core::noise::{NoiseKind, NoiseSpec};
use rankfuse_core::synth::{generate, MultimodalSequence, SynthSpec};

use crate::checkpoint;
use crate::config;
use crate::csv_out::{self, num};
use crate::error::RunError;
use crate::experiment::{
    levels_for, mean_over_seeds, metrics_rows, rank_curve_rows, rank_summary_rows,
    results_rows, run_rank_grid, run_train_grid, select_lambda, selection_rows, test_noise, Condition,
    RankGrid, RunStatus, RunVariant, TrainGrid,
};
use crate::mmseq;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Default λ grid for T2FN.
pub const DEFAULT_LAMBDAS: &str = "0.0001,0.001,0.01";

#[derive(Debug, Parser)]
#[command(
    name = "rankfuse",
    version,
    about = "Rank-regularized temporal tensor fusion: synthetic data, training, rank analysis, evaluation",
    args_override_self = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic multimodal dataset in MMSEQ format.
    Synth(SynthArgs),
    /// Train model variants over a noise × λ × seed grid.
    Train(TrainArgs),
    /// CP-rank analysis of fused tensors under imperfection.
    Rank(RankArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// key=value file supplying defaults for any long flag; explicit flags win.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct SynthArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Output MMSEQ file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    n_train: usize,
    #[arg(long, default_value_t = 50)]
    n_valid: usize,
    #[arg(long, default_value_t = 100)]
    n_test: usize,
    /// Sequence length T.
    #[arg(long, default_value_t = 20)]
    steps: usize,
    /// Feature dims D_l,D_v,D_a.
    #[arg(long, value_delimiter = ',', default_value = "8,8,8")]
    dims: Vec<usize>,
    /// Latent rank k (must not exceed any feature dim).
    #[arg(long, default_value_t = 3)]
    latent_rank: usize,
    #[arg(long, default_value_t = 0.5)]
    label_margin: f64,
    #[arg(long, default_value_t = 0.01)]
    obs_noise: f64,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// MMSEQ dataset.
    #[arg(long)]
    data: PathBuf,
    /// Directory receiving metrics.csv, results.csv, selection.csv and checkpoints/.
    #[arg(long)]
    out_dir: PathBuf,
    /// Variants: t2fn, t2fn-noreg, tfn, ef-lstm, lf-lstm.
    #[arg(long, value_delimiter = ',', default_value = "t2fn,t2fn-noreg,tfn,ef-lstm,lf-lstm")]
    variants: Vec<RunVariant>,
    /// Noise kinds: clean, random_drop, structured_drop.
    #[arg(long, value_delimiter = ',', default_value = "clean,random_drop,structured_drop")]
    noise_kinds: Vec<NoiseKind>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
    noise_levels: Vec<f64>,
    /// λ grid for t2fn (other variants always use λ = 0).
    #[arg(long, value_delimiter = ',', default_value = DEFAULT_LAMBDAS)]
    lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// adam or sgd.
    #[arg(long, default_value = "adam")]
    optimizer: String,
    /// Global gradient-norm clip; 0 disables clipping.
    #[arg(long, default_value_t = 5.0)]
    grad_clip: f64,
    /// Hidden sizes d_l,d_v,d_a (early fusion uses the first).
    #[arg(long, value_delimiter = ',', default_value = "8,8,8")]
    hidden: Vec<usize>,
    /// Multiplier on the encoder weight range at initialization.
    #[arg(long, default_value_t = 1.0)]
    init_gain: f64,
    /// Skip writing one checkpoint per grid cell.
    #[arg(long)]
    no_checkpoints: bool,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct RankArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    data: PathBuf,
    /// Directory receiving rank_curves.csv, rank_mean.csv and rank_summary.csv.
    #[arg(long)]
    out_dir: PathBuf,
    /// Checkpoint whose encoders produce the fused tensors.
    #[arg(long, required_unless_present = "random_encoder", conflicts_with = "random_encoder")]
    checkpoint: Option<PathBuf>,
    /// Use freshly initialized encoders instead of a checkpoint.
    #[arg(long)]
    random_encoder: bool,
    /// Seed of the random encoder.
    #[arg(long, default_value_t = 0)]
    encoder_seed: u64,
    /// Hidden sizes of the random encoder.
    #[arg(long, value_delimiter = ',', default_value = "8,8,8")]
    hidden: Vec<usize>,
    /// Weight-range multiplier of the random encoder.
    #[arg(long, default_value_t = 1.0)]
    init_gain: f64,
    /// Split analysed: train, valid or test.
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, value_delimiter = ',', default_value = "clean,random_drop,structured_drop")]
    noise_kinds: Vec<NoiseKind>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
    noise_levels: Vec<f64>,
    /// Also analyse i.i.d. Gaussian features of the same shape (kind `iid_gaussian`).
    #[arg(long)]
    iid_reference: bool,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// CP ranks tried; defaults to 1..T.
    #[arg(long, value_delimiter = ',')]
    ranks: Option<Vec<usize>>,
    /// Surrogate-rank threshold on the relative reconstruction error.
    #[arg(long, default_value_t = 0.05)]
    threshold: f64,
    /// Sequences sampled from the split per seed.
    #[arg(long, default_value_t = 4)]
    n_sequences: usize,
    #[arg(long, default_value_t = 200)]
    als_max_iters: usize,
    #[arg(long, default_value_t = 1e-7)]
    als_tol: f64,
    #[arg(long, default_value_t = 3)]
    als_restarts: usize,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value = "clean")]
    noise_kind: NoiseKind,
    #[arg(long, default_value_t = 0.0)]
    noise_level: f64,
    /// Seed of the evaluation noise; matches the training seed of a grid cell.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional CSV file receiving one result row.
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run(args: Vec<OsString>) -> i32 {
    let args = match apply_config(args) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

enum Failure {
    Usage(String),
    Runtime(RunError),
}

impl<E: Into<RunError>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Expands `--config FILE` into flags inserted right after the subcommand
/// name, ahead of the explicit flags, so explicit flags override the file.
fn apply_config(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut config_path: Option<PathBuf> = None;
    for (i, a) in args.iter().enumerate() {
        let Some(s) = a.to_str() else { continue };
        if s == "--config" {
            if let Some(v) = args.get(i + 1) {
                config_path = Some(PathBuf::from(v));
            }
        } else if let Some(v) = s.strip_prefix("--config=") {
            config_path = Some(PathBuf::from(v));
        }
    }
    let Some(path) = config_path else {
        return Ok(args);
    };
    let Some(sub_name) = args.get(1).and_then(|a| a.to_str()) else {
        return Ok(args);
    };
    let root = Cli::command();
    let Some(sub) = root.find_subcommand(sub_name) else {
        return Ok(args);
    };
    let entries = config::read(&path).map_err(|e| e.to_string())?;

    let mut injected: Vec<OsString> = Vec::new();
    for e in entries {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(e.key.as_str()) && e.key != "config")
            .ok_or_else(|| {
                format!(
                    "{}: line {}: unknown key `{}` for `{sub_name}`",
                    path.display(),
                    e.line,
                    e.key
                )
            })?;
        if arg.get_action().takes_values() {
            injected.push(format!("--{}", e.key).into());
            injected.push(e.value.into());
        } else {
            match e.value.as_str() {
                "true" => injected.push(format!("--{}", e.key).into()),
                "false" => {}
                other => {
                    return Err(format!(
                        "{}: line {}: `{}` expects true or false, found `{other}`",
                        path.display(),
                        e.line,
                        e.key
                    ))
                }
            }
        }
    }
    let mut out = Vec::with_capacity(args.len() + injected.len());
    out.extend(args[..2].iter().cloned());
    out.extend(injected);
    out.extend(args[2..].iter().cloned());
    Ok(out)
}

fn three(v: &[usize], what: &str) -> Result<[usize; 3], Failure> {
    <[usize; 3]>::try_from(v).map_err(|_| usage(format!("--{what} needs exactly three comma-separated values")))
}

fn cmd_synth(a: SynthArgs) -> Result<(), Failure> {
    let spec = SynthSpec {
        n_train: a.n_train,
        n_valid: a.n_valid,
        n_test: a.n_test,
        steps: a.steps,
        dims: three(&a.dims, "dims")?,
        latent_rank: a.latent_rank,
        label_margin: a.label_margin,
        obs_noise: a.obs_noise,
        seed: a.seed,
    };
    if let Err(e) = spec.validate() {
        return Err(usage(e.to_string()));
    }
    let split = generate(&spec)?;
    mmseq::write_dataset(&a.out, &split)?;
    println!(
        "wrote {} sequences ({} train, {} valid, {} test) to {}",
        split.len(),
        split.train.len(),
        split.valid.len(),
        split.test.len(),
        a.out.display()
    );
    Ok(())
}

fn parse_optimizer(s: &str) -> Result<Optimizer, Failure> {
    match s {
        "adam" => Ok(Optimizer::default()),
        "sgd" => Ok(Optimizer::Sgd),
        other => Err(usage(format!("unknown optimizer `{other}` (expected adam or sgd)"))),
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::Runtime(crate::error::IoError::io(dir, e).into()))
}

/// File name of the checkpoint written for one grid cell.
pub fn checkpoint_name(variant: RunVariant, kind: NoiseKind, p: f64, lambda: f64, seed: u64) -> String {
    format!("{variant}_{}_p{}_l{}_s{seed}.ckpt", kind.name(), num(p), num(lambda))
}

fn cmd_train(a: TrainArgs) -> Result<(), Failure> {
    let grid = TrainGrid {
        variants: a.variants,
        kinds: a.noise_kinds,
        levels: a.noise_levels,
        lambdas: a.lambdas,
        seeds: a.seeds,
        hidden: three(&a.hidden, "hidden")?,
        init_gain: a.init_gain,
        train: TrainConfig {
            reg_weight: 0.0,
            learning_rate: a.lr,
            epochs: a.epochs,
            batch_size: a.batch_size,
            seed: 0,
            optimizer: parse_optimizer(&a.optimizer)?,
            grad_clip: (a.grad_clip > 0.0).then_some(a.grad_clip),
        },
    };
    if let Err(e) = grid.validate() {
        return Err(usage(e.to_string()));
    }
    let data = mmseq::read_dataset(&a.data)?;
    let results = run_train_grid(&data, &grid)?;

    create_dir(&a.out_dir)?;
    if !a.no_checkpoints {
        let dir = a.out_dir.join("checkpoints");
        create_dir(&dir)?;
        for r in &results {
            if let Some(p) = &r.params {
                let j = r.job;
                checkpoint::save(&dir.join(checkpoint_name(j.variant, j.kind, j.p, j.lambda, j.seed)), p)?;
            }
        }
    }
    csv_out::write(&a.out_dir.join("metrics.csv"), csv_out::METRICS_HEADER, &metrics_rows(&results))?;
    csv_out::write(&a.out_dir.join("results.csv"), csv_out::RESULTS_HEADER, &results_rows(&results))?;
    let selected = select_lambda(&results);
    csv_out::write(&a.out_dir.join("selection.csv"), csv_out::SELECTION_HEADER, &selection_rows(&selected))?;

    let diverged = results.iter().filter(|r| r.status != RunStatus::Ok).count();
    for r in &results {
        if let RunStatus::Diverged(msg) = &r.status {
            eprintln!(
                "warning: {} {} p={} lambda={} seed={} diverged: {msg}",
                r.job.variant,
                r.job.kind,
                num(r.job.p),
                num(r.job.lambda),
                r.job.seed
            );
        }
    }
    println!(
        "trained {} runs ({diverged} diverged); results in {}",
        results.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn check_split(name: &str) -> Result<(), Failure> {
    match name {
        "train" | "valid" | "test" => Ok(()),
        other => Err(usage(format!("unknown split `{other}` (expected train, valid or test)"))),
    }
}

fn pick_split<'a>(data: &'a rankfuse_core::synth::DatasetSplit, name: &str) -> Result<&'a [MultimodalSequence], Failure> {
    match name {
        "train" => Ok(&data.train),
        "valid" => Ok(&data.valid),
        "test" => Ok(&data.test),
        other => Err(usage(format!("unknown split `{other}` (expected train, valid or test)"))),
    }
}

fn cmd_rank(a: RankArgs) -> Result<(), Failure> {
    check_split(&a.split)?;
    let mut conditions: Vec<Condition> = Vec::new();
    for &kind in &a.noise_kinds {
        for p in levels_for(kind, &a.noise_levels) {
            conditions.push(Condition::Noise(kind, p));
        }
    }
    if a.iid_reference {
        conditions.push(Condition::IidGaussian);
    }
    let hidden = three(&a.hidden, "hidden")?;
    let checkpoint = a.checkpoint.as_deref().map(checkpoint::load).transpose()?;
    let data = mmseq::read_dataset(&a.data)?;
    let sequences = pick_split(&data, &a.split)?;
    let encoder = match checkpoint {
        Some(p) => p,
        None => {
            let dims = ModelDims::new(data.dims(), hidden)?;
            ModelParams::init_with_gain(Variant::T2fn, dims, a.encoder_seed, a.init_gain)
        }
    };
    let steps = sequences.first().map_or(1, MultimodalSequence::steps);
    let grid = RankGrid {
        conditions,
        seeds: a.seeds,
        ranks: a.ranks.unwrap_or_else(|| (1..=steps).collect()),
        threshold: a.threshold,
        n_sequences: a.n_sequences,
        als: AlsConfig {
            max_iters: a.als_max_iters,
            tol: a.als_tol,
            seed: 0,
            restarts: a.als_restarts,
        },
    };
    if let Err(e) = grid.validate() {
        return Err(usage(e.to_string()));
    }
    let rows = run_rank_grid(&encoder, sequences, &grid)?;

    create_dir(&a.out_dir)?;
    csv_out::write(&a.out_dir.join("rank_curves.csv"), csv_out::RANK_CURVES_HEADER, &rank_curve_rows(&rows))?;
    csv_out::write(&a.out_dir.join("rank_summary.csv"), csv_out::RANK_SUMMARY_HEADER, &rank_summary_rows(&rows))?;
    let mut mean_rows = Vec::new();
    let mut conds = grid.conditions.clone();
    conds.sort_by(|x, y| x.kind_name().cmp(y.kind_name()).then(x.p().total_cmp(&y.p())));
    for c in conds {
        if let Some((curve, surrogate)) = mean_over_seeds(&rows, c) {
            for (r, e) in curve {
                mean_rows.push(vec![c.kind_name().to_string(), num(c.p()), r.to_string(), num(e)]);
            }
            println!("{} p={} mean_surrogate_rank={surrogate:.3}", c.kind_name(), num(c.p()));
        }
    }
    csv_out::write(&a.out_dir.join("rank_mean.csv"), &["kind", "p", "r", "epsilon"], &mean_rows)?;
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), Failure> {
    if !(0.0..=1.0).contains(&a.noise_level) {
        return Err(usage(format!("--noise-level {} outside [0, 1]", a.noise_level)));
    }
    check_split(&a.split)?;
    let params = checkpoint::load(&a.checkpoint)?;
    let data = mmseq::read_dataset(&a.data)?;
    let sequences = pick_split(&data, &a.split)?;
    let noise: NoiseSpec = test_noise(a.noise_kind, a.noise_level, a.seed);
    let accuracy = evaluate_noisy(&params, sequences, &noise)?;
    println!("accuracy={accuracy:.4}");
    if let Some(path) = &a.csv {
        let row = vec![
            a.checkpoint.display().to_string().replace(',', "_"),
            a.split.clone(),
            a.noise_kind.name().to_string(),
            num(a.noise_level),
            a.seed.to_string(),
            format!("{accuracy:.4}"),
        ];
        csv_out::write(path, csv_out::EVAL_HEADER, &[row])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(args: &[&str]) -> Vec<OsString> {
        args.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_entries_precede_explicit_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        std::fs::write(&path, "seeds=1,2\nno-checkpoints=true\n").unwrap();
        let p = path.to_str().unwrap();
        let out = apply_config(os(&["rankfuse", "train", "--seeds", "3", "--config", p])).unwrap();
        assert_eq!(
            out,
            os(&["rankfuse", "train", "--seeds", "1,2", "--no-checkpoints", "--seeds", "3", "--config", p])
        );
        // `iid-reference` belongs to `rank`, not `train`.
        std::fs::write(&path, "iid-reference=true\n").unwrap();
        let err = apply_config(os(&["rankfuse", "train", "--config", p])).unwrap_err();
        assert!(err.contains("line 1") && err.contains("iid-reference"), "{err}");
    }

    #[test]
    fn checkpoint_names() {
        let name = checkpoint_name(RunVariant::T2fnNoReg, NoiseKind::StructuredDrop, 0.5, 0.0, 2);
        assert_eq!(name, "t2fn-noreg_structured_drop_p0.5_l0_s2.ckpt");
    }
}
