//! The `edl` command line: generate data, train, evaluate, detect unknowns.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use edl_core::data::{
    generate_synthetic, known_examples, load_ciw_config, load_split, save_ciw_config, save_split,
    DatasetSplit, GenConfig,
};
use edl_core::eval::{
    evaluate_baseline, evaluate_msdc, evaluate_ood, predict_batch, write_score_csv,
    AggregationMode, BaselineMethod, MetricsReport, RunInfo, DEFAULT_THRESHOLD,
};
use edl_core::net::{train, train_two_phase, Checkpoint, EpochRecord, ModelShape, TrainConfig};
use edl_core::{CiwTable, Error, MultiLabel, Result};

/// File name of the CIW table written next to the generated dataset.
pub const CIW_FILE: &str = "ciw.tsv";

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "EDL_NUM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "edl", version, about = "Evidential multi-label defect classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic train/validation split and its CIW table.
    Generate(GenerateArgs),
    /// Train a model on the known classes of a split.
    Train(TrainArgs),
    /// Score multi-label classification on known validation samples.
    Eval(EvalArgs),
    /// Score unknown-class detection from the model's uncertainty.
    Ood(OodArgs),
}

/// Unset options fall back to the library defaults.
#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of classes seen in training.
    #[arg(long)]
    pub known: Option<usize>,
    /// Number of classes held out of training.
    #[arg(long)]
    pub unknown: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub train_size: Option<usize>,
    #[arg(long)]
    pub val_size: Option<usize>,
    /// Prototype norm, in units of the noise scale.
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub co_occurrence: Option<f64>,
    #[arg(long)]
    pub normal_fraction: Option<f64>,
    #[arg(long)]
    pub unknown_fraction: Option<f64>,
    #[arg(long)]
    pub unknown_distance: Option<f64>,
    #[arg(long)]
    pub unknown_overlap: Option<f64>,
    #[arg(long)]
    pub unknown_anchors: Option<usize>,
}

impl GenerateArgs {
    pub fn config(&self) -> GenConfig {
        let d = GenConfig::default();
        GenConfig {
            known: self.known.unwrap_or(d.known),
            unknown: self.unknown.unwrap_or(d.unknown),
            dim: self.dim.unwrap_or(d.dim),
            train_size: self.train_size.unwrap_or(d.train_size),
            val_size: self.val_size.unwrap_or(d.val_size),
            separation: self.separation.unwrap_or(d.separation),
            noise: self.noise.unwrap_or(d.noise),
            co_occurrence: self.co_occurrence.unwrap_or(d.co_occurrence),
            normal_fraction: self.normal_fraction.unwrap_or(d.normal_fraction),
            unknown_fraction: self.unknown_fraction.unwrap_or(d.unknown_fraction),
            unknown_distance: self.unknown_distance.unwrap_or(d.unknown_distance),
            unknown_overlap: self.unknown_overlap.unwrap_or(d.unknown_overlap),
            unknown_anchors: self.unknown_anchors.unwrap_or(d.unknown_anchors),
            seed: self.seed.unwrap_or(d.seed),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory holding train.edl and val.edl.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// CIW table driving the base-rate adjustment. Without it every class
    /// keeps the uniform base rate.
    #[arg(long)]
    pub ciw: Option<PathBuf>,
    /// Ignore `--ciw` and train with uniform base rates.
    #[arg(long)]
    pub no_ebra: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train a plain classifier first, then fit the evidential head on the
    /// fixed backbone.
    #[arg(long)]
    pub freeze_backbone: bool,
    #[arg(long, default_value_t = 20)]
    pub finetune_epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub finetune_lr: f64,
    /// Per-epoch loss as CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

impl TrainArgs {
    pub fn config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            momentum: self.momentum.unwrap_or(d.momentum),
            seed: self.seed,
            ..d
        }
    }

    /// The head fine-tune draws its batches from the next seed.
    pub fn finetune_config(&self) -> TrainConfig {
        let base = self.config();
        TrainConfig {
            epochs: self.finetune_epochs,
            learning_rate: self.finetune_lr,
            batch_size: base.batch_size,
            weight_decay: base.weight_decay,
            momentum: base.momentum,
            ..TrainConfig::finetune(self.seed.wrapping_add(1))
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Report to write (TOML).
    #[arg(long)]
    pub out: PathBuf,
    /// Class weights for F2_CIW; uniform when absent.
    #[arg(long)]
    pub ciw: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct OodArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Report to write (TOML).
    #[arg(long)]
    pub out: PathBuf,
    /// Per-sample uncertainty table (CSV).
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// max, sum or topN.
    #[arg(long, default_value = "max")]
    pub agg: String,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

/// Process exit status for an error: 2 configuration, 3 data, 4 numeric.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) => 2,
        Error::InvalidInput(_)
        | Error::Parse { .. }
        | Error::Version { .. }
        | Error::Io { .. }
        | Error::UndefinedMetric(_) => 3,
        Error::Domain(_) | Error::NonFiniteLoss { .. } => 4,
    }
}

/// Sizes the global worker pool from `EDL_NUM_THREADS`, if set.
pub fn configure_threads(value: Option<&str>) -> Result<()> {
    let Some(raw) = value else { return Ok(()) };
    let n: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => {
            return Err(Error::InvalidConfig(format!(
                "{THREADS_ENV} must be a positive integer, got `{raw}`"
            )))
        }
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidConfig(format!("{THREADS_ENV}: {e}")))
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a).map(|_| ()),
        Command::Ood(a) => cmd_ood(a).map(|_| ()),
    }
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let cfg = args.config();
    let set = generate_synthetic(&cfg)?;
    save_split(&args.out, &set.split)?;
    save_ciw_config(&args.out.join(CIW_FILE), &set.ciw)?;
    println!(
        "wrote {} train and {} validation samples ({} known, {} unknown classes) to {}",
        set.split.train.len(),
        set.split.validation.len(),
        set.split.known_count(),
        set.split.unknown_classes.len(),
        args.out.display()
    );
    Ok(())
}

/// The CIW table restricted to the split's known classes, in their order.
fn known_ciw(path: &Path, split: &DatasetSplit) -> Result<CiwTable> {
    load_ciw_config(path)?.select(&split.known_classes)
}

fn log_csv(log: &[EpochRecord]) -> String {
    let mut out = String::from("stage,epoch,lr,loss\n");
    for r in log {
        let _ = writeln!(out, "{},{},{},{}", r.stage, r.epoch, r.learning_rate, r.mean_loss);
    }
    out
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let split = load_split(&args.data)?;
    let k = split.known_count();
    let examples = known_examples(&split.train, k)?;
    let ciw = match (&args.ciw, args.no_ebra) {
        (Some(path), false) => known_ciw(path, &split)?,
        _ => CiwTable::zeros(&split.known_classes)?,
    };
    let shape = ModelShape::desk(split.dim, k);
    let cfg = args.config();
    let outcome = if args.freeze_backbone {
        train_two_phase(&examples, &cfg, &args.finetune_config(), &shape, &ciw)?
    } else {
        train(&examples, &cfg, &shape, &ciw)?
    };
    for r in &outcome.log {
        println!(
            "{:<10} epoch {:>3}  lr {:.1e}  loss {:.6}",
            r.stage.to_string(),
            r.epoch,
            r.learning_rate,
            r.mean_loss
        );
    }
    if let Some(path) = &args.log {
        fs::write(path, log_csv(&outcome.log)).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
    }
    let ck = Checkpoint::new(
        outcome.model,
        split.known_classes.clone(),
        outcome.base_rates,
        outcome.weight,
        args.seed,
    )?;
    ck.save(&args.out)?;
    println!("checkpoint written to {}", args.out.display());
    Ok(())
}

fn check_threshold(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("threshold must lie in [0, 1], got {t}")))
    }
}

/// Loads a checkpoint and a split and checks that they describe the same
/// inputs and known classes.
fn load_pair(checkpoint: &Path, data: &Path) -> Result<(Checkpoint, DatasetSplit)> {
    let ck = Checkpoint::load(checkpoint)?;
    let split = load_split(data)?;
    let want = ck.model.shape().input_dim;
    if split.dim != want {
        return Err(Error::InvalidInput(format!(
            "dataset has {} features per sample, checkpoint expects {want}",
            split.dim
        )));
    }
    if split.known_classes != ck.class_names {
        return Err(Error::InvalidInput(format!(
            "dataset known classes [{}] differ from checkpoint classes [{}]",
            split.known_classes.join(","),
            ck.class_names.join(",")
        )));
    }
    Ok((ck, split))
}

fn run_info(command: &str, ck: &Checkpoint, threshold: f64) -> RunInfo {
    let shape = ck.model.shape();
    let widths: Vec<String> = shape.widths.iter().map(usize::to_string).collect();
    RunInfo::new(
        command,
        ck.seed,
        threshold,
        ck.weight.get(),
        ck.base_rates.pairs().iter().map(|p| p.pos()).collect(),
    )
    .with("input_dim", shape.input_dim)
    .with("hidden_widths", widths.join(","))
    .with("classes", ck.class_names.join(","))
    .with("logit_head", ck.model.classifier.is_some())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<MetricsReport> {
    check_threshold(args.threshold)?;
    let (ck, split) = load_pair(&args.checkpoint, &args.data)?;
    let weights = match &args.ciw {
        Some(path) => known_ciw(path, &split)?,
        None => CiwTable::uniform(&split.known_classes)?,
    };
    let known: Vec<_> = split.known_validation().collect();
    if known.is_empty() {
        return Err(Error::InvalidInput("validation split has no known samples".into()));
    }
    let k = split.known_count();
    let inputs: Vec<&[f64]> = known.iter().map(|s| s.features.as_slice()).collect();
    let preds = predict_batch(
        &ck.model,
        &inputs,
        &ck.base_rates,
        ck.weight,
        args.threshold,
        AggregationMode::Max,
    )?;
    let predicted: Vec<Vec<bool>> = preds.into_iter().map(|p| p.labels).collect();
    let truth = known
        .iter()
        .map(|s| MultiLabel::from_indices(k, &s.labels))
        .collect::<Result<Vec<_>>>()?;

    let info = run_info("eval", &ck, args.threshold).with(
        "f2_weights",
        if args.ciw.is_some() { "ciw" } else { "uniform" },
    );
    let mut report = MetricsReport::new(info);
    report.msdc = Some(evaluate_msdc(&predicted, &truth, &weights)?);
    report.save(&args.out)?;
    print!("{}", report.summary());
    Ok(report)
}

pub fn cmd_ood(args: &OodArgs) -> Result<MetricsReport> {
    check_threshold(args.threshold)?;
    let mode: AggregationMode = args.agg.parse()?;
    let (ck, split) = load_pair(&args.checkpoint, &args.data)?;
    if !split.has_unknown_validation() {
        return Err(Error::InvalidInput(
            "validation split has no unknown samples; OOD scoring needs both known and unknown ones"
                .into(),
        ));
    }
    let val = &split.validation;
    let inputs: Vec<&[f64]> = val.iter().map(|s| s.features.as_slice()).collect();
    let preds = predict_batch(&ck.model, &inputs, &ck.base_rates, ck.weight, args.threshold, mode)?;
    let scores: Vec<f64> = preds.iter().map(|p| p.uncertainty).collect();
    let unknown: Vec<bool> = val.iter().map(|s| s.is_unknown).collect();

    let mut report = MetricsReport::new(run_info("ood", &ck, args.threshold).with("aggregation", mode));
    report.ood = Some(evaluate_ood(&scores, &unknown, &mode.to_string())?);
    if ck.model.classifier.is_some() {
        let logits = inputs
            .iter()
            .map(|x| Ok(ck.model.logits(x)?.expect("logit head present")))
            .collect::<Result<Vec<_>>>()?;
        for method in BaselineMethod::ALL {
            report.baselines.push(evaluate_baseline(&logits, &unknown, method)?);
        }
    }
    if let Some(path) = &args.scores {
        let ids: Vec<String> = val.iter().map(|s| s.id.clone()).collect();
        let file = fs::File::create(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        write_score_csv(file, &ids, &scores, &unknown)?;
    }
    report.save(&args.out)?;
    print!("{}", report.summary());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_kind() {
        assert_eq!(exit_code(&Error::InvalidConfig("x".into())), 2);
        assert_eq!(exit_code(&Error::InvalidInput("x".into())), 3);
        assert_eq!(exit_code(&Error::NonFiniteLoss { epoch: 1, batch: 2 }), 4);
        assert_eq!(exit_code(&Error::Domain("x".into())), 4);
    }

    #[test]
    fn thread_setting_is_validated() {
        assert!(configure_threads(None).is_ok());
        for bad in ["0", "-1", "many", ""] {
            assert!(matches!(configure_threads(Some(bad)), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn unset_flags_take_library_defaults() {
        let cli = Cli::try_parse_from(["edl", "generate", "--out", "d", "--seed", "3"]).unwrap();
        let Command::Generate(a) = cli.command else { panic!() };
        assert_eq!(a.config(), GenConfig { seed: 3, ..GenConfig::default() });

        let cli = Cli::try_parse_from(["edl", "train", "--data", "d", "--out", "m", "--seed", "7"]).unwrap();
        let Command::Train(a) = cli.command else { panic!() };
        assert_eq!(a.config(), TrainConfig { seed: 7, ..TrainConfig::default() });
        let ft = a.finetune_config();
        assert_eq!((ft.epochs, ft.learning_rate, ft.seed), (20, 1e-3, 8));
    }

    #[test]
    fn log_has_header_and_rows() {
        let log = vec![EpochRecord {
            stage: edl_core::net::Stage::Joint,
            epoch: 0,
            learning_rate: 0.05,
            mean_loss: 1.5,
        }];
        assert_eq!(log_csv(&log), "stage,epoch,lr,loss\njoint,0,0.05,1.5\n");
    }
}
