//! Command-line driver: one subcommand per pipeline stage.
//!
//! [`run`] parses an argument list, executes the subcommand and returns the
//! process exit code (0 success, 1 usage error, 2 data error).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use occlubench::dataset::{
    filter_min_images, load_manifest, stratified_split, DatasetManifest, MemorySource, SplitPart,
};
use occlubench::demo::{generate_demo_dataset, DemoConfig};
use occlubench::evaluator::{
    compare_models, evaluate_condition, load_report, render_chart, write_comparison, write_report,
    EvalReport, ModelInfo,
};
use occlubench::inpaint::{recover_dataset, RecoveryKind, RecoveryStrategy};
use occlubench::occlusion::{generate_mask, occlude_dataset, occlusion_rng, MaskGeometry, MaskKind};
use occlubench::trainer::{
    init_model, load_checkpoint, lr_find_model, save_checkpoint, train, LrFindConfig, TrainConfig,
};
use occlubench::{imagecore, DatasetSplit};

pub const CHECKPOINT_FILE: &str = "model.ocrc";
pub const TRAIN_CONFIG_FILE: &str = "config.json";

#[derive(Debug, Parser)]
#[command(
    name = "occlubench",
    version,
    about = "Occlusion-robustness benchmark for face classifiers"
)]
pub struct Cli {
    /// Global seed for every random stream.
    #[arg(long, global = true, env = "OCCLUBENCH_SEED")]
    pub seed: Option<u64>,

    /// Worker threads; defaults to the number of cores. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Increase log detail (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter small classes and split a manifest into train/val/test.
    PrepareSplit(PrepareSplitArgs),
    /// Rasterize standalone masks of one kind.
    SynthMasks(SynthMasksArgs),
    /// Write an occluded copy of a dataset part with mask sidecars.
    ApplyMasks(ApplyMasksArgs),
    /// Recover an occluded dataset directory.
    Inpaint(InpaintArgs),
    /// Learning-rate range sweep on a throwaway model.
    LrFind(LrFindArgs),
    /// Train a classifier.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one or more test conditions.
    Evaluate(EvaluateArgs),
    /// Compare evaluation reports across models.
    Report(ReportArgs),
    /// Generate the synthetic-faces demo dataset.
    DemoDataset(DemoArgs),
}

#[derive(Debug, Args)]
pub struct PrepareSplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 15)]
    pub min_per_class: usize,
    #[arg(long, default_value_t = 3)]
    pub val: usize,
    #[arg(long, default_value_t = 2)]
    pub test: usize,
    /// Output directory for split.json and per-part manifests.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthMasksArgs {
    #[arg(long)]
    pub mask: u8,
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// JSON file overriding the default mask geometry.
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ApplyMasksArgs {
    /// Split file; use with --part.
    #[arg(long, conflicts_with = "manifest")]
    pub split: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub part: String,
    /// Plain manifest instead of a split part.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub mask: u8,
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InpaintArgs {
    /// Directory written by apply-masks.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "mirror_then_harmonic")]
    pub strategy: String,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LrFindArgs {
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, default_value = "smallconv")]
    pub arch: String,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 32)]
    pub target_size: usize,
    #[arg(long, default_value_t = 1e-7)]
    pub start_lr: f64,
    #[arg(long, default_value_t = 10.0)]
    pub end_lr: f64,
    #[arg(long, default_value_t = 100)]
    pub num_iters: usize,
    #[arg(long, default_value_t = 0.98)]
    pub smoothing: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON training config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub epochs_frozen: Option<usize>,
    #[arg(long)]
    pub epochs_unfrozen: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_lr: Option<f64>,
    #[arg(long)]
    pub frozen_lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Enable Cutmix on training batches.
    #[arg(long)]
    pub cutmix: bool,
    #[arg(long)]
    pub cutmix_alpha: Option<f64>,
    /// Disable random augmentation.
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long)]
    pub target_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// `ID=MANIFEST`, repeatable, e.g. `clean=test.csv` or `mask3=occl3/manifest.csv`.
    #[arg(long = "condition", required = true)]
    pub conditions: Vec<String>,
    /// Name of the model in the report; defaults to the checkpoint's directory name.
    #[arg(long)]
    pub model_id: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// report.json files, one per model.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    #[arg(long, default_value_t = 25)]
    pub per_class: usize,
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = 0.03)]
    pub noise: f64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Training config file: the training fields plus optional paths.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainFile {
    pub split: Option<PathBuf>,
    pub out: Option<PathBuf>,
    #[serde(flatten)]
    pub train: TrainConfig,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

impl From<occlubench::Error> for CliError {
    fn from(e: occlubench::Error) -> Self {
        CliError::Data(e.into())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parse `argv` (including the program name) and run. Returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(&cli);
    let outcome = match cli.threads {
        Some(0) => Err(usage("--threads must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(CliError::Data(e.into())),
        },
        None => dispatch(&cli),
    };
    match outcome {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            1
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn init_logging(cli: &Cli) {
    let level = if cli.quiet {
        log::LevelFilter::Warn
    } else {
        match cli.verbose {
            0 => log::LevelFilter::Info,
            1 => log::LevelFilter::Debug,
            _ => log::LevelFilter::Trace,
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn dispatch(cli: &Cli) -> CliResult {
    let seed = cli.seed;
    match &cli.command {
        Command::PrepareSplit(a) => prepare_split(a, seed.unwrap_or(0)),
        Command::SynthMasks(a) => synth_masks(a, seed.unwrap_or(0)),
        Command::ApplyMasks(a) => apply_masks(a, seed.unwrap_or(0)),
        Command::Inpaint(a) => inpaint(a),
        Command::LrFind(a) => lr_find(a, seed.unwrap_or(0)),
        Command::Train(a) => train_cmd(a, seed),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
        Command::DemoDataset(a) => demo(a, seed.unwrap_or(0)),
    }
}

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(CliError::Data)
}

fn write_text(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::Data)
}

fn pretty_json<T: Serialize>(value: &T) -> CliResult<String> {
    let value = serde_json::to_value(value).map_err(|e| CliError::Data(e.into()))?;
    Ok(serde_json::to_string_pretty(&value).map_err(|e| CliError::Data(e.into()))? + "\n")
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(CliError::Data)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(CliError::Data)
}

fn load_geometry(path: Option<&Path>) -> CliResult<MaskGeometry> {
    let geometry = match path {
        Some(p) => read_json(p)?,
        None => MaskGeometry::default(),
    };
    geometry.validate().map_err(|e| usage(e.to_string()))?;
    Ok(geometry)
}

fn check_mask_id(id: u8) -> CliResult {
    if (1..=MaskKind::COUNT).contains(&id) {
        Ok(())
    } else {
        Err(usage(format!(
            "--mask must be between 1 and {}, got {id}",
            MaskKind::COUNT
        )))
    }
}

fn prepare_split(a: &PrepareSplitArgs, seed: u64) -> CliResult {
    let manifest = load_manifest(&a.manifest)?;
    let filtered = filter_min_images(&manifest, a.min_per_class)?;
    let split = stratified_split(&filtered, a.val, a.test, seed)?;
    create_dir(&a.out)?;
    write_text(&a.out.join("split.json"), &split.to_json())?;
    for (part, name) in [
        (SplitPart::Train, "train"),
        (SplitPart::Val, "val"),
        (SplitPart::Test, "test"),
    ] {
        split.manifest(part).write(&a.out.join(format!("{name}.csv")))?;
    }
    log::info!(
        "split {} classes: train {}, val {}, test {} (dropped {} samples)",
        split.classes.len(),
        split.train.len(),
        split.val.len(),
        split.test.len(),
        manifest.len() - filtered.len()
    );
    Ok(())
}

fn synth_masks(a: &SynthMasksArgs, seed: u64) -> CliResult {
    check_mask_id(a.mask)?;
    if a.size == 0 {
        return Err(usage("--size must be positive"));
    }
    let geometry = load_geometry(a.geometry.as_deref())?;
    create_dir(&a.out)?;
    let mut index = Vec::with_capacity(a.count);
    for i in 0..a.count {
        let mask = generate_mask(a.mask, a.size, a.size, &mut occlusion_rng(seed, i), &geometry)?;
        let name = format!("mask{}_{i:05}.pgm", a.mask);
        imagecore::write_image(&a.out.join(&name), &mask.to_image())?;
        index.push(serde_json::json!({
            "sample": i,
            "kind": a.mask,
            "side": mask.kind.side,
            "seed": seed,
            "mask": name,
        }));
    }
    write_text(&a.out.join("masks.json"), &pretty_json(&index)?)?;
    log::info!(
        "wrote {} masks of kind {} to {}",
        a.count,
        a.mask,
        a.out.display()
    );
    Ok(())
}

fn input_manifest(split: Option<&Path>, part: &str, manifest: Option<&Path>) -> CliResult<DatasetManifest> {
    match (split, manifest) {
        (Some(s), _) => {
            let part: SplitPart = part
                .parse()
                .map_err(|e: occlubench::Error| usage(e.to_string()))?;
            Ok(DatasetSplit::load(s)?.manifest(part))
        }
        (None, Some(m)) => Ok(load_manifest(m)?),
        (None, None) => Err(usage("either --split or --manifest is required")),
    }
}

fn apply_masks(a: &ApplyMasksArgs, seed: u64) -> CliResult {
    check_mask_id(a.mask)?;
    let geometry = load_geometry(a.geometry.as_deref())?;
    let manifest = input_manifest(a.split.as_deref(), &a.part, a.manifest.as_deref())?;
    create_dir(&a.out)?;
    let report = occlude_dataset(&manifest, a.mask, seed, &a.out, &geometry)?;
    for (path, reason) in &report.failures {
        log::warn!("skipped {}: {reason}", path.display());
    }
    log::info!(
        "occluded {} images with mask {} into {}",
        report.records.len(),
        a.mask,
        a.out.display()
    );
    Ok(())
}

fn inpaint(a: &InpaintArgs) -> CliResult {
    let kind: RecoveryKind = a
        .strategy
        .parse()
        .map_err(|e: occlubench::Error| usage(e.to_string()))?;
    let strategy = RecoveryStrategy {
        kind,
        tol: a.tol,
        max_iters: a.max_iters,
    };
    strategy.validate().map_err(|e| usage(e.to_string()))?;
    create_dir(&a.out)?;
    let out = recover_dataset(&a.input, &strategy, &a.out)?;
    log::info!("recovered {} images into {}", out.len(), a.out.display());
    Ok(())
}

fn lr_find(a: &LrFindArgs, seed: u64) -> CliResult {
    let split = DatasetSplit::load(&a.split)?;
    let source = MemorySource::preload(&split.manifest(SplitPart::Train), a.target_size)?;
    let params = init_model(&a.arch, a.target_size, split.classes.len(), seed)?;
    let cfg = LrFindConfig {
        start_lr: a.start_lr,
        end_lr: a.end_lr,
        num_iters: a.num_iters,
        smoothing: a.smoothing,
        ..Default::default()
    };
    log::info!(
        "lr-find config: {}",
        serde_json::to_string(&cfg).unwrap_or_default()
    );
    let result = lr_find_model(&params, &source, a.batch_size, seed, &cfg)?;
    create_dir(&a.out)?;
    write_text(&a.out.join("lr_find.json"), &pretty_json(&result)?)?;
    log::info!("suggested max_lr {:e}", result.suggestion);
    Ok(())
}

/// Config file values, then flags, then the global seed.
pub fn resolve_train_config(a: &TrainArgs, seed: Option<u64>) -> anyhow::Result<TrainFile> {
    let mut file: TrainFile = match &a.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => TrainFile::default(),
    };
    let t = &mut file.train;
    if let Some(v) = &a.split {
        file.split = Some(v.clone());
    }
    if let Some(v) = &a.out {
        file.out = Some(v.clone());
    }
    if let Some(v) = &a.arch {
        t.arch = v.clone();
    }
    if let Some(v) = a.epochs_frozen {
        t.epochs_frozen = v;
    }
    if let Some(v) = a.epochs_unfrozen {
        t.epochs_unfrozen = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.max_lr {
        t.max_lr = v;
    }
    if let Some(v) = a.frozen_lr {
        t.frozen_lr = Some(v);
    }
    if let Some(v) = a.weight_decay {
        t.weight_decay = v;
    }
    if a.cutmix {
        t.cutmix.enabled = true;
    }
    if let Some(v) = a.cutmix_alpha {
        t.cutmix.alpha = v;
    }
    if a.no_augment {
        t.augment = None;
    }
    if let Some(v) = a.target_size {
        t.target_size = v;
    }
    if let Some(v) = seed {
        t.seed = v;
    }
    Ok(file)
}

fn train_cmd(a: &TrainArgs, seed: Option<u64>) -> CliResult {
    let file = resolve_train_config(a, seed).map_err(|e| usage(format!("{e:#}")))?;
    let split_path = file
        .split
        .clone()
        .ok_or_else(|| usage("no split given (--split or \"split\" in the config)"))?;
    let out = file
        .out
        .clone()
        .ok_or_else(|| usage("no output directory given (--out or \"out\" in the config)"))?;
    file.train.validate().map_err(|e| usage(e.to_string()))?;
    let resolved = pretty_json(&file)?;
    log::info!("resolved training config:\n{}", resolved.trim_end());
    let split = DatasetSplit::load(&split_path)?;
    let (params, history) = train(&split, &file.train)?;
    create_dir(&out)?;
    save_checkpoint(&params, &out.join(CHECKPOINT_FILE))?;
    write_text(&out.join("history.json"), &pretty_json(&history)?)?;
    write_text(&out.join(TRAIN_CONFIG_FILE), &pretty_json(&file.train)?)?;
    log::info!(
        "saved {} (best epoch {})",
        out.join(CHECKPOINT_FILE).display(),
        history.best_epoch
    );
    Ok(())
}

fn parse_condition(spec: &str) -> CliResult<(String, PathBuf)> {
    match spec.split_once('=') {
        Some((id, path)) if !id.is_empty() && !path.is_empty() => Ok((id.to_string(), PathBuf::from(path))),
        _ => Err(usage(format!("--condition expects ID=MANIFEST, got {spec:?}"))),
    }
}

fn evaluate(a: &EvaluateArgs) -> CliResult {
    let conditions = a
        .conditions
        .iter()
        .map(|c| parse_condition(c))
        .collect::<CliResult<Vec<_>>>()?;
    let params = load_checkpoint(&a.checkpoint)?;
    let train_cfg: Option<TrainConfig> = a
        .checkpoint
        .parent()
        .map(|d| d.join(TRAIN_CONFIG_FILE))
        .filter(|p| p.exists())
        .map(|p| read_json(&p))
        .transpose()?;
    let model_id = a.model_id.clone().unwrap_or_else(|| {
        a.checkpoint
            .parent()
            .and_then(|d| d.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .filter(|n| !n.is_empty())
            .unwrap_or_else(|| "model".into())
    });
    let mut results = Vec::new();
    for (id, path) in &conditions {
        let manifest = load_manifest(path)?;
        let r = evaluate_condition(&params, &manifest, id, params.arch.input_size)?;
        log::info!(
            "{id}: n={} top1 {:.4} top5 {:.4}",
            r.n,
            r.top1_error,
            r.top5_error
        );
        results.push(r);
    }
    let info = ModelInfo {
        id: model_id,
        arch: params.arch.name.clone(),
        cutmix: train_cfg.is_some_and(|c| c.cutmix.enabled),
        seed: params.seed,
        num_classes: params.num_classes(),
    };
    let report = EvalReport::new(info, results).map_err(|e| usage(e.to_string()))?;
    write_report(&report, &a.out)?;
    Ok(())
}

fn report(a: &ReportArgs) -> CliResult {
    let reports = a
        .inputs
        .iter()
        .map(|p| load_report(p))
        .collect::<Result<Vec<_>, _>>()?;
    let cmp = compare_models(&reports).map_err(|e| CliError::Data(e.into()))?;
    create_dir(&a.out)?;
    write_comparison(&cmp, &a.out)?;
    for r in &reports {
        let name: String = r
            .model
            .id
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        write_text(&a.out.join(format!("chart_{name}.svg")), &render_chart(r))?;
    }
    log::info!("compared {} reports into {}", reports.len(), a.out.display());
    Ok(())
}

fn demo(a: &DemoArgs, seed: u64) -> CliResult {
    let cfg = DemoConfig {
        classes: a.classes,
        per_class: a.per_class,
        size: a.size,
        seed,
        noise: a.noise,
    };
    let m = generate_demo_dataset(&a.out, &cfg).map_err(|e| match e {
        occlubench::Error::InvalidArgument(msg) => usage(msg),
        other => other.into(),
    })?;
    log::info!(
        "wrote {} images of {} identities to {}",
        m.len(),
        m.num_classes(),
        a.out.display()
    );
    Ok(())
}
