//! Command-line front end: `prepare-data`, `train`, `generate`, `evaluate`
//! and `augment-eval`.
//!
//! Exit codes: 0 on success, 1 on validation errors (bad flags, config,
//! labels, manifests), 2 on runtime aborts (I/O, numerical failures,
//! corrupt checkpoints).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{
    export_dataset, load_manifest, split, synth_corpus, Dataset, Image, SplitPolicy, Vocabulary,
};
use crate::error::{Error, Result};
use crate::identity::{train_embedder, EmbedderTrainConfig, IdentityEmbedder};
use crate::metrics::{
    augmentation_experiment, evaluate_model, report, synthesize_training_set, AugmentMode, ClassifierConfig,
    EvalOptions, ExpressionClassifier,
};
use crate::train::{self as trainer, load_checkpoint, TrainConfig};

/// Environment variable providing the default output directory.
pub const OUTPUT_DIR_ENV: &str = "LANDMARK_EXPR_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "landmark-expr",
    version,
    about = "Landmark-guided facial expression translation"
)]
pub struct Cli {
    /// Every output is written under this directory.
    #[arg(long, global = true, env = OUTPUT_DIR_ENV, default_value = "out")]
    pub output_dir: PathBuf,
    /// Validate inputs and print the effective configuration without writing
    /// anything.
    #[arg(long, global = true)]
    pub dry_run: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a manifest from a raw manifest or the synthetic corpus.
    PrepareData(PrepareArgs),
    /// Train both stages.
    Train(TrainArgs),
    /// Generate a landmark layout and face for one image.
    Generate(GenerateArgs),
    /// Score a checkpoint on a test manifest.
    Evaluate(EvaluateArgs),
    /// Run the data-augmentation classification experiment.
    AugmentEval(AugmentArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Raw manifest whose landmarks are in source-image pixels.
    #[arg(long, conflicts_with = "synthetic")]
    pub raw: Option<PathBuf>,
    /// Render the synthetic corpus instead.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long, default_value_t = 8)]
    pub subjects: usize,
    #[arg(long, default_value_t = 1)]
    pub intensities: usize,
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hold out this many subjects as a test split.
    #[arg(long)]
    pub test_subjects: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON file mirroring the training configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `key=value` overrides applied after the config file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Saved identity embedder; trained on the manifest when omitted.
    #[arg(long)]
    pub embedder: Option<PathBuf>,
    /// Continue from the latest checkpoint in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub expression: String,
    #[arg(long)]
    pub intensity: Option<u8>,
    /// Disable dropout noise.
    #[arg(long)]
    pub deterministic: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Test manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Frozen identity embedder used as the perceptual feature net.
    #[arg(long)]
    pub embedder: PathBuf,
    /// Real images for the Inception-Score classifier (default: the test
    /// manifest).
    #[arg(long)]
    pub classifier_manifest: Option<PathBuf>,
    /// Keep dropout active during generation.
    #[arg(long)]
    pub stochastic: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub train_manifest: PathBuf,
    #[arg(long)]
    pub test_manifest: PathBuf,
    /// Modes to run (default: all four).
    #[arg(long = "mode", value_name = "MODE")]
    pub modes: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Exit code for an error: 1 for validation problems, 2 for runtime aborts.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Manifest { .. }
        | Error::UnknownLabel { .. }
        | Error::LandmarkCount { .. }
        | Error::Shape(_)
        | Error::Invalid(_)
        | Error::Json(_)
        | Error::NotFrozen
        | Error::NoLandmarks => 1,
        Error::Io { .. }
        | Error::Image { .. }
        | Error::Tensor(_)
        | Error::NonFinite { .. }
        | Error::Checkpoint(_) => 2,
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let out = &cli.output_dir;
    match &cli.command {
        Command::PrepareData(a) => prepare_data(a, out, cli.dry_run),
        Command::Train(a) => train(a, out, cli.dry_run),
        Command::Generate(a) => generate(a, out, cli.dry_run),
        Command::Evaluate(a) => evaluate(a, out, cli.dry_run),
        Command::AugmentEval(a) => augment_eval(a, out, cli.dry_run),
    }
}

fn prepare_data(a: &PrepareArgs, out: &Path, dry_run: bool) -> Result<()> {
    let dataset = match (&a.raw, a.synthetic) {
        (Some(raw), _) => load_manifest(raw, a.resolution)?,
        (None, true) => synth_corpus(
            a.subjects,
            &Vocabulary::basic_expressions(),
            a.intensities,
            a.resolution,
            a.seed,
        )?,
        (None, false) => return Err(Error::invalid("prepare-data needs --raw or --synthetic")),
    };
    let data_dir = out.join("data");
    let splits: Vec<(PathBuf, Dataset)> = match a.test_subjects {
        Some(n) => {
            let (train, test) = split(&dataset, SplitPolicy::SubjectHoldout(n), a.seed)?;
            vec![(data_dir.join("train"), train), (data_dir.join("test"), test)]
        }
        None => vec![(data_dir, dataset)],
    };
    for (dir, ds) in &splits {
        if dry_run {
            println!(
                "would write {} samples to {}",
                ds.len(),
                dir.join("manifest.jsonl").display()
            );
        } else {
            let path = export_dataset(ds, dir)?;
            println!("wrote {} samples to {}", ds.len(), path.display());
        }
    }
    Ok(())
}

fn resolve_config(a: &TrainArgs) -> Result<TrainConfig> {
    let base = match &a.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    let source = a
        .config
        .as_ref()
        .map_or("none".to_string(), |p| p.display().to_string());
    println!(
        "config precedence: defaults < config file ({source}) < --override flags ({})",
        if a.overrides.is_empty() {
            "none".to_string()
        } else {
            a.overrides.join(", ")
        }
    );
    base.with_overrides(&a.overrides)
}

fn train(a: &TrainArgs, out: &Path, dry_run: bool) -> Result<()> {
    let cfg = resolve_config(a)?;
    println!(
        "effective configuration:\n{}",
        serde_json::to_string_pretty(&cfg)?
    );
    let dataset = load_manifest(&a.manifest, cfg.resolution)?;
    let embedder = match (&a.embedder, cfg.use_identity_loss) {
        (Some(dir), true) => Some(IdentityEmbedder::load(
            dir,
            candle_core::DType::F32,
            &candle_core::Device::Cpu,
        )?),
        (None, true) if dataset.subjects().len() < 2 => {
            return Err(Error::invalid(
                "identity loss needs at least 2 subjects to train an embedder",
            ))
        }
        _ => None,
    };
    if dry_run {
        println!(
            "dry run: {} samples, {} subjects; no files written",
            dataset.len(),
            dataset.subjects().len()
        );
        return Ok(());
    }
    let embedder = match embedder {
        Some(e) => Some(e),
        None if cfg.use_identity_loss => {
            let e = train_embedder(
                &dataset,
                &EmbedderTrainConfig {
                    seed: cfg.seed,
                    ..Default::default()
                },
            )?;
            let dir = out.join("embedder");
            e.save(&dir)?;
            println!("trained identity embedder -> {}", dir.display());
            Some(e)
        }
        None => None,
    };
    let run_dir = out.join("train");
    let outcome = if a.resume {
        trainer::resume_training(&dataset, embedder.as_ref(), &run_dir)?
    } else {
        trainer::train(&dataset, cfg, embedder.as_ref(), Some(&run_dir))?
    };
    if let Some(last) = outcome.checkpoints.last() {
        println!("final checkpoint: {}", last.display());
    }
    Ok(())
}

fn generate(a: &GenerateArgs, out: &Path, dry_run: bool) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?.model;
    model.vocabulary().index_of(&a.expression)?;
    let image = Image::load(&a.input)?;
    if dry_run {
        println!(
            "dry run: would generate `{}` from {}",
            a.expression,
            a.input.display()
        );
        return Ok(());
    }
    let deterministic = a.deterministic || model.config().eval_deterministic;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(a.seed);
    let g = model.generate(&image, &a.expression, a.intensity, deterministic, &mut rng)?;
    let dir = out.join("generate");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    g.landmark_image.save_png(&dir.join("landmarks.png"))?;
    report::write_json(&dir.join("landmarks.json"), &g.landmarks)?;
    g.face.save_png(&dir.join("face.png"))?;
    println!(
        "wrote landmarks.png, landmarks.json and face.png to {}",
        dir.display()
    );
    Ok(())
}

fn train_classifier(ds: &Dataset, seed: u64) -> Result<ExpressionClassifier> {
    let images: Vec<&Image> = ds.samples.iter().map(|s| &s.image).collect();
    let labels = ds
        .samples
        .iter()
        .map(|s| ds.vocabulary.index_of(&s.expression))
        .collect::<Result<Vec<_>>>()?;
    ExpressionClassifier::train(
        &images,
        &labels,
        &ds.vocabulary,
        &ClassifierConfig {
            seed,
            ..Default::default()
        },
    )
}

fn evaluate(a: &EvaluateArgs, out: &Path, dry_run: bool) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?.model;
    let res = model.config().resolution;
    let test = load_manifest(&a.manifest, res)?;
    let feature_net =
        IdentityEmbedder::load(&a.embedder, candle_core::DType::F32, &candle_core::Device::Cpu)?;
    let clf_data = match &a.classifier_manifest {
        Some(p) => load_manifest(p, res)?,
        None => test.clone(),
    };
    if dry_run {
        println!("dry run: would evaluate {} test samples", test.len());
        return Ok(());
    }
    let classifier = train_classifier(&clf_data, a.seed)?;
    let opts = EvalOptions {
        deterministic: !a.stochastic,
        seed: a.seed,
        ..Default::default()
    };
    let eval = evaluate_model(&model, &test, &feature_net, &classifier, &opts)?;
    let dir = out.join("eval");
    report::write_json(&dir.join("metrics.json"), &eval.report)?;
    let text = eval.report.to_text();
    report::write_text(&dir.join("metrics.txt"), &text)?;
    if let Some(sheet) = report::contact_sheet(&eval.samples, 16) {
        sheet.save_png(&dir.join("contact_sheet.png"))?;
    }
    print!("{text}");
    println!("wrote {}", dir.join("metrics.json").display());
    Ok(())
}

fn augment_eval(a: &AugmentArgs, out: &Path, dry_run: bool) -> Result<()> {
    let modes = if a.modes.is_empty() {
        AugmentMode::ALL.to_vec()
    } else {
        a.modes
            .iter()
            .map(|m| AugmentMode::parse(m))
            .collect::<Result<Vec<_>>>()?
    };
    let model = load_checkpoint(&a.checkpoint)?.model;
    let res = model.config().resolution;
    let train = load_manifest(&a.train_manifest, res)?;
    let test = load_manifest(&a.test_manifest, res)?;
    if dry_run {
        println!("dry run: would run {} modes", modes.len());
        return Ok(());
    }
    let synth = synthesize_training_set(&model, &train, true, a.seed)?;
    let cfg = ClassifierConfig {
        seed: a.seed,
        ..Default::default()
    };
    let table = augmentation_experiment(&train, &synth, &test, &modes, &cfg)?;
    let dir = out.join("augment");
    report::write_json(&dir.join("accuracy.json"), &table)?;
    let text = table.to_text();
    report::write_text(&dir.join("accuracy.txt"), &text)?;
    print!("{text}");
    Ok(())
}
