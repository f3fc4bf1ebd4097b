//! The `lgprep` command line.
//!
//! Every command prints `key=value` summary lines. Settings come from flags,
//! then an optional TOML file given with `--config`, then built-in defaults.

mod commands;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureKind, PipelineMode};
use crate::imagecore::Split;
use crate::learners::{ModelKind, TrainConfig};
use crate::lgfilter::DEFAULT_OMEGA;

pub const DEFAULT_SIZE: usize = 64;
pub const DEFAULT_K: usize = 1;
pub const SEED_ENV: &str = "LGPREP_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "lgprep",
    version,
    about = "Laguerre-Gauss line-profile features and small classifiers"
)]
pub struct Cli {
    /// TOML file with default settings; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads for batch work (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Seed for synthesis, augmentation and MLP training (default 0).
    #[arg(long, global = true, env = SEED_ENV)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the synthetic corpus as `<out>/<split>/<class>/*.pgm`.
    Synth(SynthArgs),
    /// Grow one dataset directory to a target size with rotations and flips.
    Augment(AugmentArgs),
    /// Write one feature CSV per split.
    Preprocess(PreprocessArgs),
    /// Fit a classifier and write the model file.
    Train(TrainArgs),
    /// Evaluate a saved model on the dataset splits.
    Eval(EvalArgs),
    /// Train and evaluate once per pipeline mode.
    Ablate(AblateArgs),
    /// Per-class mean line profiles.
    Profiles(ProfilesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthTask {
    /// Three shape classes.
    Shapes,
    /// Two classes: plain texture vs texture with a shape.
    Proxy,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output root; split directories are created below it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "shapes")]
    pub task: SynthTask,
    /// Canvas size in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    /// Per-class counts as `train/validation/test`, classes comma-separated,
    /// e.g. `3277,4058,3608/859,803,720/889,847,600`.
    #[arg(long)]
    pub counts: Option<String>,
    /// Probability that a shape is drawn as an outline.
    #[arg(long)]
    pub stroke_probability: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Directory of class folders.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub target: usize,
}

#[derive(Debug, Args, Default)]
pub struct FeatureArgs {
    /// Filter bandpass parameter (default 0.9).
    #[arg(long)]
    pub omega: Option<f64>,
    /// Images are resized to size×size before feature extraction (default 64).
    #[arg(long)]
    pub size: Option<usize>,
    /// full (default), no_convolution or no_shift.
    #[arg(long)]
    pub mode: Option<PipelineMode>,
    /// lp (default) or flattened.
    #[arg(long)]
    pub representation: Option<FeatureKind>,
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// knn (default) or mlp.
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Neighbours for kNN (default 1).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Dataset root holding `train/`, `validation/`, `test/`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub features: FeatureArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file written by `train`.
    #[arg(long)]
    pub model_file: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also report the training split.
    #[arg(long)]
    pub include_train: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct ProfilesArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: Split,
    #[command(flatten)]
    pub features: FeatureArgs,
}

/// Keys accepted in a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub omega: Option<f64>,
    pub size: Option<usize>,
    pub mode: Option<String>,
    pub representation: Option<String>,
    pub model: Option<String>,
    pub k: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub patience: Option<usize>,
    pub stroke_probability: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    }
}

/// Settings after merging flags, config file and defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub features: FeatureConfig,
    pub size: usize,
    pub model: ModelKind,
    pub k: usize,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            features: FeatureConfig::default(),
            size: DEFAULT_SIZE,
            model: ModelKind::Knn,
            k: DEFAULT_K,
            train: TrainConfig::default(),
        }
    }
}

fn parse_opt<T: std::str::FromStr<Err = Error>>(value: &Option<String>) -> Result<Option<T>> {
    value.as_deref().map(str::parse).transpose()
}

impl RunConfig {
    fn resolve(
        seed: Option<u64>,
        file: &FileConfig,
        features: &FeatureArgs,
        model: &ModelArgs,
    ) -> Result<Self> {
        let d = RunConfig::default();
        let seed = seed.or(file.seed).unwrap_or(d.seed);
        let train = TrainConfig {
            epochs: model.epochs.or(file.epochs).unwrap_or(d.train.epochs),
            batch_size: model
                .batch_size
                .or(file.batch_size)
                .unwrap_or(d.train.batch_size),
            learning_rate: model
                .learning_rate
                .or(file.learning_rate)
                .unwrap_or(d.train.learning_rate),
            patience: model.patience.or(file.patience).unwrap_or(d.train.patience),
            seed,
            ..d.train
        };
        train.validate()?;
        let cfg = RunConfig {
            seed,
            features: FeatureConfig {
                kind: features
                    .representation
                    .or(parse_opt(&file.representation)?)
                    .unwrap_or(d.features.kind),
                omega: features.omega.or(file.omega).unwrap_or(d.features.omega),
                mode: features
                    .mode
                    .or(parse_opt(&file.mode)?)
                    .unwrap_or(d.features.mode),
            },
            size: features.size.or(file.size).unwrap_or(d.size),
            model: model.model.or(parse_opt(&file.model)?).unwrap_or(d.model),
            k: model.k.or(file.k).unwrap_or(d.k),
            train,
        };
        if cfg.size < 2 {
            return Err(Error::invalid("image size must be at least 2"));
        }
        if !(cfg.features.omega > 0.0 && cfg.features.omega.is_finite()) {
            return Err(Error::invalid(format!(
                "omega must be positive, got {}",
                cfg.features.omega
            )));
        }
        if cfg.features.omega != DEFAULT_OMEGA && cfg.features.omega > 1.0 {
            log::warn!("omega {} is above 1", cfg.features.omega);
        }
        if cfg.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        Ok(cfg)
    }
}

/// Parses `args` (including the program name) and runs the command, writing
/// summary lines to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::invalid(e.to_string()))?;
    execute(cli, out)
}

/// Runs an already parsed command line.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let workers = cli.workers.or(file.workers);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(Error::invalid("--workers must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    // Summary lines are buffered because the pool's threads cannot share `out`.
    let mut buf = Vec::new();
    let result = pool.install(|| dispatch(&cli, &file, &mut buf));
    out.write_all(&buf).map_err(|e| Error::io("<stdout>", e))?;
    result
}

fn dispatch(cli: &Cli, file: &FileConfig, out: &mut dyn Write) -> Result<()> {
    let none_f = FeatureArgs::default();
    let none_m = ModelArgs::default();
    match &cli.command {
        Command::Synth(a) => {
            let cfg = RunConfig::resolve(
                cli.seed,
                file,
                &FeatureArgs {
                    size: a.size,
                    ..FeatureArgs::default()
                },
                &none_m,
            )?;
            commands::synth(a, &cfg, file.stroke_probability, out)
        }
        Command::Augment(a) => {
            let cfg = RunConfig::resolve(cli.seed, file, &none_f, &none_m)?;
            commands::augment(a, &cfg, out)
        }
        Command::Preprocess(a) => {
            let cfg = RunConfig::resolve(cli.seed, file, &a.features, &none_m)?;
            commands::preprocess(a, &cfg, out)
        }
        Command::Train(a) => {
            let cfg = RunConfig::resolve(cli.seed, file, &a.features, &a.model)?;
            commands::train(a, &cfg, out)
        }
        Command::Eval(a) => commands::eval(a, out),
        Command::Ablate(a) => {
            let cfg = RunConfig::resolve(cli.seed, file, &a.features, &a.model)?;
            commands::ablate(a, &cfg, out)
        }
        Command::Profiles(a) => {
            let cfg = RunConfig::resolve(cli.seed, file, &a.features, &none_m)?;
            commands::profiles(a, &cfg, out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(args).unwrap()
    }

    #[test]
    fn defaults_match_reference_setup() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.features.omega, 0.9);
        assert_eq!(cfg.size, 64);
        assert_eq!(cfg.features.mode, PipelineMode::Full);
        assert_eq!(cfg.features.kind, FeatureKind::LineProfile);
        assert_eq!(cfg.k, 1);
    }

    #[test]
    fn flags_beat_config_file() {
        let file: FileConfig = toml::from_str("omega = 0.5\nk = 3\nmode = \"no_shift\"\n").unwrap();
        let cli = parse(&[
            "lgprep", "train", "--data", "d", "--out", "o", "--omega", "0.7",
        ]);
        let Command::Train(a) = &cli.command else {
            unreachable!()
        };
        let cfg = RunConfig::resolve(Some(9), &file, &a.features, &a.model).unwrap();
        assert_eq!(cfg.features.omega, 0.7);
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.features.mode, PipelineMode::NoShift);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train.seed, 9);
    }

    #[test]
    fn unknown_config_key_rejected() {
        assert!(toml::from_str::<FileConfig>("omgea = 0.5").is_err());
    }

    #[test]
    fn bad_values_rejected() {
        let file = FileConfig::default();
        let feats = FeatureArgs {
            omega: Some(-1.0),
            ..FeatureArgs::default()
        };
        assert!(RunConfig::resolve(None, &file, &feats, &ModelArgs::default()).is_err());
        let model = ModelArgs {
            k: Some(0),
            ..ModelArgs::default()
        };
        assert!(RunConfig::resolve(None, &file, &FeatureArgs::default(), &model).is_err());
        assert!(Cli::try_parse_from([
            "lgprep", "train", "--data", "d", "--out", "o", "--mode", "sideways"
        ])
        .is_err());
    }
}
