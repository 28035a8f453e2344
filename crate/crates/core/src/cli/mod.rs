//! The `ggm` command line: instance generation, training, sampling,
//! infilling, exact certification and the Gibbs comparison.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error,
//! 3 certification failure.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::analysis::Method;
use crate::error::{GgmError, Result};
pub use commands::{load_instance, Outcome};
pub use config::{ExperimentConfig, InstanceSpec, ModelKind, ResolvedConfig, TokenSpec, SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CERTIFICATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ggm", version, about = "Glauber generative models on enumerable sequence spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded random or preset target distribution.
    GenInstance(CommonArgs),
    /// Train a denoiser on a target and write the model and a loss log.
    Train(CommonArgs),
    /// Generate sequences as JSON lines.
    Sample(CommonArgs),
    /// Generate with some positions held fixed.
    Infill(CommonArgs),
    /// Propagate exactly and check the convergence bounds.
    Certify(CommonArgs),
    /// Exact TV-vs-sweeps curves for the reverse chain and for Gibbs sampling.
    Compare(CommonArgs),
}

/// Flags shared by every subcommand; each overrides the matching config field.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Horizon T.
    #[arg(long)]
    pub steps: Option<usize>,
    /// `n` for sweeps 1..=n, or an explicit list `a,b,c`.
    #[arg(long)]
    pub sweeps: Option<String>,
    /// oracle, tabular or logistic.
    #[arg(long)]
    pub model_kind: Option<String>,
    /// Target distribution file.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// Trained model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Prompt file `{"positions": [...], "tokens": [...]}`.
    #[arg(long)]
    pub prompt: Option<PathBuf>,
    /// ggm or gibbs.
    #[arg(long)]
    pub method: Option<String>,
    /// Instance preset: random, uniform, anti-correlated, ising.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub timesteps_per_example: Option<usize>,
    #[arg(long)]
    pub vocab: Option<usize>,
    #[arg(long)]
    pub len: Option<usize>,
    #[arg(long)]
    pub stay_prob: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub instance_seed: Option<u64>,
}

impl CommonArgs {
    /// Loads `--config` (if any) and applies the flag overrides.
    pub fn into_config(self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { c.$field = Some(v); })*
            };
        }
        set!(
            seed => seed, out => out, steps => horizon, instance => instance_path, model => model_path,
            prompt => prompt_path, samples => samples, iterations => iterations,
            timesteps_per_example => timesteps_per_example, vocab => vocab, len => len,
            stay_prob => stay_prob, delta => delta, instance_seed => instance_seed,
        );
        if self.prompt.is_some() {
            c.prompt = None;
        }
        if let Some(p) = self.top_p {
            c.sampler.top_p = p;
        }
        if let Some(t) = self.temperature {
            c.sampler.temperature = t;
        }
        if let Some(s) = &self.sweeps {
            c.sweeps = Some(config::parse_sweeps(s)?);
        }
        if let Some(k) = &self.model_kind {
            c.model_kind = Some(k.parse()?);
        }
        if let Some(m) = &self.method {
            c.method = Some(match m.as_str() {
                "ggm" => Method::Ggm,
                "gibbs" => Method::Gibbs,
                other => return Err(GgmError::InvalidConfig(format!("unknown method {other:?}"))),
            });
        }
        if let Some(p) = &self.preset {
            c.instance = Some(InstanceSpec::parse_name(p)?);
        }
        Ok(c)
    }
}

pub fn execute(command: Command) -> Result<Outcome> {
    let (args, run): (CommonArgs, fn(&ExperimentConfig) -> Result<Outcome>) = match command {
        Command::GenInstance(a) => (a, commands::gen_instance),
        Command::Train(a) => (a, commands::train_cmd),
        Command::Sample(a) => (a, commands::sample_cmd),
        Command::Infill(a) => (a, commands::infill_cmd),
        Command::Certify(a) => (a, commands::certify_cmd),
        Command::Compare(a) => (a, commands::compare_cmd),
    };
    run(&args.into_config()?)
}

pub fn exit_code(err: &GgmError) -> i32 {
    match err {
        GgmError::InvalidConfig(_)
        | GgmError::InvalidInput(_)
        | GgmError::OutOfRange { .. }
        | GgmError::CapExceeded { .. }
        | GgmError::NotNormalized { .. }
        | GgmError::ShapeMismatch(_)
        | GgmError::Unsupported(_)
        | GgmError::Json(_) => EXIT_CONFIG,
        GgmError::Io(e) if e.kind() == std::io::ErrorKind::NotFound => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(Outcome::Success) => EXIT_OK,
        Ok(Outcome::CertificationFailed) => {
            eprintln!("certification failed");
            EXIT_CERTIFICATION
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
