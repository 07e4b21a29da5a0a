use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use mekt_core::classify::Shrinkage;
use mekt_core::mekt::Kernel;
use mekt_core::pipeline::{Method, PipelineConfig, Protocol};
use mekt_core::{Error, FeatureMode, MeanKind, MektConfig};

#[derive(Debug, Parser)]
#[command(name = "mekt", version, about = "Manifold-embedded knowledge transfer for covariance-based trial classification")]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-subject dataset.
    Synth(SynthArgs),
    /// Align, extract features and adapt one target from labeled sources.
    Run(RunArgs),
    /// Rank source domains by transferability to a target.
    Dte(DteArgs),
    /// Run every STS or MTS task over a dataset directory.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    #[arg(long, default_value_t = 128)]
    pub samples: usize,
    /// Trials per class.
    #[arg(long, default_value_t = 60)]
    pub trials: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 6)]
    pub domains: usize,
    /// Rotation step between consecutive domains, degrees.
    #[arg(long, default_value_t = 30.0, allow_negative_numbers = true)]
    pub domain_rot: f64,
    /// Rotation step between consecutive classes, degrees.
    #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
    pub class_rot: f64,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub noise: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Pipeline settings shared by `run`, `dte --then-run` and `bench`.
#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[arg(long, default_value = "riemannian", value_parser = parse_with::<MeanKind>)]
    pub mean: MeanKind,
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    pub beta: f64,
    #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
    pub rho: f64,
    /// Subspace dimension.
    #[arg(long, default_value_t = 10)]
    pub dim: usize,
    /// Pseudo-label refinement iterations.
    #[arg(long, default_value_t = 5)]
    pub iters: usize,
    #[arg(long, default_value_t = 5)]
    pub knn: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub sigma: f64,
    /// Ridge added to the right-hand side of the eigenproblem.
    #[arg(long, default_value_t = 1e-6, allow_negative_numbers = true)]
    pub v_ridge: f64,
    /// `none`, `linear` or `rbf:<width>`.
    #[arg(long, default_value = "none", value_parser = parse_kernel)]
    pub kernel: KernelChoice,
    /// `tangent` or `erp-block[:<class>]` (template class defaults to 1).
    #[arg(long, default_value = "tangent", value_parser = parse_mode)]
    pub mode: FeatureMode,
    /// Keep this many features by ANOVA F before adaptation.
    #[arg(long)]
    pub select_k: Option<usize>,
    /// LDA shrinkage: `auto` or a fixed intensity in [0, 1].
    #[arg(long, default_value = "auto", value_parser = parse_shrinkage)]
    pub shrinkage: Shrinkage,
}

#[derive(Debug, Clone, Copy)]
pub struct KernelChoice(pub Option<Kernel>);

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub source: Vec<PathBuf>,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, default_value = "mekt", value_parser = parse_with::<Method>)]
    pub method: Method,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Run manifest (JSON).
    #[arg(long)]
    pub report: PathBuf,
    /// Predicted target labels, one per line. Defaults to the report path
    /// with a `.labels.txt` extension.
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DteArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub source: Vec<PathBuf>,
    #[arg(long)]
    pub target: PathBuf,
    /// Number of sources to keep; defaults to round((z - 1) / 2).
    #[arg(long)]
    pub top: Option<usize>,
    /// Scatter norm for the ranking: `entrywise` or `induced`.
    #[arg(long, default_value = "entrywise", value_parser = parse_with::<mekt_core::dte::ScatterNorm>)]
    pub norm: mekt_core::dte::ScatterNorm,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Run a method on the selected sources afterwards.
    #[arg(long)]
    pub then_run: bool,
    #[arg(long, default_value = "mekt", value_parser = parse_with::<Method>)]
    pub method: Method,
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub dataset_dir: PathBuf,
    #[arg(long, default_value = "mts", value_parser = parse_with::<Protocol>)]
    pub protocol: Protocol,
    #[arg(long, default_value = "mekt", value_parser = parse_with::<Method>)]
    pub method: Method,
    /// Per-task CSV table; a JSON report is written beside it.
    #[arg(long)]
    pub report: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

fn parse_with<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_kernel(s: &str) -> Result<KernelChoice, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(KernelChoice(None));
    }
    parse_with::<Kernel>(s).map(|k| KernelChoice(Some(k)))
}

fn parse_mode(s: &str) -> Result<FeatureMode, String> {
    let lower = s.to_ascii_lowercase();
    if lower == "tangent" {
        return Ok(FeatureMode::TangentUpper);
    }
    match lower.strip_prefix("erp-block") {
        Some("") => Ok(FeatureMode::ErpBlock(1)),
        Some(rest) => match rest.strip_prefix(':').map(str::parse::<usize>) {
            Some(Ok(class)) if class >= 1 => Ok(FeatureMode::ErpBlock(class)),
            _ => Err(format!("bad template class in {s:?}")),
        },
        None => Err(format!("unknown feature mode {s:?}")),
    }
}

fn parse_shrinkage(s: &str) -> Result<Shrinkage, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Shrinkage::Auto);
    }
    match s.parse::<f64>() {
        Ok(g) if (0.0..=1.0).contains(&g) => Ok(Shrinkage::Fixed(g)),
        _ => Err(format!("shrinkage must be `auto` or a number in [0, 1], got {s:?}")),
    }
}

impl PipelineArgs {
    pub fn config(&self) -> mekt_core::Result<PipelineConfig> {
        let mekt = MektConfig {
            alpha: self.alpha,
            beta: self.beta,
            rho: self.rho,
            subspace_dim: self.dim,
            iterations: self.iters,
            knn: self.knn,
            sigma: self.sigma,
            v_ridge: self.v_ridge,
            ..MektConfig::default()
        };
        mekt.validate()?;
        if self.select_k == Some(0) {
            return Err(Error::Config("--select-k must be positive".into()));
        }
        Ok(PipelineConfig {
            mean_kind: self.mean,
            mekt,
            kernel: self.kernel.0,
            mode: self.mode,
            select_k: self.select_k,
            shrinkage: self.shrinkage,
            ..PipelineConfig::default()
        })
    }
}
