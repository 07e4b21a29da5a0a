use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use mekt_core::classify::Shrinkage;
use mekt_core::dte::TransferabilityScore;
use mekt_core::mekt::IterationDiagnostics;
use mekt_core::pipeline::{PipelineConfig, TaskRow};
use mekt_core::{FeatureMode, MeanKind};

use crate::CliError;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

pub fn digest(path: &Path) -> Result<InputDigest, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let hash = Sha256::digest(&bytes);
    let sha256 = hash.iter().map(|b| format!("{b:02x}")).collect();
    Ok(InputDigest { path: path.display().to_string(), sha256 })
}

/// Every setting that influences a run.
#[derive(Debug, Serialize)]
pub struct ConfigEcho {
    pub mean_kind: MeanKind,
    pub mean_max_iterations: usize,
    pub mean_convergence_tol: f64,
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub subspace_dim: usize,
    pub iterations: usize,
    pub knn: usize,
    pub sigma: f64,
    pub v_ridge: f64,
    pub mmd: String,
    pub kernel: String,
    pub mode: String,
    pub select_k: Option<usize>,
    pub shrinkage: Shrinkage,
    pub dte_norm: mekt_core::dte::ScatterNorm,
}

impl From<&PipelineConfig> for ConfigEcho {
    fn from(cfg: &PipelineConfig) -> Self {
        let m = &cfg.mekt;
        ConfigEcho {
            mean_kind: cfg.mean_kind,
            mean_max_iterations: cfg.mean_solver.max_iterations,
            mean_convergence_tol: cfg.mean_solver.convergence_tol,
            alpha: m.alpha,
            beta: m.beta,
            rho: m.rho,
            subspace_dim: m.subspace_dim,
            iterations: m.iterations,
            knn: m.knn,
            sigma: m.sigma,
            v_ridge: m.v_ridge,
            mmd: format!("{:?}", m.mmd).to_ascii_lowercase(),
            kernel: cfg.kernel.map_or_else(|| "none".to_string(), |k| k.to_string()),
            mode: match cfg.mode {
                FeatureMode::TangentUpper => "tangent".to_string(),
                FeatureMode::ErpBlock(c) => format!("erp-block:{c}"),
            },
            select_k: cfg.select_k,
            shrinkage: cfg.shrinkage,
            dte_norm: cfg.dte_norm,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct TaskResult {
    pub sources: Vec<String>,
    pub target: String,
    pub method: String,
    /// Present when the target file carries labels.
    pub bca: Option<f64>,
    pub runtime_ms: f64,
    pub iterations: usize,
    pub diagnostics: Vec<IterationDiagnostics>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub command: String,
    pub config: ConfigEcho,
    pub inputs: Vec<InputDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranking: Option<Vec<TransferabilityScore>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected: Option<Vec<String>>,
    pub results: Vec<TaskResult>,
    /// Seed of the generator that produced the inputs, when known. The
    /// pipeline itself draws no random numbers.
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct BenchManifest {
    pub toolkit_version: String,
    pub protocol: mekt_core::pipeline::Protocol,
    pub method: String,
    pub config: ConfigEcho,
    pub inputs: Vec<InputDigest>,
    pub rows: Vec<TaskRow>,
    pub mean_bca: f64,
    pub std_bca: f64,
    pub seed: u64,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report types serialize");
    write_text(path, &(text + "\n"))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_labels(labels: &[u32], path: &Path) -> Result<(), CliError> {
    let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
    write_text(path, &text)
}

pub fn labels_path(report: &Path, explicit: Option<&PathBuf>) -> PathBuf {
    explicit.cloned().unwrap_or_else(|| report.with_extension("labels.txt"))
}
