//! End-to-end transfer tasks: feature extraction per domain, the MEKT run
//! and the baseline methods, source ranking, and STS/MTS benchmarks.

use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::alignment::{center_align, center_align_covariances, domain_covariances, euclidean_align, riemannian_align};
use crate::classify::{bca, csp_feature_matrix, csp_fit, lda_fit, lda_predict, mdm_fit, mdm_predict, Classifier, LdaClassifier, Shrinkage};
use crate::dte::{default_selection_size, rank_sources, select_sources, ScatterNorm, TransferabilityScore};
use crate::features::{anova_f_select, erp_augment_with_template, erp_block_features, pooled_erp_template, select_rows, tangent_map};
use crate::mekt::{mekt_fit, mekt_fit_kernel, IterationDiagnostics, Kernel};
use crate::{ClassId, DomainTrials, Error, FeatureMatrix, FeatureMode, MeanKind, MeanSolverConfig, MektConfig, Result, SpdMatrix};

/// CSP filters per class in the EA and unaligned CSP baselines.
pub const CSP_FILTERS_PER_CLASS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// CA, tangent features, MEKT, LDA.
    Mekt,
    /// CA, tangent features, LDA.
    Ca,
    /// Euclidean alignment, CSP, LDA.
    Ea,
    /// Riemannian alignment, minimum distance to mean.
    RaMdm,
    /// Unaligned CSP, LDA.
    CspLda,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Mekt, Method::Ca, Method::Ea, Method::RaMdm, Method::CspLda];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mekt => "mekt",
            Method::Ca => "ca",
            Method::Ea => "ea",
            Method::RaMdm => "ra-mdm",
            Method::CspLda => "csp-lda",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mean_kind: MeanKind,
    pub mean_solver: MeanSolverConfig<f64>,
    pub mekt: MektConfig<f64>,
    pub kernel: Option<Kernel>,
    pub mode: FeatureMode,
    /// Keep this many features by ANOVA F on the source before MEKT.
    pub select_k: Option<usize>,
    pub dte_norm: ScatterNorm,
    /// Used by every LDA in the pipeline, including the one inside MEKT.
    pub shrinkage: Shrinkage,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mean_kind: MeanKind::Riemannian,
            mean_solver: MeanSolverConfig::default(),
            mekt: MektConfig::default(),
            kernel: None,
            mode: FeatureMode::TangentUpper,
            select_k: None,
            dte_norm: ScatterNorm::Entrywise,
            shrinkage: Shrinkage::Auto,
        }
    }
}

fn check_shapes(sources: &[&DomainTrials<f64>], target: &DomainTrials<f64>) -> Result<()> {
    if sources.is_empty() {
        return Err(Error::EmptyInput);
    }
    let shape = target.shape().ok_or(Error::EmptyInput)?;
    for s in sources {
        if s.shape() != Some(shape) {
            return Err(Error::dim(format!("domain `{}` has shape {:?}, target {shape:?}", s.subject_id(), s.shape())));
        }
        if s.labels().is_none() {
            return Err(Error::LabelsRequired);
        }
    }
    Ok(())
}

/// Per-domain alignment and feature extraction, sources concatenated.
/// The target is stripped of labels before anything touches it.
pub fn extract_features(
    sources: &[&DomainTrials<f64>],
    target: &DomainTrials<f64>,
    mode: FeatureMode,
    kind: MeanKind,
    solver: &MeanSolverConfig<f64>,
) -> Result<(FeatureMatrix<f64>, FeatureMatrix<f64>)> {
    check_shapes(sources, target)?;
    let target = target.without_labels();
    match mode {
        FeatureMode::TangentUpper => {
            let covs = sources.iter().map(|d| domain_covariances(d)).collect::<Result<Vec<_>>>()?;
            let prepared: Vec<_> = sources.iter().zip(covs).map(|(d, c)| (*d, c)).collect();
            tangent_features(&prepared, (&target, domain_covariances(&target)?), kind, solver)
        }
        FeatureMode::ErpBlock(class) => {
            let template = pooled_erp_template(sources, class as ClassId)?;
            let features = |d: &DomainTrials<f64>| -> Result<FeatureMatrix<f64>> {
                let augmented = erp_augment_with_template(d, &template)?;
                let (c, _) = d.shape().ok_or(Error::EmptyInput)?;
                erp_block_features(&center_align(&augmented, kind, solver)?, c)
            };
            let parts = sources.iter().map(|d| features(d)).collect::<Result<Vec<_>>>()?;
            Ok((concat_sources(parts, sources)?, features(&target)?))
        }
    }
}

type Prepared<'a> = (&'a DomainTrials<f64>, Vec<SpdMatrix<f64>>);

fn tangent_of(domain: &DomainTrials<f64>, covs: Vec<SpdMatrix<f64>>, kind: MeanKind, solver: &MeanSolverConfig<f64>) -> Result<FeatureMatrix<f64>> {
    tangent_map(&center_align_covariances(covs, domain.labels().map(<[_]>::to_vec), domain.subject_id(), kind, solver)?)
}

fn tangent_features(
    sources: &[Prepared<'_>],
    target: Prepared<'_>,
    kind: MeanKind,
    solver: &MeanSolverConfig<f64>,
) -> Result<(FeatureMatrix<f64>, FeatureMatrix<f64>)> {
    let parts = sources.iter().map(|(d, c)| tangent_of(d, c.clone(), kind, solver)).collect::<Result<Vec<_>>>()?;
    let domains: Vec<&DomainTrials<f64>> = sources.iter().map(|(d, _)| *d).collect();
    Ok((concat_sources(parts, &domains)?, tangent_of(target.0, target.1, kind, solver)?))
}

fn concat_sources(parts: Vec<FeatureMatrix<f64>>, sources: &[&DomainTrials<f64>]) -> Result<FeatureMatrix<f64>> {
    let ids: Vec<&str> = sources.iter().map(|d| d.subject_id()).collect();
    FeatureMatrix::concat(&parts, ids.join("+"))
}

/// Output of one method on one task.
#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub predicted: Vec<ClassId>,
    /// Refinement iterations run (0 for methods without a loop).
    pub iterations: usize,
    pub diagnostics: Vec<IterationDiagnostics>,
}

fn csp_lda(sources: &[DomainTrials<f64>], target: &DomainTrials<f64>, shrinkage: Shrinkage) -> Result<Vec<ClassId>> {
    let mut trials = Vec::new();
    let mut labels = Vec::new();
    for s in sources {
        trials.extend_from_slice(s.trials());
        labels.extend_from_slice(s.labels().ok_or(Error::LabelsRequired)?);
    }
    let (c, _) = target.shape().ok_or(Error::EmptyInput)?;
    let f = CSP_FILTERS_PER_CLASS.min(c / 2).max(1);
    let filter = csp_fit(&trials, &labels, f)?;
    let train = csp_feature_matrix(&filter, &trials, Some(labels.clone()), "source")?;
    let test = csp_feature_matrix(&filter, target.trials(), None, target.subject_id())?;
    let model = lda_fit(train.data(), &labels, shrinkage)?;
    lda_predict(&model, test.data())
}

fn fit_on_features(method: Method, mut xs: FeatureMatrix<f64>, mut xt: FeatureMatrix<f64>, cfg: &PipelineConfig) -> Result<MethodOutput> {
    let lda = LdaClassifier { shrinkage: cfg.shrinkage };
    if let Some(k) = cfg.select_k {
        let (selected, idx) = anova_f_select(&xs, k)?;
        xt = select_rows(&xt, &idx)?;
        xs = selected;
    }
    if method == Method::Ca {
        let predicted = lda.fit_predict(xs.data(), xs.require_labels()?, xt.data())?;
        return Ok(MethodOutput { predicted, iterations: 0, diagnostics: Vec::new() });
    }
    let fit = match cfg.kernel {
        None => mekt_fit(&xs, &xt, &cfg.mekt, &lda)?,
        Some(kernel) => mekt_fit_kernel(&xs, &xt, &cfg.mekt, kernel, &lda)?.fit,
    };
    Ok(MethodOutput { predicted: fit.predicted_labels, iterations: fit.diagnostics.len(), diagnostics: fit.diagnostics })
}

/// Runs `method` with the given sources on `target`. Target labels are never
/// passed to fitting code.
pub fn run_method(method: Method, sources: &[&DomainTrials<f64>], target: &DomainTrials<f64>, cfg: &PipelineConfig) -> Result<MethodOutput> {
    check_shapes(sources, target)?;
    let target = target.without_labels();
    let plain = |predicted| MethodOutput { predicted, iterations: 0, diagnostics: Vec::new() };
    match method {
        Method::Mekt | Method::Ca => {
            let (xs, xt) = extract_features(sources, &target, cfg.mode, cfg.mean_kind, &cfg.mean_solver)?;
            fit_on_features(method, xs, xt, cfg)
        }
        Method::Ea => {
            let aligned = sources.iter().map(|s| euclidean_align(s)).collect::<Result<Vec<_>>>()?;
            Ok(plain(csp_lda(&aligned, &euclidean_align(&target)?, cfg.shrinkage)?))
        }
        Method::CspLda => {
            let owned: Vec<DomainTrials<f64>> = sources.iter().map(|s| (*s).clone()).collect();
            Ok(plain(csp_lda(&owned, &target, cfg.shrinkage)?))
        }
        Method::RaMdm => {
            let align = |d: &DomainTrials<f64>| riemannian_align(d, &(0..d.len()).collect::<Vec<_>>(), &cfg.mean_solver);
            let mut covs = Vec::new();
            let mut labels = Vec::new();
            for s in sources {
                let a = align(s)?;
                labels.extend(a.labels.clone().ok_or(Error::LabelsRequired)?);
                covs.extend(a.covariances);
            }
            let model = mdm_fit(&covs, &labels, &cfg.mean_solver)?;
            Ok(plain(mdm_predict(&model, &align(&target)?.covariances)?))
        }
    }
}

/// Features used for source ranking: Euclidean-kind CA and tangent vectors
/// per domain.
pub fn dte_scores(sources: &[&DomainTrials<f64>], target: &DomainTrials<f64>, cfg: &PipelineConfig) -> Result<Vec<TransferabilityScore>> {
    check_shapes(sources, target)?;
    let target = target.without_labels();
    let prepared = sources.iter().map(|d| Ok((*d, domain_covariances(d)?))).collect::<Result<Vec<_>>>()?;
    let covs = domain_covariances(&target)?;
    scores_from_covariances(&prepared, (&target, covs), cfg)
}

fn scores_from_covariances(sources: &[Prepared<'_>], target: Prepared<'_>, cfg: &PipelineConfig) -> Result<Vec<TransferabilityScore>> {
    let xs = sources
        .iter()
        .map(|(d, c)| tangent_of(d, c.clone(), MeanKind::Euclidean, &cfg.mean_solver))
        .collect::<Result<Vec<_>>>()?;
    rank_sources(&xs, &tangent_of(target.0, target.1, MeanKind::Euclidean, &cfg.mean_solver)?, cfg.dte_norm)
}

/// Ranks the sources and keeps the best `top` (default `round((z − 1)/2)`),
/// returned in ranking order.
pub fn dte_select<'a>(
    sources: &[&'a DomainTrials<f64>],
    target: &DomainTrials<f64>,
    top: Option<usize>,
    cfg: &PipelineConfig,
) -> Result<(Vec<TransferabilityScore>, Vec<&'a DomainTrials<f64>>)> {
    let scores = dte_scores(sources, target, cfg)?;
    let chosen = pick(sources, &scores, top)?;
    Ok((scores, chosen))
}

fn pick<'a>(sources: &[&'a DomainTrials<f64>], scores: &[TransferabilityScore], top: Option<usize>) -> Result<Vec<&'a DomainTrials<f64>>> {
    let z_star = top.unwrap_or_else(|| default_selection_size(sources.len()));
    let ids = select_sources(scores, z_star)?;
    Ok(ids
        .iter()
        .map(|id| *sources.iter().find(|s| s.subject_id() == id).expect("ranked id comes from the sources"))
        .collect())
}

/// Ranking followed by a run on the selected sources.
#[derive(Debug, Clone)]
pub struct DteRun {
    pub scores: Vec<TransferabilityScore>,
    pub selected: Vec<String>,
    pub output: MethodOutput,
}

/// [`dte_select`] then [`run_method`] on the chosen sources. For the
/// tangent-feature methods the trial covariances are computed once and
/// shared by both steps.
pub fn dte_then_run(
    method: Method,
    sources: &[&DomainTrials<f64>],
    target: &DomainTrials<f64>,
    top: Option<usize>,
    cfg: &PipelineConfig,
) -> Result<DteRun> {
    check_shapes(sources, target)?;
    let target = target.without_labels();
    let prepared = sources.iter().map(|d| Ok((*d, domain_covariances(d)?))).collect::<Result<Vec<_>>>()?;
    let target_covs = domain_covariances(&target)?;
    let scores = scores_from_covariances(&prepared, (&target, target_covs.clone()), cfg)?;
    let chosen = pick(sources, &scores, top)?;
    let selected: Vec<String> = chosen.iter().map(|d| d.subject_id().to_string()).collect();
    let output = match (method, cfg.mode) {
        (Method::Mekt | Method::Ca, FeatureMode::TangentUpper) => {
            let kept: Vec<Prepared<'_>> = chosen
                .iter()
                .map(|d| prepared.iter().find(|(p, _)| p.subject_id() == d.subject_id()).expect("chosen from sources").clone())
                .collect();
            let (xs, xt) = tangent_features(&kept, (&target, target_covs), cfg.mean_kind, &cfg.mean_solver)?;
            fit_on_features(method, xs, xt, cfg)?
        }
        _ => run_method(method, &chosen, &target, cfg)?,
    };
    Ok(DteRun { scores, selected, output })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Every ordered (source, target) pair.
    Sts,
    /// Each domain as target with all others as sources.
    Mts,
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sts" => Ok(Protocol::Sts),
            "mts" => Ok(Protocol::Mts),
            other => Err(Error::Config(format!("unknown protocol {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub task_id: usize,
    pub sources: Vec<usize>,
    pub target: usize,
}

/// Target-major enumeration; sources in ascending index order.
pub fn enumerate_tasks(n_domains: usize, protocol: Protocol) -> Vec<Task> {
    let mut tasks = Vec::new();
    for target in 0..n_domains {
        let others: Vec<usize> = (0..n_domains).filter(|&i| i != target).collect();
        match protocol {
            Protocol::Sts => {
                for s in others {
                    tasks.push(Task { task_id: tasks.len() + 1, sources: vec![s], target });
                }
            }
            Protocol::Mts => {
                if !others.is_empty() {
                    tasks.push(Task { task_id: tasks.len() + 1, sources: others, target });
                }
            }
        }
    }
    tasks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRow {
    pub task_id: usize,
    pub sources: Vec<String>,
    pub target: String,
    pub method: String,
    pub bca: f64,
    pub runtime_ms: f64,
    pub iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub protocol: Protocol,
    pub method: Method,
    pub rows: Vec<TaskRow>,
    pub mean_bca: f64,
    /// Sample standard deviation; 0 for a single task.
    pub std_bca: f64,
}

/// Mean and sample standard deviation.
pub fn aggregate(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs one task and scores it against the target's labels.
pub fn run_task(
    method: Method,
    sources: &[&DomainTrials<f64>],
    target: &DomainTrials<f64>,
    cfg: &PipelineConfig,
) -> Result<(f64, MethodOutput, f64)> {
    let truth = target.labels().ok_or(Error::LabelsRequired)?.to_vec();
    let start = Instant::now();
    let out = run_method(method, sources, target, cfg)?;
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((bca(&truth, &out.predicted)?, out, runtime_ms))
}

/// Every task of the protocol, in enumeration order. All domains must be
/// labeled.
pub fn bench(domains: &[DomainTrials<f64>], protocol: Protocol, method: Method, cfg: &PipelineConfig, seed: u64) -> Result<BenchReport> {
    if domains.iter().any(|d| d.labels().is_none()) {
        return Err(Error::LabelsRequired);
    }
    if domains.len() < 2 {
        return Err(Error::InsufficientData(format!("{} domains; a benchmark needs at least 2", domains.len())));
    }
    let mut rows = Vec::new();
    for task in enumerate_tasks(domains.len(), protocol) {
        let sources: Vec<&DomainTrials<f64>> = task.sources.iter().map(|&i| &domains[i]).collect();
        let target = &domains[task.target];
        let (score, out, runtime_ms) = run_task(method, &sources, target, cfg)?;
        info!("task {} ({} -> {}): BCA {score:.4}", task.task_id, sources.len(), target.subject_id());
        rows.push(TaskRow {
            task_id: task.task_id,
            sources: sources.iter().map(|s| s.subject_id().to_string()).collect(),
            target: target.subject_id().to_string(),
            method: method.name().to_string(),
            bca: score,
            runtime_ms,
            iterations: out.iterations,
            seed,
        });
    }
    let (mean_bca, std_bca) = aggregate(&rows.iter().map(|r| r.bca).collect::<Vec<_>>());
    Ok(BenchReport { protocol, method, rows, mean_bca, std_bca })
}

pub const CSV_HEADER: &str = "task_id,sources,target,method,bca,runtime_ms,iterations,seed";

/// Per-task table; source ids joined with `;`.
pub fn report_csv(report: &BenchReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{:?},{:.3},{},{}\n",
            r.task_id,
            r.sources.join(";"),
            r.target,
            r.method,
            r.bca,
            r.runtime_ms,
            r.iterations,
            r.seed
        ));
    }
    out
}
