use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;

use mekt_core::classify::bca;
use mekt_core::io::{read_container, read_manifest, synth_domains, write_container, write_manifest, DatasetManifest, SubjectEntry, SynthConfig};
use mekt_core::pipeline::{bench, dte_then_run, dte_scores, report_csv, run_method, Method, MethodOutput, PipelineConfig};
use mekt_core::{DomainTrials, Error};

use crate::args::{BenchArgs, DteArgs, RunArgs, SynthArgs};
use crate::report::{digest, labels_path, write_json, write_labels, write_text, BenchManifest, ConfigEcho, InputDigest, RunManifest, TaskResult, TOOLKIT_VERSION};
use crate::CliError;

pub const DATASET_MANIFEST: &str = "manifest.json";

pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let cfg = SynthConfig {
        seed: args.seed,
        channels: args.channels,
        samples: args.samples,
        trials_per_class: args.trials,
        classes: args.classes,
        class_rotation_deg: args.class_rot,
        domain_rotation_deg: args.domain_rot,
        noise_scale: args.noise,
        domains: args.domains,
    };
    cfg.validate()?;
    let domains = synth_domains(&cfg)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    let mut subjects = Vec::new();
    for d in &domains {
        let file = format!("{}.eegb", d.subject_id());
        write_container(d, args.out_dir.join(&file)).map_err(|e| CliError::at(&args.out_dir.join(&file), e))?;
        let (channels, samples) = d.shape().unwrap_or((0, 0));
        subjects.push(SubjectEntry { id: d.subject_id().to_string(), file, n_trials: d.len(), channels, samples, labeled: true });
    }
    let manifest = DatasetManifest {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        subjects,
        provenance: "synthetic rotated-domain generator".to_string(),
        synth: Some(cfg),
        decisions: BTreeMap::new(),
    };
    let path = args.out_dir.join(DATASET_MANIFEST);
    write_manifest(&manifest, &path).map_err(|e| CliError::at(&path, e))?;
    println!("wrote {} domains to {}", domains.len(), args.out_dir.display());
    Ok(())
}

fn load(path: &Path) -> Result<DomainTrials<f64>, CliError> {
    read_container(path).map_err(|e| CliError::at(path, e))
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<DomainTrials<f64>>, CliError> {
    let domains = paths.iter().map(|p| load(p)).collect::<Result<Vec<_>, _>>()?;
    let mut seen = std::collections::HashSet::new();
    for d in &domains {
        if !seen.insert(d.subject_id()) {
            return Err(CliError::Usage(format!("duplicate subject id `{}` among inputs", d.subject_id())));
        }
    }
    Ok(domains)
}

fn digests<'a>(paths: impl IntoIterator<Item = &'a PathBuf>) -> Result<Vec<InputDigest>, CliError> {
    paths.into_iter().map(|p| digest(p)).collect()
}

/// Seed recorded in a dataset manifest next to `path`, if there is one.
fn dataset_seed(path: &Path) -> Option<u64> {
    let dir = path.parent()?;
    read_manifest(dir.join(DATASET_MANIFEST)).ok()?.synth.map(|s| s.seed)
}

fn task_result(method: Method, sources: Vec<String>, target: &DomainTrials<f64>, out: MethodOutput, runtime_ms: f64) -> Result<TaskResult, CliError> {
    let score = target.labels().map(|truth| bca(truth, &out.predicted)).transpose()?;
    Ok(TaskResult {
        sources,
        target: target.subject_id().to_string(),
        method: method.name().to_string(),
        bca: score,
        runtime_ms,
        iterations: out.iterations,
        diagnostics: out.diagnostics,
    })
}

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let cfg = args.pipeline.config()?;
    let sources = load_all(&args.source)?;
    let target = load(&args.target)?;
    let refs: Vec<&DomainTrials<f64>> = sources.iter().collect();
    let start = Instant::now();
    let out = run_method(args.method, &refs, &target.without_labels(), &cfg)?;
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    let labels = out.predicted.clone();
    let ids = sources.iter().map(|s| s.subject_id().to_string()).collect();
    let result = task_result(args.method, ids, &target, out, runtime_ms)?;
    report_run(&result);
    let manifest = RunManifest {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        command: "run".to_string(),
        config: ConfigEcho::from(&cfg),
        inputs: digests(args.source.iter().chain([&args.target]))?,
        ranking: None,
        selected: None,
        results: vec![result],
        seed: dataset_seed(&args.target),
    };
    write_json(&manifest, &args.report)?;
    write_labels(&labels, &labels_path(&args.report, args.labels_out.as_ref()))
}

fn report_run(r: &TaskResult) {
    match r.bca {
        Some(b) => println!("{} -> {}: BCA {b:.4} ({:.1} ms)", r.sources.join(","), r.target, r.runtime_ms),
        None => println!("{} -> {}: target unlabeled ({:.1} ms)", r.sources.join(","), r.target, r.runtime_ms),
    }
}

pub fn cmd_dte(args: &DteArgs) -> Result<(), CliError> {
    let mut cfg: PipelineConfig = args.pipeline.config()?;
    cfg.dte_norm = args.norm;
    let sources = load_all(&args.source)?;
    let target = load(&args.target)?;
    if let Some(top) = args.top {
        if top == 0 || top > sources.len() {
            return Err(CliError::Usage(format!("--top must be in 1..={}, got {top}", sources.len())));
        }
    }
    let refs: Vec<&DomainTrials<f64>> = sources.iter().collect();
    let blind = target.without_labels();

    let (ranking, selected, results, labels) = if args.then_run {
        let start = Instant::now();
        let run = dte_then_run(args.method, &refs, &blind, args.top, &cfg)?;
        let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
        let labels = run.output.predicted.clone();
        let result = task_result(args.method, run.selected.clone(), &target, run.output, runtime_ms)?;
        (run.scores, run.selected, vec![result], Some(labels))
    } else {
        let scores = dte_scores(&refs, &blind, &cfg)?;
        let z = args.top.unwrap_or_else(|| mekt_core::dte::default_selection_size(refs.len()));
        let selected = mekt_core::dte::select_sources(&scores, z)?;
        (scores, selected, Vec::new(), None)
    };

    let mut ordered = ranking.clone();
    ordered.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.source_id.cmp(&b.source_id)));
    println!("rank  source        score        dis          dif");
    for (i, s) in ordered.iter().enumerate() {
        let mark = if selected.contains(&s.source_id) { "*" } else { " " };
        println!("{:>4}{mark} {:<12} {:>12.5e} {:>12.5e} {:>12.5e}", i + 1, s.source_id, s.score, s.dis, s.dif);
    }
    println!("selected: {}", selected.join(","));
    results.iter().for_each(report_run);

    if let Some(report) = &args.report {
        let manifest = RunManifest {
            toolkit_version: TOOLKIT_VERSION.to_string(),
            command: if args.then_run { "dte --then-run" } else { "dte" }.to_string(),
            config: ConfigEcho::from(&cfg),
            inputs: digests(args.source.iter().chain([&args.target]))?,
            ranking: Some(ordered),
            selected: Some(selected),
            results,
            seed: dataset_seed(&args.target),
        };
        write_json(&manifest, report)?;
    }
    if let Some(labels) = labels {
        let path = match (&args.report, &args.labels_out) {
            (_, Some(p)) => Some(p.clone()),
            (Some(r), None) => Some(labels_path(r, None)),
            (None, None) => None,
        };
        if let Some(path) = path {
            write_labels(&labels, &path)?;
        }
    }
    Ok(())
}

/// Subject files of a dataset directory: the manifest order when a manifest
/// exists, otherwise every `.eegb` file sorted by name.
pub fn dataset_files(dir: &Path) -> Result<(Vec<PathBuf>, Option<DatasetManifest>), CliError> {
    let manifest_path = dir.join(DATASET_MANIFEST);
    if manifest_path.exists() {
        let manifest = read_manifest(&manifest_path).map_err(|e| CliError::at(&manifest_path, e))?;
        let files = manifest.subjects.iter().map(|s| dir.join(&s.file)).collect();
        return Ok((files, Some(manifest)));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "eegb"))
        .collect();
    files.sort();
    Ok((files, None))
}

pub fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let cfg = args.pipeline.config()?;
    let (files, manifest) = dataset_files(&args.dataset_dir)?;
    if files.is_empty() {
        return Err(CliError::Usage(format!("no .eegb files in {}", args.dataset_dir.display())));
    }
    let domains = load_all(&files)?;
    if let Some(d) = domains.iter().find(|d| d.labels().is_none()) {
        return Err(CliError::Usage(format!("`{}` has no labels; benchmarking requires ground truth", d.subject_id())));
    }
    let seed = manifest.and_then(|m| m.synth).map_or(0, |s| s.seed);
    info!("{} domains, protocol {:?}, method {}", domains.len(), args.protocol, args.method);
    let report = bench(&domains, args.protocol, args.method, &cfg, seed)?;
    write_text(&args.report.with_extension("csv"), &report_csv(&report))?;
    let json = BenchManifest {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        protocol: report.protocol,
        method: report.method.name().to_string(),
        config: ConfigEcho::from(&cfg),
        inputs: digests(&files)?,
        rows: report.rows,
        mean_bca: report.mean_bca,
        std_bca: report.std_bca,
        seed,
    };
    write_json(&json, &args.report.with_extension("json"))?;
    println!("{} {:?}: {} tasks, BCA {:.4} ± {:.4}", args.method, args.protocol, json.rows.len(), json.mean_bca, json.std_bca);
    Ok(())
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}
