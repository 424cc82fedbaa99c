use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sle_lab::estimates::{read_records_csv, write_records_csv, EstimateRecord};
use sle_lab::field::GridFunction;
use sle_lab::solver::InstanceSpec;
use sle_lab::spectral::{run_campaign, CampaignConfig};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline::{self, Solved, SolveSummary};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Files produced by a command, written only after it has finished.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, rel: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((rel.into(), bytes));
    }

    pub fn add_json(&mut self, rel: impl Into<PathBuf>, v: &impl Serialize) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(v)?;
        bytes.push(b'\n');
        self.add(rel, bytes);
        Ok(())
    }

    pub fn add_records(&mut self, rel: impl Into<PathBuf>, records: &[EstimateRecord]) -> CliResult<()> {
        let mut bytes = Vec::new();
        write_records_csv(&mut bytes, records, true)?;
        self.add(rel, bytes);
        Ok(())
    }

    pub fn write(&self, root: &Path) -> CliResult<Vec<PathBuf>> {
        let mut written = Vec::new();
        for (rel, bytes) in &self.files {
            let path = root.join(rel);
            let io = |source| CliError::Output { path: path.display().to_string(), source };
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(io)?;
            }
            std::fs::write(&path, bytes).map_err(io)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Exit status plus the files to write.
#[derive(Debug)]
pub struct CommandOutput {
    pub passed: bool,
    pub artifacts: Artifacts,
    pub message: String,
}

fn header(cfg: &RunConfig, command: &str) -> Value {
    json!({ "artifact_version": VERSION, "command": command, "config_hash": cfg.hash(), "config": cfg })
}

pub fn spectral_fuzz(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let mut cc = CampaignConfig::new(cfg.constraint()?, cfg.fuzz.samples, cfg.fuzz.seed);
    cc.bounds = cfg.fuzz.bounds.clone();
    let summary = run_campaign(&cc)?;
    let passed = summary.passed();
    let mut artifacts = Artifacts::default();
    artifacts.add_json("spectral-fuzz/summary.json", &json!({ "header": header(cfg, "spectral-fuzz"), "passed": passed, "summary": summary }))?;
    let message = format!(
        "{}: {} samples, {} attempts, {} violations, {} on the lambda_2 < 0 branch",
        summary.constraint.label(),
        summary.samples,
        summary.attempts,
        summary.violations,
        summary.negative_branch
    );
    Ok(CommandOutput { passed, artifacts, message })
}

/// The single instance described by the `problem` section.
pub fn problem_instance(cfg: &RunConfig) -> CliResult<InstanceSpec> {
    let n = cfg.problem.dimension;
    let spectrum = match (&cfg.problem.spectrum, cfg.problem.theta) {
        (Some(s), None) => s.clone(),
        (None, Some(theta)) => vec![(theta / n as f64).tan(); n],
        _ => return Err(CliError::Config("solve needs problem.spectrum or problem.theta".into())),
    };
    let mut spec = InstanceSpec::diagonal("solve", cfg.constraint()?, &spectrum)?;
    spec.amplitude = cfg.problem.amplitude;
    Ok(spec)
}

pub fn solve(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let spec = problem_instance(cfg)?;
    let grid = pipeline::grid_of(cfg)?;
    spec.problem(&grid)?.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let s = pipeline::solve_one(&spec, &grid, &cfg.tolerances)?;
    let error_vs_exact = match spec.exact_solution(&grid) {
        Some(exact) => Some(s.u.max_abs_diff(&exact)?),
        None => None,
    };
    let mut bin = Vec::new();
    s.u.write_binary(&mut bin)?;
    let mut artifacts = Artifacts::default();
    artifacts.add("solve/solution.bin", bin);
    artifacts.add_json(
        "solve/summary.json",
        &json!({ "header": header(cfg, "solve"), "instance": spec, "outcome": s.summary, "error_vs_exact": error_vs_exact }),
    )?;
    let message = format!(
        "{}: converged={} iterations={} residual={:.3e}",
        spec.id, s.summary.converged, s.summary.iterations, s.summary.residual_norm
    );
    Ok(CommandOutput { passed: s.summary.converged, artifacts, message })
}

/// Entry of `solutions/manifest.json` written by `sweep`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub instance: InstanceSpec,
    pub outcome: SolveSummary,
}

fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

fn sweep_records(solved: &[Solved], cfg: &RunConfig) -> CliResult<Vec<EstimateRecord>> {
    use crate::config::Check;
    let mut out = Vec::new();
    pipeline::run_checks(solved, cfg, &[Check::Gradient, Check::Doubling, Check::Hessian, Check::Appendix], &mut out)?;
    Ok(out)
}

pub fn sweep(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let solved = pipeline::solve_family(cfg)?;
    let records = sweep_records(&solved, cfg)?;
    let mut artifacts = Artifacts::default();
    let mut manifest = Vec::new();
    for s in &solved {
        let file = format!("{}.bin", file_stem(&s.spec.id));
        let mut bin = Vec::new();
        s.u.write_binary(&mut bin)?;
        artifacts.add(format!("sweep/solutions/{file}"), bin);
        manifest.push(ManifestEntry { file, instance: s.spec.clone(), outcome: s.summary.clone() });
    }
    artifacts.add_json("sweep/solutions/manifest.json", &manifest)?;
    artifacts.add_records("sweep/estimates.csv", &records)?;
    let converged = solved.iter().all(|s| s.summary.converged);
    let summaries: Vec<&SolveSummary> = solved.iter().map(|s| &s.summary).collect();
    artifacts.add_json("sweep/summary.json", &json!({ "header": header(cfg, "sweep"), "converged": converged, "instances": summaries }))?;
    let message = format!("{} instances solved, all converged: {converged}, {} records", solved.len(), records.len());
    Ok(CommandOutput { passed: converged, artifacts, message })
}

pub fn load_solutions(dir: &Path) -> CliResult<Vec<Solved>> {
    let read = |p: PathBuf| std::fs::read(&p).map_err(|source| CliError::ConfigIo { path: p.display().to_string(), source });
    let manifest: Vec<ManifestEntry> = serde_json::from_slice(&read(dir.join("manifest.json"))?)
        .map_err(|e| CliError::Config(format!("{}: {e}", dir.join("manifest.json").display())))?;
    manifest
        .into_iter()
        .map(|m| {
            let u = GridFunction::read_binary(&read(dir.join(&m.file))?[..])?;
            Ok(Solved { spec: m.instance, u, summary: m.outcome })
        })
        .collect()
}

pub fn verify(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let solved = match &cfg.verify.solutions {
        Some(dir) => load_solutions(dir)?,
        None => pipeline::solve_family(cfg)?,
    };
    let mut records = Vec::new();
    let checks = pipeline::run_checks(&solved, cfg, &cfg.verify.checks, &mut records)?;
    let converged = solved.iter().all(|s| s.summary.converged);
    let passed = converged && checks.values().all(|c| c.passed);
    let summaries: Vec<&SolveSummary> = solved.iter().map(|s| &s.summary).collect();
    let mut artifacts = Artifacts::default();
    artifacts.add_json(
        "verify/report.json",
        &json!({ "header": header(cfg, "verify"), "passed": passed, "converged": converged, "instances": summaries, "checks": checks }),
    )?;
    artifacts.add_records("verify/estimates.csv", &records)?;
    let status: Vec<String> = checks.iter().map(|(k, v)| format!("{k}={}", if v.passed { "pass" } else { "FAIL" })).collect();
    Ok(CommandOutput { passed, artifacts, message: status.join(" ") })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantitySummary {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// Per-quantity statistics of an estimate stream.
pub fn summarize(records: &[EstimateRecord]) -> BTreeMap<String, QuantitySummary> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        groups.entry(r.quantity.clone()).or_default().push(r.value);
    }
    groups
        .into_iter()
        .map(|(k, v)| {
            let s = QuantitySummary {
                count: v.len(),
                min: v.iter().copied().fold(f64::INFINITY, f64::min),
                max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean: v.iter().sum::<f64>() / v.len() as f64,
            };
            (k, s)
        })
        .collect()
}

pub fn report(cfg: &RunConfig, input: &Path) -> CliResult<CommandOutput> {
    let file = std::fs::File::open(input).map_err(|source| CliError::ConfigIo { path: input.display().to_string(), source })?;
    let records = read_records_csv(std::io::BufReader::new(file)).map_err(|e| CliError::Config(format!("{}: {e}", input.display())))?;
    let summary = summarize(&records);
    let mut message = format!("{:<32} {:>6} {:>12} {:>12} {:>12}", "quantity", "count", "min", "max", "mean");
    for (k, s) in &summary {
        message.push_str(&format!("\n{k:<32} {:>6} {:>12.4e} {:>12.4e} {:>12.4e}", s.count, s.min, s.max, s.mean));
    }
    let mut artifacts = Artifacts::default();
    artifacts.add_json(
        "report/summary.json",
        &json!({ "header": header(cfg, "report"), "input": input.display().to_string(), "records": records.len(), "quantities": summary }),
    )?;
    Ok(CommandOutput { passed: true, artifacts, message })
}
