//! `seed`, `evolve` and `bench`. Every file written here carries a schema
//! version: a field in JSON documents and JSON lines, a leading `#` line in
//! CSV files and an attribute on the SVG root.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use nodegen_core::bench::{run_bench, BenchConfig, BenchReport, Contender};
use nodegen_core::criteria::CriterionSpec;
use nodegen_core::evolution::{
    export_performance_space, run_evolution, seed_population, CriterionRecord, DesignRecord, EvolutionError,
    EvolutionState, EvolutionStats, RunOutcome, DATASET_SCHEMA_VERSION, MANIFEST_SCHEMA_VERSION,
};
use nodegen_core::geometry::{build_layout, layouts_to_svg, ConnectionMap, ParameterRanges};
use nodegen_core::seeds;
use nodegen_core::simulator::{BudgetLedger, Evaluator, S11Curve};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const SVG_SCHEMA_VERSION: u32 = 1;
const GALLERY_COLUMNS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorInfo {
    pub name: String,
    pub digest: String,
}

/// Seeds actually used by one evolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSeeds {
    pub evolution: usize,
    pub split: u64,
    pub discriminator: u64,
    pub generator: u64,
    pub sampling: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedInfo {
    pub master: u64,
    pub rule: String,
    pub seed_population: u64,
    pub evolutions: Vec<EvolutionSeeds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetInfo {
    pub limit: u64,
    pub used: u64,
    /// Designs taken from an earlier dataset instead of being evaluated.
    pub reused_records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestDesign {
    pub id: usize,
    pub evolution: usize,
    pub params: Vec<f64>,
    pub metrics: Vec<f64>,
    pub score: f64,
    pub goal_met: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub config: RunConfig,
    pub evaluator: EvaluatorInfo,
    pub seeds: SeedInfo,
    pub outcome: Option<RunOutcome>,
    /// Digest of the records, criteria and stats; equal for replayed runs.
    pub run_digest: Option<String>,
    pub budget: BudgetInfo,
    pub records: usize,
    pub initial_criterion: Option<CriterionSpec>,
    pub criterion_history: Vec<CriterionRecord>,
    pub stats: Vec<EvolutionStats>,
    pub goal_met_ids: Vec<usize>,
    pub best: Option<BestDesign>,
    /// Artifact name to file name, relative to the manifest.
    pub files: BTreeMap<String, String>,
}

/// Reads a manifest back as JSON after checking its schema version.
pub fn load_manifest(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path)?;
    let v: Value = serde_json::from_str(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    match v.get("schema_version").and_then(Value::as_u64) {
        Some(n) if n == MANIFEST_SCHEMA_VERSION as u64 => Ok(v),
        other => Err(anyhow!("{}: unsupported manifest schema_version {other:?}", path.display()).into()),
    }
}

/// Reads a JSON-lines dataset written by `seed` or `evolve`.
pub fn load_dataset(path: &Path) -> Result<Vec<DesignRecord>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("seed dataset {}: {e}", path.display())))?;
    let bad = |line: usize, msg: String| CliError::Config(format!("{}:{line}: {msg}", path.display()));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(line).map_err(|e| bad(i + 1, e.to_string()))?;
        match v.get("schema_version").and_then(Value::as_u64) {
            Some(n) if n == DATASET_SCHEMA_VERSION as u64 => {}
            other => return Err(bad(i + 1, format!("unsupported dataset schema_version {other:?}"))),
        }
        let rec: DesignRecord = serde_json::from_value(v).map_err(|e| bad(i + 1, e.to_string()))?;
        if rec.id != out.len() {
            return Err(bad(i + 1, format!("expected id {}, found {}", out.len(), rec.id)));
        }
        out.push(rec);
    }
    if out.is_empty() {
        return Err(CliError::Config(format!("seed dataset {} is empty", path.display())));
    }
    Ok(out)
}

fn csv_with_version(body: &str) -> String {
    format!("# schema_version={CSV_SCHEMA_VERSION}\n{body}")
}

fn gallery(records: &[&DesignRecord], conn: &ConnectionMap) -> Result<String, CliError> {
    let layouts = records
        .iter()
        .map(|r| build_layout(&r.params, conn))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| anyhow!("layout: {e}"))?;
    Ok(layouts_to_svg(&layouts, GALLERY_COLUMNS).replacen("<svg ", &format!("<svg data-schema-version=\"{SVG_SCHEMA_VERSION}\" "), 1))
}

fn write(dir: &Path, name: &str, body: &str, files: &mut BTreeMap<String, String>, key: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    files.insert(key.into(), name.into());
    Ok(())
}

fn seed_info(master: u64, evolutions: usize) -> SeedInfo {
    SeedInfo {
        master,
        rule: "first 8 bytes (little endian) of SHA-256(\"{master}:{component}:{index}\")".into(),
        seed_population: seeds::derive(master, "seed_population", 0),
        evolutions: (1..=evolutions)
            .map(|k| {
                let d = |c: &str| seeds::derive(master, c, k as u64);
                EvolutionSeeds {
                    evolution: k,
                    split: d("split"),
                    discriminator: d("discriminator"),
                    generator: d("generator"),
                    sampling: d("sampling"),
                }
            })
            .collect(),
    }
}

fn best_of(state: &EvolutionState) -> Option<BestDesign> {
    state.best().map(|r| BestDesign {
        id: r.id,
        evolution: r.evolution,
        params: r.params.0.to_vec(),
        metrics: r.metrics.0.clone(),
        score: r.score,
        goal_met: r.goal_met,
    })
}

fn manifest(cfg: &RunConfig, command: &str, ev: &dyn Evaluator, ledger: &BudgetLedger, reused: usize, state: Option<&EvolutionState>) -> Manifest {
    Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        command: command.into(),
        config: cfg.clone(),
        evaluator: EvaluatorInfo {
            name: ev.name().into(),
            digest: ev.digest(),
        },
        seeds: seed_info(cfg.seed, state.map_or(0, |s| s.history.len())),
        outcome: state.and_then(|s| s.outcome),
        run_digest: state.map(EvolutionState::digest),
        budget: BudgetInfo {
            limit: ledger.limit(),
            used: ledger.used(),
            reused_records: reused,
        },
        records: state.map_or(0, |s| s.records.len()),
        initial_criterion: state.map(|s| s.initial_criterion.clone()),
        criterion_history: state.map(|s| s.history.clone()).unwrap_or_default(),
        stats: state.map(|s| s.stats.clone()).unwrap_or_default(),
        goal_met_ids: state.map(|s| s.records.iter().filter(|r| r.goal_met).map(|r| r.id).collect()).unwrap_or_default(),
        best: state.and_then(best_of),
        files: BTreeMap::new(),
    }
}

fn write_manifest(dir: &Path, m: &mut Manifest) -> Result<(), CliError> {
    m.files.insert("manifest".into(), MANIFEST_FILE.into());
    let text = serde_json::to_string_pretty(m).map_err(|e| anyhow!("manifest: {e}"))?;
    fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
    Ok(())
}

fn run_err(e: EvolutionError) -> CliError {
    match e {
        EvolutionError::Config(m) => CliError::Config(m),
        other => CliError::Run(other.into()),
    }
}

/// Draws and evaluates the seed population. Writes `seed_dataset.jsonl`,
/// `seed_gallery.svg` and `seed_manifest.json`.
pub fn cmd_seed(cfg: &RunConfig) -> Result<Option<RunOutcome>, CliError> {
    cfg.prepare_out()?;
    let ev = cfg.evaluator()?;
    let (ranges, conn) = (ParameterRanges::default(), ConnectionMap::default());
    let ledger = BudgetLedger::new(cfg.evolution.budget);
    let mut files = BTreeMap::new();
    let state = match seed_population(&cfg.evolution, &cfg.goal, &ranges, &conn, ev.as_ref(), &ledger) {
        Ok(s) => Some(s),
        Err(EvolutionError::BudgetExhausted { .. }) => None,
        Err(e) => return Err(run_err(e)),
    };
    if let Some(s) = &state {
        write(&cfg.out, "seed_dataset.jsonl", &s.dataset_jsonl().map_err(run_err)?, &mut files, "dataset")?;
        let all: Vec<&DesignRecord> = s.records.iter().collect();
        write(&cfg.out, "seed_gallery.svg", &gallery(&all, &conn)?, &mut files, "gallery")?;
    }
    let mut m = manifest(cfg, "seed", ev.as_ref(), &ledger, 0, state.as_ref());
    m.outcome = if state.is_some() { None } else { Some(RunOutcome::BudgetExhausted) };
    m.files = files;
    m.files.insert("manifest".into(), "seed_manifest.json".into());
    let text = serde_json::to_string_pretty(&m).map_err(|e| anyhow!("manifest: {e}"))?;
    fs::write(cfg.out.join("seed_manifest.json"), text + "\n")?;
    Ok(m.outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveSummary {
    pub outcome: RunOutcome,
    pub evaluations: u64,
    pub evolutions: usize,
    pub goal_met: usize,
    pub best_score: Option<f64>,
    pub run_digest: Option<String>,
}

/// Full optimization run. Writes the manifest, the dataset, model dumps
/// and the performance-space CSVs into the output directory.
pub fn cmd_evolve(cfg: &RunConfig) -> Result<EvolveSummary, CliError> {
    cfg.prepare_out()?;
    let ev = cfg.evaluator()?;
    let (ranges, conn) = (ParameterRanges::default(), ConnectionMap::default());
    let ledger = BudgetLedger::new(cfg.evolution.budget);
    let mut files = BTreeMap::new();

    let (seeded, reused) = match &cfg.seed_dataset {
        Some(path) => {
            let records = load_dataset(path)?;
            let n = records.len();
            let carrier = EvolutionState {
                goal: cfg.goal.clone(),
                records,
                initial_criterion: cfg.goal.as_criterion(),
                history: Vec::new(),
                stats: Vec::new(),
                evaluations: 0,
                outcome: None,
            };
            let grid = ev.sweep().grid();
            let state = carrier
                .with_goal(cfg.goal.clone(), &cfg.evolution, &grid)
                .map_err(|e| CliError::Config(format!("seed dataset {}: {e}", path.display())))?;
            (Ok(state), n)
        }
        None => (seed_population(&cfg.evolution, &cfg.goal, &ranges, &conn, ev.as_ref(), &ledger), 0),
    };
    let mut state = match seeded {
        Ok(s) => s,
        Err(EvolutionError::BudgetExhausted { .. }) => {
            let mut m = manifest(cfg, "evolve", ev.as_ref(), &ledger, reused, None);
            m.outcome = Some(RunOutcome::BudgetExhausted);
            write(&cfg.out, "dataset.jsonl", "", &mut m.files, "dataset")?;
            write_manifest(&cfg.out, &mut m)?;
            return Ok(EvolveSummary {
                outcome: RunOutcome::BudgetExhausted,
                evaluations: ledger.used(),
                evolutions: 0,
                goal_met: 0,
                best_score: None,
                run_digest: None,
            });
        }
        Err(e) => return Err(run_err(e)),
    };

    let models = run_evolution(&mut state, &cfg.evolution, &ranges, &conn, ev.as_ref(), &ledger).map_err(run_err)?;
    let outcome = state.outcome.ok_or_else(|| anyhow!("evolution loop ended without an outcome"))?;

    write(&cfg.out, "dataset.jsonl", &state.dataset_jsonl().map_err(run_err)?, &mut files, "dataset")?;
    if let Some(m) = &models {
        let json = |r: Result<String, String>| r.map_err(|e| CliError::Run(anyhow!(e)));
        write(&cfg.out, "discriminator.json", &json(m.discriminator.model.to_json().map_err(|e| e.to_string()))?, &mut files, "discriminator")?;
        write(&cfg.out, "generator.json", &json(m.generator.model.to_json().map_err(|e| e.to_string()))?, &mut files, "generator")?;
        write(&cfg.out, "svc.json", &json(m.svc.to_json().map_err(|e| e.to_string()))?, &mut files, "svc")?;
    }
    let space = export_performance_space(&state).map_err(run_err)?;
    write(&cfg.out, "performance.csv", &csv_with_version(&space.rows_csv()), &mut files, "performance_space")?;
    write(&cfg.out, "evolution_curves.csv", &csv_with_version(&space.curves_csv()), &mut files, "evolution_curves")?;
    if let Some(best) = state.best() {
        let curve = S11Curve::new(ev.sweep().grid(), best.s11.clone()).map_err(|e| anyhow!("best curve: {e}"))?;
        write(&cfg.out, "best_s11.csv", &csv_with_version(&curve.to_csv()), &mut files, "best_s11")?;
    }
    let met: Vec<&DesignRecord> = state.records.iter().filter(|r| r.goal_met).collect();
    if !met.is_empty() {
        write(&cfg.out, "goal_gallery.svg", &gallery(&met, &conn)?, &mut files, "goal_gallery")?;
    }

    let mut m = manifest(cfg, "evolve", ev.as_ref(), &ledger, reused, Some(&state));
    m.files = files;
    write_manifest(&cfg.out, &mut m)?;
    Ok(EvolveSummary {
        outcome,
        evaluations: ledger.used(),
        evolutions: state.history.len(),
        goal_met: met.len(),
        best_score: state.best().map(|r| r.score),
        run_digest: m.run_digest,
    })
}

/// Proposed method plus the configured baselines on the configured seeds,
/// each with its own ledger of `evolution.budget` calls. Writes `bench.csv`.
pub fn cmd_bench(cfg: &RunConfig) -> Result<BenchReport, CliError> {
    cfg.prepare_out()?;
    let ev = cfg.evaluator()?;
    let (ranges, conn) = (ParameterRanges::default(), ConnectionMap::default());
    let mut bench = BenchConfig::for_goal(cfg.goal.clone(), cfg.evolution.budget, cfg.bench_seeds.clone());
    bench.evolution = cfg.evolution.clone();
    bench.contenders = std::iter::once(Contender::Proposed)
        .chain(cfg.baselines.iter().copied().map(Contender::Baseline))
        .collect();
    let report = run_bench(&bench, &ranges, &conn, ev.as_ref()).map_err(|e| CliError::Run(e.into()))?;
    fs::write(cfg.out.join("bench.csv"), report.to_csv())?;
    Ok(report)
}
