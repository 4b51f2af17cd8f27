//! Comparison harness: the generative optimizer and the classical
//! baselines on one goal, one budget and one seed list, reported as CSV.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{AntennaObjective, Method};
use crate::evolution::{run_evolution, seed_population, EvolutionConfig, EvolutionError};
use crate::geometry::{sample_valid, ConnectionMap, ParameterRanges};
use crate::goal::{GoalKind, GoalSpec};
use crate::seeds;
use crate::simulator::{BudgetLedger, Evaluator, SimError};

pub const BENCH_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("evolution: {0}")]
    Evolution(#[from] EvolutionError),
    #[error("simulator: {0}")]
    Sim(#[from] SimError),
    #[error("no valid start point in {0} draws")]
    StartSampling(usize),
    #[error("invalid bench config: {0}")]
    Config(String),
}

/// One contender in the comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contender {
    Proposed,
    #[serde(untagged)]
    Baseline(Method),
}

impl Contender {
    pub fn name(self) -> &'static str {
        match self {
            Contender::Proposed => "proposed",
            Contender::Baseline(m) => m.name(),
        }
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        if s == "proposed" {
            Ok(Contender::Proposed)
        } else {
            s.parse().map(Contender::Baseline)
        }
    }

    pub fn all() -> Vec<Contender> {
        std::iter::once(Contender::Proposed)
            .chain(Method::ALL.into_iter().map(Contender::Baseline))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub goal: GoalSpec,
    pub budget: u64,
    pub seeds: Vec<u64>,
    pub contenders: Vec<Contender>,
    /// Settings of the proposed method; its budget and seed are overridden
    /// per run.
    pub evolution: EvolutionConfig,
    /// Draws allowed when sampling a checker-passing start point.
    pub start_draws: usize,
}

impl BenchConfig {
    /// All contenders on `goal` with the matching desk profile.
    pub fn for_goal(goal: GoalSpec, budget: u64, seeds: Vec<u64>) -> Self {
        let evolution = if matches!(goal.kind, GoalKind::Band { .. }) {
            EvolutionConfig::example2_desk()
        } else {
            EvolutionConfig::example1_desk()
        };
        Self {
            goal,
            budget,
            seeds,
            contenders: Contender::all(),
            evolution,
            start_draws: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub goal: String,
    pub seed: u64,
    /// 1-based index of the first goal-meeting evaluation.
    pub evals_to_goal: Option<u64>,
    pub best_score: f64,
    pub evaluations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub evaluator: String,
    pub digest: String,
    pub budget: u64,
    pub rows: Vec<BenchRow>,
}

fn proposed(
    cfg: &BenchConfig,
    seed: u64,
    ranges: &ParameterRanges,
    conn: &ConnectionMap,
    evaluator: &dyn Evaluator,
) -> Result<BenchRow, BenchError> {
    let mut evo = cfg.evolution.clone();
    evo.master_seed = seed;
    evo.budget = cfg.budget;
    let mut goal = cfg.goal.clone();
    goal.required_valid = 1;
    let ledger = BudgetLedger::new(cfg.budget);
    let row = |evals_to_goal, best_score, evaluations| BenchRow {
        method: Contender::Proposed.name().into(),
        goal: goal.name.clone(),
        seed,
        evals_to_goal,
        best_score,
        evaluations,
    };
    let mut state = match seed_population(&evo, &goal, ranges, conn, evaluator, &ledger) {
        Ok(s) => s,
        Err(EvolutionError::BudgetExhausted { .. }) => return Ok(row(None, f64::INFINITY, ledger.used())),
        Err(e) => return Err(e.into()),
    };
    run_evolution(&mut state, &evo, ranges, conn, evaluator, &ledger)?;
    let first = state.records.iter().position(|r| r.goal_met).map(|i| i as u64 + 1);
    let best = state.records.iter().map(|r| r.score).fold(f64::INFINITY, f64::min);
    Ok(row(first, best, ledger.used()))
}

fn baseline(
    cfg: &BenchConfig,
    method: Method,
    seed: u64,
    ranges: &ParameterRanges,
    conn: &ConnectionMap,
    evaluator: &dyn Evaluator,
) -> Result<BenchRow, BenchError> {
    let mut rng = seeds::rng(seed, "bench_start", 0);
    let start = sample_valid(ranges, conn, &mut rng, cfg.start_draws).ok_or(BenchError::StartSampling(cfg.start_draws))?;
    let obj = AntennaObjective::new(evaluator, cfg.goal.clone(), ranges, conn.clone());
    let rec = method.run(&obj, start.as_slice(), cfg.budget, seed, true)?;
    Ok(BenchRow {
        method: method.name().into(),
        goal: cfg.goal.name.clone(),
        seed,
        evals_to_goal: rec.evals_to_goal,
        best_score: rec.best_value,
        evaluations: rec.evaluations,
    })
}

/// Runs every contender on every seed with its own ledger of `budget`
/// calls. Rows come out in (contender, seed) order.
pub fn run_bench(
    cfg: &BenchConfig,
    ranges: &ParameterRanges,
    conn: &ConnectionMap,
    evaluator: &dyn Evaluator,
) -> Result<BenchReport, BenchError> {
    if cfg.seeds.is_empty() || cfg.contenders.is_empty() {
        return Err(BenchError::Config("need at least one seed and one contender".into()));
    }
    let jobs: Vec<(Contender, u64)> = cfg
        .contenders
        .iter()
        .flat_map(|&c| cfg.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(c, seed)| match c {
            Contender::Proposed => proposed(cfg, seed, ranges, conn, evaluator),
            Contender::Baseline(m) => baseline(cfg, m, seed, ranges, conn, evaluator),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BenchReport {
        evaluator: evaluator.name().into(),
        digest: evaluator.digest(),
        budget: cfg.budget,
        rows,
    })
}

impl BenchReport {
    /// CSV with `#` header lines for the schema version, evaluator and
    /// budget. Runs without a goal-meeting design show `>budget`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# schema_version={BENCH_SCHEMA_VERSION}");
        let _ = writeln!(out, "# evaluator={} digest={}", self.evaluator, self.digest);
        let _ = writeln!(out, "# budget={}", self.budget);
        out.push_str("method,goal,seed,evals_to_goal,best_score,evaluations\n");
        for r in &self.rows {
            let evals = r.evals_to_goal.map_or_else(|| format!(">{}", self.budget), |n| n.to_string());
            let _ = writeln!(out, "{},{},{},{},{},{}", r.method, r.goal, r.seed, evals, r.best_score, r.evaluations);
        }
        out
    }

    /// Parses the output of [`to_csv`](Self::to_csv).
    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut version = None;
        let (mut evaluator, mut digest, mut budget) = (None, None, None);
        let mut rows = Vec::new();
        let mut header_seen = false;
        for line in text.lines() {
            if let Some(meta) = line.strip_prefix("# ") {
                for kv in meta.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("schema_version", v)) => version = v.parse::<u32>().ok(),
                        Some(("evaluator", v)) => evaluator = Some(v.to_string()),
                        Some(("digest", v)) => digest = Some(v.to_string()),
                        Some(("budget", v)) => budget = v.parse::<u64>().ok(),
                        _ => {}
                    }
                }
                continue;
            }
            if !header_seen {
                header_seen = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(format!("bad row {line:?}"));
            }
            let num = |s: &str| s.parse::<u64>().map_err(|e| format!("{s:?}: {e}"));
            rows.push(BenchRow {
                method: f[0].into(),
                goal: f[1].into(),
                seed: num(f[2])?,
                evals_to_goal: if f[3].starts_with('>') { None } else { Some(num(f[3])?) },
                best_score: f[4].parse().map_err(|e| format!("{:?}: {e}", f[4]))?,
                evaluations: num(f[5])?,
            });
        }
        match version {
            Some(BENCH_SCHEMA_VERSION) => {}
            v => return Err(format!("unsupported schema version {v:?}")),
        }
        Ok(Self {
            evaluator: evaluator.ok_or("missing evaluator")?,
            digest: digest.ok_or("missing digest")?,
            budget: budget.ok_or("missing budget")?,
            rows,
        })
    }

    /// Median evals-to-goal of `method`; failed runs count as infinite.
    pub fn median_evals(&self, method: &str) -> Option<f64> {
        let mut v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.evals_to_goal.map_or(f64::INFINITY, |n| n as f64))
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
    }
}
