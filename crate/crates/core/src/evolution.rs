//! The evolutionary criterion loop.
//!
//! Each evolution labels the whole dataset with the current criterion,
//! trains a discriminator (picking widths from a small grid), an SVC and a
//! generator, draws SVC-accepted candidates, evaluates them, merges them
//! into the dataset and moves the criterion to the next schedule entry.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::criteria::{percentile_threshold, CriteriaError, CriterionSpec, PerformanceVector};
use crate::generative::{
    sample_candidates, tune_discriminator, train_generator_with, unit_matrix, DiscriminatorConfig, GenError,
    GeneratorConfig, GeneratorReport, SamplingContext, SplitDataset, Discriminator, Generator,
};
use crate::geometry::{check_geometry, sample_valid, ConnectionMap, ParameterRanges, ParameterVector, PARAM_COUNT};
use crate::goal::GoalSpec;
use crate::seeds;
use crate::simulator::{short_hash, BudgetLedger, BudgetedEvaluator, Evaluator, S11Curve, SimError};
use crate::svc::{train_svc, SvcConfig, SvcError, SvcModel};

pub const DATASET_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("invalid evolution config: {0}")]
    Config(String),
    #[error("evaluation budget exhausted ({used} of {limit} used)")]
    BudgetExhausted { used: u64, limit: u64 },
    #[error("could not draw a checker-passing random geometry in {0} attempts")]
    SeedSampling(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Criteria(#[from] CriteriaError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Svc(#[from] SvcError),
}

/// How metrics are combined into a labeling criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CriterionMode {
    WeightedSum { weights: Vec<f64> },
    PerMetric,
}

/// One step of the criterion schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleEntry {
    /// Nearest-rank percentile of the dataset: of the weighted sum, or of
    /// each metric separately in per-metric mode.
    Percentile(f64),
    /// Explicit thresholds: one value for a weighted sum, one per metric
    /// (or a single value for all) in per-metric mode.
    Fixed(Vec<f64>),
}

impl ScheduleEntry {
    pub fn percentile(&self) -> Option<f64> {
        match self {
            ScheduleEntry::Percentile(q) => Some(*q),
            ScheduleEntry::Fixed(_) => None,
        }
    }
}

/// Builds the criterion for `entry` over the metrics of the dataset.
pub fn criterion_for(
    entry: &ScheduleEntry,
    mode: &CriterionMode,
    metrics: &[PerformanceVector],
    metric_count: usize,
) -> Result<CriterionSpec, EvolutionError> {
    Ok(match (mode, entry) {
        (CriterionMode::WeightedSum { weights }, ScheduleEntry::Percentile(q)) => {
            let scores: Vec<f64> = metrics
                .iter()
                .map(|p| weights.iter().zip(&p.0).map(|(w, v)| w * v).sum())
                .collect();
            CriterionSpec::WeightedSum {
                weights: weights.clone(),
                threshold: percentile_threshold(&scores, *q)?,
            }
        }
        (CriterionMode::WeightedSum { weights }, ScheduleEntry::Fixed(v)) => {
            let [c] = v.as_slice() else {
                return Err(EvolutionError::Config(format!("weighted-sum schedule entry needs one threshold, got {v:?}")));
            };
            CriterionSpec::WeightedSum {
                weights: weights.clone(),
                threshold: *c,
            }
        }
        (CriterionMode::PerMetric, ScheduleEntry::Percentile(q)) => {
            let thresholds = (0..metric_count)
                .map(|i| {
                    let col: Vec<f64> = metrics.iter().map(|p| p.0[i]).collect();
                    percentile_threshold(&col, *q)
                })
                .collect::<Result<Vec<_>, _>>()?;
            CriterionSpec::PerMetric { thresholds }
        }
        (CriterionMode::PerMetric, ScheduleEntry::Fixed(v)) => {
            let thresholds = match v.len() {
                1 => vec![v[0]; metric_count],
                n if n == metric_count => v.clone(),
                _ => {
                    return Err(EvolutionError::Config(format!(
                        "per-metric schedule entry needs 1 or {metric_count} thresholds, got {v:?}"
                    )))
                }
            };
            CriterionSpec::PerMetric { thresholds }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub initial_population: usize,
    pub candidates_per_evolution: usize,
    pub criterion_mode: CriterionMode,
    /// Entry `k` labels the dataset in evolution `k + 1`; entry 0 is the
    /// initial criterion. The last entry repeats once the list runs out.
    pub schedule: Vec<ScheduleEntry>,
    pub max_evolutions: usize,
    pub budget: u64,
    pub master_seed: u64,
    /// Discriminator width triples by evolution. Evolution `k` tries rows
    /// `k - 1`, `k` and `k + 1` (1-based, clipped) and keeps the best.
    pub width_rows: Vec<[usize; 3]>,
    pub discriminator: DiscriminatorConfig,
    pub generator: GeneratorConfig,
    pub svc: SvcConfig,
    pub test_fraction: f64,
    /// Generator draws per evolution are capped at this multiple of the
    /// batch size.
    pub redraw_factor: usize,
    /// Uniform draws allowed per accepted seed geometry.
    pub seed_draws_per_design: usize,
    /// Continue each evolution's generator from the previous one instead
    /// of a fresh initialization.
    pub warm_start_generator: bool,
}

/// Per-evolution discriminator widths, scaled from 64/128/256-style rows.
const WIDTH_ROWS: [[usize; 3]; 7] = [
    [64, 128, 256],
    [128, 128, 256],
    [256, 512, 512],
    [256, 512, 256],
    [256, 512, 512],
    [256, 256, 1024],
    [256, 256, 1024],
];

impl EvolutionConfig {
    fn example1(desk: bool) -> Self {
        let (discriminator, generator, width_rows) = if desk {
            (
                DiscriminatorConfig::desk(),
                GeneratorConfig::desk(),
                WIDTH_ROWS.iter().map(|r| r.map(|w| w / 8)).collect(),
            )
        } else {
            (DiscriminatorConfig::full(), GeneratorConfig::full(), WIDTH_ROWS.to_vec())
        };
        Self {
            initial_population: 100,
            candidates_per_evolution: 100,
            criterion_mode: CriterionMode::WeightedSum { weights: vec![1.0, 1.0] },
            schedule: [50.0, 50.0, 30.0, 30.0, 20.0, 20.0, 20.0]
                .into_iter()
                .map(ScheduleEntry::Percentile)
                .collect(),
            max_evolutions: 7,
            budget: 1000,
            master_seed: 0,
            width_rows,
            discriminator,
            generator,
            svc: SvcConfig::default(),
            test_fraction: 0.2,
            redraw_factor: 10,
            seed_draws_per_design: 10_000,
            warm_start_generator: desk,
        }
    }

    /// Dual-resonance profile at desk scale: 100 seeds, 100 candidates per
    /// evolution, weighted-sum criterion on percentiles 50/50/30/30/20/20/20.
    pub fn example1_desk() -> Self {
        Self::example1(true)
    }

    /// Dual-resonance profile with the full-size networks and training
    /// recipes.
    pub fn example1_full() -> Self {
        Self::example1(false)
    }

    fn example2(desk: bool) -> Self {
        let mut c = Self::example1(desk);
        c.candidates_per_evolution = 50;
        c.criterion_mode = CriterionMode::PerMetric;
        c.schedule = vec![
            ScheduleEntry::Fixed(vec![7.0]),
            ScheduleEntry::Fixed(vec![6.0]),
            ScheduleEntry::Fixed(vec![5.0]),
            ScheduleEntry::Fixed(vec![4.0]),
            ScheduleEntry::Fixed(vec![3.0]),
            ScheduleEntry::Fixed(vec![3.0, 2.0]),
            ScheduleEntry::Fixed(vec![3.0, 1.0]),
            ScheduleEntry::Fixed(vec![1.0]),
        ];
        c.max_evolutions = 38;
        c.budget = 2000;
        c
    }

    /// Broadband profile at desk scale: 50 candidates per evolution,
    /// per-metric thresholds 7, 6, 5, 4, 3, (3, 2), (3, 1), 1 dB.
    pub fn example2_desk() -> Self {
        Self::example2(true)
    }

    pub fn example2_full() -> Self {
        Self::example2(false)
    }

    pub fn validate(&self, goal: &GoalSpec) -> Result<(), EvolutionError> {
        let bad = |m: &str| Err(EvolutionError::Config(m.to_string()));
        if self.initial_population == 0 || self.candidates_per_evolution == 0 {
            return bad("population sizes must be at least 1");
        }
        if self.schedule.is_empty() {
            return bad("criterion schedule is empty");
        }
        for e in &self.schedule {
            if let ScheduleEntry::Percentile(q) = e {
                if !(*q > 0.0 && *q < 100.0) {
                    return bad(&format!("schedule percentile {q} outside (0, 100)"));
                }
            }
        }
        if let CriterionMode::WeightedSum { weights } = &self.criterion_mode {
            if weights.len() != goal.metric_count() || weights.iter().any(|w| !w.is_finite()) {
                return bad("weighted-sum weights must be finite, one per goal metric");
            }
        }
        if self.width_rows.is_empty() || self.width_rows.iter().flatten().any(|&w| w == 0) {
            return bad("discriminator width rows must be non-empty with positive widths");
        }
        if !(0.0..1.0).contains(&self.test_fraction) || self.redraw_factor == 0 || self.seed_draws_per_design == 0 {
            return bad("test fraction must lie in [0, 1); redraw factor and seed draws must be positive");
        }
        self.discriminator.train.validate().map_err(GenError::from)?;
        self.generator.train.validate().map_err(GenError::from)?;
        if !(self.svc.c > 0.0) {
            return bad("SVC C must be positive");
        }
        Ok(())
    }

    pub fn schedule_entry(&self, index: usize) -> &ScheduleEntry {
        &self.schedule[index.min(self.schedule.len() - 1)]
    }

    /// Width grid tried in evolution `k` (1-based).
    pub fn width_grid(&self, k: usize) -> Vec<[usize; 3]> {
        let last = self.width_rows.len() - 1;
        let centre = (k - 1).min(last);
        let mut grid = vec![self.width_rows[centre]];
        for i in [centre.saturating_sub(1), (centre + 1).min(last)] {
            if !grid.contains(&self.width_rows[i]) {
                grid.push(self.width_rows[i]);
            }
        }
        grid
    }
}

/// One evaluated design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRecord {
    pub id: usize,
    /// 0 for the random seed population.
    pub evolution: usize,
    pub params: ParameterVector,
    /// `|S11|` samples on the evaluator's sweep grid.
    pub s11: Vec<f64>,
    pub metrics: PerformanceVector,
    pub score: f64,
    pub goal_met: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionRecord {
    pub evolution: usize,
    pub criterion: CriterionSpec,
    pub percentile: Option<f64>,
    /// The scheduled criterion labeled everything one class and an earlier
    /// entry was used instead.
    pub backed_off: bool,
    pub labeled_valid: usize,
    pub dataset_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionStats {
    pub evolution: usize,
    pub disc_widths: [usize; 3],
    pub disc_epochs: usize,
    pub disc_train_accuracy: f64,
    pub disc_validation_accuracy: f64,
    pub disc_test_accuracy: f64,
    pub svc_test_accuracy: f64,
    pub svc_converged: bool,
    pub generator: GeneratorReport,
    pub requested: usize,
    pub evaluated: usize,
    pub draws: usize,
    pub rejected_geometry: usize,
    pub rejected_duplicate: usize,
    pub rejected_svc: usize,
    pub shortfall: bool,
    /// Evaluated candidates satisfying this evolution's criterion.
    pub batch_valid: usize,
    pub acceptance_rate: f64,
    /// Median goal score of the evaluated batch.
    pub batch_median_score: f64,
    pub batch_goal_met: usize,
    /// Mean per-parameter standard deviation of the batch in unit-cube
    /// coordinates (uniform sampling gives about 0.29).
    pub batch_spread: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    GoalMet,
    BudgetExhausted,
    MaxEvolutions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionState {
    pub goal: GoalSpec,
    pub records: Vec<DesignRecord>,
    pub initial_criterion: CriterionSpec,
    pub history: Vec<CriterionRecord>,
    pub stats: Vec<EvolutionStats>,
    pub evaluations: u64,
    pub outcome: Option<RunOutcome>,
}

/// Models from the last completed evolution.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub discriminator: Discriminator,
    pub generator: Generator,
    pub svc: SvcModel,
}

impl EvolutionState {
    pub fn params(&self) -> Vec<ParameterVector> {
        self.records.iter().map(|r| r.params).collect()
    }

    pub fn metrics(&self) -> Vec<PerformanceVector> {
        self.records.iter().map(|r| r.metrics.clone()).collect()
    }

    pub fn goal_met_count(&self) -> usize {
        self.records.iter().filter(|r| r.goal_met).count()
    }

    /// The criterion that will label the next evolution (the initial one
    /// before any evolution ran).
    pub fn current_criterion(&self) -> &CriterionSpec {
        self.history.last().map(|h| &h.criterion).unwrap_or(&self.initial_criterion)
    }

    pub fn best(&self) -> Option<&DesignRecord> {
        self.records.iter().min_by(|a, b| a.score.total_cmp(&b.score).then(a.id.cmp(&b.id)))
    }

    /// Rebinds the evaluated designs to another goal without evaluating
    /// anything: metrics are recomputed from the stored curves.
    pub fn with_goal(
        &self,
        goal: GoalSpec,
        cfg: &EvolutionConfig,
        grid: &[f64],
    ) -> Result<EvolutionState, EvolutionError> {
        cfg.validate(&goal)?;
        let records = self
            .records
            .iter()
            .map(|r| {
                let curve = S11Curve::new(grid.to_vec(), r.s11.clone())?;
                let metrics = goal.metrics(&curve)?;
                Ok(DesignRecord {
                    score: goal.score(&metrics),
                    goal_met: goal.is_met(&metrics),
                    metrics,
                    ..r.clone()
                })
            })
            .collect::<Result<Vec<_>, EvolutionError>>()?;
        let metrics: Vec<PerformanceVector> = records.iter().map(|r| r.metrics.clone()).collect();
        let initial_criterion = criterion_for(cfg.schedule_entry(0), &cfg.criterion_mode, &metrics, goal.metric_count())?;
        Ok(EvolutionState {
            goal,
            records,
            initial_criterion,
            history: Vec::new(),
            stats: Vec::new(),
            evaluations: 0,
            outcome: None,
        })
    }

    /// SHA-256 prefix over the canonical JSON of the records, criteria and
    /// stats; equal digests mean identical runs.
    pub fn digest(&self) -> String {
        let body = serde_json::json!({
            "records": self.records,
            "initial_criterion": self.initial_criterion,
            "history": self.history,
            "stats": self.stats,
            "evaluations": self.evaluations,
        });
        short_hash(body.to_string().as_bytes())
    }

    /// One JSON object per design:
    /// `{schema_version, id, evolution, params, s11, metrics, score, goal_met, label}`
    /// where `label` is validity under the latest criterion.
    pub fn dataset_jsonl(&self) -> Result<String, EvolutionError> {
        let crit = self.current_criterion();
        let mut out = String::new();
        for r in &self.records {
            let rec = serde_json::json!({
                "schema_version": DATASET_SCHEMA_VERSION,
                "id": r.id,
                "evolution": r.evolution,
                "params": r.params.0.to_vec(),
                "s11": r.s11,
                "metrics": r.metrics,
                "score": r.score,
                "goal_met": r.goal_met,
                "label": crit.label(&r.metrics)?,
            });
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        Ok(out)
    }
}

fn evaluate_batch(
    evaluator: &BudgetedEvaluator<'_>,
    goal: &GoalSpec,
    params: &[ParameterVector],
    first_id: usize,
    evolution: usize,
) -> Result<Vec<DesignRecord>, EvolutionError> {
    let curves: Vec<Result<S11Curve, SimError>> = params.par_iter().map(|p| evaluator.evaluate(p)).collect();
    curves
        .into_iter()
        .zip(params)
        .enumerate()
        .map(|(i, (curve, p))| {
            let curve = curve?;
            let metrics = goal.metrics(&curve)?;
            Ok(DesignRecord {
                id: first_id + i,
                evolution,
                params: *p,
                s11: curve.s11().to_vec(),
                score: goal.score(&metrics),
                goal_met: goal.is_met(&metrics),
                metrics,
            })
        })
        .collect()
}

/// Draws and evaluates the random initial population and sets the initial
/// criterion from schedule entry 0.
pub fn seed_population(
    cfg: &EvolutionConfig,
    goal: &GoalSpec,
    ranges: &ParameterRanges,
    conn: &ConnectionMap,
    evaluator: &dyn Evaluator,
    ledger: &BudgetLedger,
) -> Result<EvolutionState, EvolutionError> {
    cfg.validate(goal)?;
    if ledger.remaining() < cfg.initial_population as u64 {
        return Err(EvolutionError::BudgetExhausted {
            used: ledger.used(),
            limit: ledger.limit(),
        });
    }
    let mut rng = seeds::rng(cfg.master_seed, "seed_population", 0);
    let params = (0..cfg.initial_population)
        .map(|_| {
            sample_valid(ranges, conn, &mut rng, cfg.seed_draws_per_design)
                .ok_or(EvolutionError::SeedSampling(cfg.seed_draws_per_design))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let before = ledger.used();
    let budgeted = BudgetedEvaluator::new(evaluator, ledger);
    let records = evaluate_batch(&budgeted, goal, &params, 0, 0)?;
    let metrics: Vec<PerformanceVector> = records.iter().map(|r| r.metrics.clone()).collect();
    let initial_criterion = criterion_for(cfg.schedule_entry(0), &cfg.criterion_mode, &metrics, goal.metric_count())?;
    Ok(EvolutionState {
        goal: goal.clone(),
        records,
        initial_criterion,
        history: Vec::new(),
        stats: Vec::new(),
        evaluations: ledger.used() - before,
        outcome: None,
    })
}

fn labels(crit: &CriterionSpec, metrics: &[PerformanceVector]) -> Result<Vec<bool>, CriteriaError> {
    metrics.iter().map(|p| crit.label(p)).collect()
}

fn degenerate(y: &[bool]) -> bool {
    y.iter().all(|&v| v) || y.iter().all(|&v| !v)
}

/// Elementwise minimum of two criteria of the same shape.
fn tightest(a: CriterionSpec, b: &CriterionSpec) -> CriterionSpec {
    match (a, b) {
        (CriterionSpec::WeightedSum { weights, threshold }, CriterionSpec::WeightedSum { threshold: t, .. }) => {
            CriterionSpec::WeightedSum {
                weights,
                threshold: threshold.min(*t),
            }
        }
        (CriterionSpec::PerMetric { thresholds }, CriterionSpec::PerMetric { thresholds: t }) if thresholds.len() == t.len() => {
            CriterionSpec::PerMetric {
                thresholds: thresholds.iter().zip(t).map(|(a, b)| a.min(*b)).collect(),
            }
        }
        (a, _) => a,
    }
}

/// Criterion for evolution `k`, backing off to earlier schedule entries
/// (and finally the median) when one labels the whole dataset one class.
/// A percentile entry never loosens the previous criterion: if the
/// dataset's percentile moved up, the previous threshold is kept.
fn choose_criterion(
    cfg: &EvolutionConfig,
    k: usize,
    metrics: &[PerformanceVector],
    metric_count: usize,
    previous: Option<&CriterionSpec>,
) -> Result<(CriterionSpec, Option<f64>, bool, Vec<bool>), EvolutionError> {
    let mut entries: Vec<ScheduleEntry> = (0..k).rev().map(|i| cfg.schedule_entry(i).clone()).collect();
    entries.push(ScheduleEntry::Percentile(50.0));
    let mut last = None;
    for (n, entry) in entries.iter().enumerate() {
        let mut crit = criterion_for(entry, &cfg.criterion_mode, metrics, metric_count)?;
        if let (ScheduleEntry::Percentile(_), Some(prev), 0) = (entry, previous, n) {
            crit = tightest(crit, prev);
        }
        let y = labels(&crit, metrics)?;
        if !degenerate(&y) {
            if n > 0 {
                log::warn!("evolution {k}: scheduled criterion labels one class only, backed off to {entry:?}");
            }
            return Ok((crit, entry.percentile(), n > 0, y));
        }
        last = Some((crit, entry.percentile(), y));
    }
    let (crit, q, y) = last.expect("at least one entry");
    Ok((crit, q, true, y))
}

fn spread(params: &[ParameterVector], ranges: &ParameterRanges) -> f64 {
    if params.len() < 2 {
        return 0.0;
    }
    let u = unit_matrix(ranges, params);
    let n = params.len() as f64;
    let mut total = 0.0;
    for col in u.columns() {
        let m = col.sum() / n;
        total += (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
    }
    total / PARAM_COUNT as f64
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs evolutions until the goal count, the budget or `max_evolutions`
/// is reached. Returns the models of the last completed evolution, if any.
pub fn run_evolution(
    state: &mut EvolutionState,
    cfg: &EvolutionConfig,
    ranges: &ParameterRanges,
    conn: &ConnectionMap,
    evaluator: &dyn Evaluator,
    ledger: &BudgetLedger,
) -> Result<Option<TrainedModels>, EvolutionError> {
    cfg.validate(&state.goal)?;
    let goal = state.goal.clone();
    let budgeted = BudgetedEvaluator::new(evaluator, ledger);
    let mut models = None;
    let start_used = ledger.used();
    let evaluations_before = state.evaluations;
    loop {
        if state.goal_met_count() >= goal.required_valid {
            state.outcome = Some(RunOutcome::GoalMet);
            break;
        }
        if ledger.remaining() == 0 {
            state.outcome = Some(RunOutcome::BudgetExhausted);
            break;
        }
        if state.history.len() >= cfg.max_evolutions {
            state.outcome = Some(RunOutcome::MaxEvolutions);
            break;
        }
        let k = state.history.len() + 1;
        let metrics = state.metrics();
        let (criterion, percentile, backed_off, y) = if k == 1 {
            let y = labels(&state.initial_criterion, &metrics)?;
            if degenerate(&y) {
                choose_criterion(cfg, 1, &metrics, goal.metric_count(), None)?
            } else {
                (state.initial_criterion.clone(), cfg.schedule_entry(0).percentile(), false, y)
            }
        } else {
            choose_criterion(cfg, k, &metrics, goal.metric_count(), Some(state.current_criterion()))?
        };
        let dataset_size = state.records.len();
        let labeled_valid = y.iter().filter(|&&v| v).count();
        log::info!("evolution {k}: {criterion:?}, {labeled_valid}/{dataset_size} valid");

        let split = SplitDataset::stratified(state.params(), y, cfg.test_fraction, seeds::derive(cfg.master_seed, "split", k as u64))?;
        let trained = tune_discriminator(
            &split,
            ranges,
            &cfg.width_grid(k),
            &cfg.discriminator,
            seeds::derive(cfg.master_seed, "discriminator", k as u64),
        )?;

        let (tx, ty) = split.part(&split.train);
        let (sx, sy) = split.part(&split.test);
        let svc = train_svc(unit_matrix(ranges, &tx).view(), &ty, &cfg.svc)?;
        let svc_test_accuracy = if sx.is_empty() {
            f64::NAN
        } else {
            svc.accuracy(unit_matrix(ranges, &sx).view(), &sy)
        };

        let (generator, gen_report) =
            train_generator_with(&trained.disc, &cfg.generator, seeds::derive(cfg.master_seed, "generator", k as u64), models.as_ref().map(|m: &TrainedModels| &m.generator).filter(|_| cfg.warm_start_generator), |p| {
                check_geometry(p, conn).is_pass() && svc.predict(&ranges.normalize(p))
            })?;

        let want = (cfg.candidates_per_evolution as u64).min(ledger.remaining()) as usize;
        let existing = state.params();
        let ctx = SamplingContext {
            ranges,
            conn,
            discriminator: Some(&trained.disc),
            existing: &existing,
            max_draws: cfg.redraw_factor * cfg.candidates_per_evolution,
        };
        let mut rng = seeds::rng(cfg.master_seed, "sampling", k as u64);
        let batch = sample_candidates(&generator, want, &ctx, &mut rng, |p| svc.predict(&ranges.normalize(p)))?;
        if batch.shortfall {
            log::warn!("evolution {k}: only {} of {want} candidates survived", batch.candidates.len());
        }
        let params: Vec<ParameterVector> = batch.candidates.iter().map(|c| c.params).collect();
        let new = evaluate_batch(&budgeted, &goal, &params, state.records.len(), k)?;

        let batch_valid = new.iter().map(|r| criterion.label(&r.metrics)).collect::<Result<Vec<_>, _>>()?;
        let batch_valid = batch_valid.iter().filter(|&&v| v).count();
        let scores: Vec<f64> = new.iter().map(|r| r.score).collect();
        state.stats.push(EvolutionStats {
            evolution: k,
            disc_widths: trained.widths,
            disc_epochs: trained.epochs,
            disc_train_accuracy: trained.train_accuracy,
            disc_validation_accuracy: trained.validation_accuracy,
            disc_test_accuracy: trained.test_accuracy,
            svc_test_accuracy,
            svc_converged: svc.converged,
            generator: gen_report,
            requested: want,
            evaluated: new.len(),
            draws: batch.draws,
            rejected_geometry: batch.rejected_geometry,
            rejected_duplicate: batch.rejected_duplicate,
            rejected_svc: batch.rejected_filter,
            shortfall: batch.shortfall,
            batch_valid,
            acceptance_rate: if new.is_empty() { f64::NAN } else { batch_valid as f64 / new.len() as f64 },
            batch_median_score: median(&scores),
            batch_goal_met: new.iter().filter(|r| r.goal_met).count(),
            batch_spread: spread(&params, ranges),
        });
        state.history.push(CriterionRecord {
            evolution: k,
            criterion,
            percentile,
            backed_off,
            labeled_valid,
            dataset_size,
        });
        state.records.extend(new);
        state.evaluations = evaluations_before + (ledger.used() - start_used);
        models = Some(TrainedModels {
            discriminator: trained.disc,
            generator,
            svc,
        });
    }
    Ok(models)
}

/// Plot-ready rows of the performance space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSpace {
    pub metric_names: Vec<String>,
    /// `(id, evolution, metrics, score, valid under latest criterion, goal met)`
    pub rows: Vec<(usize, usize, Vec<f64>, f64, bool, bool)>,
    /// Per evolution (0 = seed population): median score and goal-meeting
    /// count of the designs evaluated in it.
    pub per_evolution: Vec<(usize, f64, usize)>,
}

pub fn export_performance_space(state: &EvolutionState) -> Result<PerformanceSpace, EvolutionError> {
    let crit = state.current_criterion();
    let rows = state
        .records
        .iter()
        .map(|r| Ok((r.id, r.evolution, r.metrics.0.clone(), r.score, crit.label(&r.metrics)?, r.goal_met)))
        .collect::<Result<Vec<_>, CriteriaError>>()?;
    let last = state.records.iter().map(|r| r.evolution).max().unwrap_or(0);
    let per_evolution = (0..=last)
        .map(|e| {
            let batch: Vec<&DesignRecord> = state.records.iter().filter(|r| r.evolution == e).collect();
            let scores: Vec<f64> = batch.iter().map(|r| r.score).collect();
            (e, median(&scores), batch.iter().filter(|r| r.goal_met).count())
        })
        .collect();
    Ok(PerformanceSpace {
        metric_names: state.goal.metric_names(),
        rows,
        per_evolution,
    })
}

impl PerformanceSpace {
    /// `id,evolution,<metrics...>,score,valid,goal_met`
    pub fn rows_csv(&self) -> String {
        let mut out = format!("id,evolution,{},score,valid,goal_met\n", self.metric_names.join(","));
        for (id, e, m, s, v, g) in &self.rows {
            let ms: Vec<String> = m.iter().map(|x| x.to_string()).collect();
            out.push_str(&format!("{id},{e},{},{s},{},{}\n", ms.join(","), u8::from(*v), u8::from(*g)));
        }
        out
    }

    /// `evolution,median_score,goal_met`
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("evolution,median_score,goal_met\n");
        for (e, m, g) in &self.per_evolution {
            out.push_str(&format!("{e},{m},{g}\n"));
        }
        out
    }
}
