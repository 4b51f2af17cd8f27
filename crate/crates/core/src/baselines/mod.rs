//! Classical derivative-free optimizers behind one objective contract.
//!
//! Every optimizer works on the unit cube mapped affinely onto the
//! objective's box, calls the objective only through a [`Tracker`] (which
//! charges a [`BudgetLedger`] per call), and restarts until the budget is
//! spent or the goal is reached.

mod cma_es;
mod ga;
mod nelder_mead;
mod pso;
mod trust_region;

pub use cma_es::{cma_es, CmaEs};
pub use ga::{ga, GaParams};
pub use nelder_mead::nelder_mead;
pub use pso::pso;
pub use trust_region::trust_region;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::{check_geometry, ConnectionMap, ParameterRanges, ParameterVector, PARAM_COUNT};
use crate::goal::GoalSpec;
use crate::simulator::{BudgetLedger, Evaluator, SimError};

/// Objective value charged for a geometry the checker rejects.
pub const INFEASIBLE_PENALTY: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub goal_met: bool,
    /// The point was infeasible and `value` is the penalty.
    pub penalized: bool,
}

/// A box-bounded minimization problem.
pub trait Objective: Sync {
    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    fn evaluate(&self, x: &[f64]) -> Result<Evaluation, SimError>;

    fn dim(&self) -> usize {
        self.lower().len()
    }
}

type ScalarFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A plain function with a target value; the goal is `f < target`.
pub struct FnObjective {
    lower: Vec<f64>,
    upper: Vec<f64>,
    f: ScalarFn,
    target: f64,
}

impl FnObjective {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, target: f64, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        assert_eq!(lower.len(), upper.len());
        assert!(lower.iter().zip(&upper).all(|(l, u)| l < u));
        Self {
            lower,
            upper,
            f: Box::new(f),
            target,
        }
    }

    /// `sum x_i^2` on `[-half_width, half_width]^dim`.
    pub fn sphere(dim: usize, half_width: f64, target: f64) -> Self {
        Self::new(vec![-half_width; dim], vec![half_width; dim], target, |x| x.iter().map(|v| v * v).sum())
    }

    /// `sum 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2` on `[lo, hi]^dim`.
    pub fn rosenbrock(dim: usize, lo: f64, hi: f64, target: f64) -> Self {
        Self::new(vec![lo; dim], vec![hi; dim], target, |x| {
            x.windows(2)
                .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
                .sum()
        })
    }
}

impl Objective for FnObjective {
    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn evaluate(&self, x: &[f64]) -> Result<Evaluation, SimError> {
        let value = (self.f)(x);
        Ok(Evaluation {
            value,
            goal_met: value < self.target,
            penalized: false,
        })
    }
}

/// Antenna design as a minimization problem: the goal score (sum of the
/// point values in dual-resonance mode, sum of band targets in broadband
/// mode), with [`INFEASIBLE_PENALTY`] for checker failures.
pub struct AntennaObjective<'a> {
    evaluator: &'a dyn Evaluator,
    goal: GoalSpec,
    conn: ConnectionMap,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl<'a> AntennaObjective<'a> {
    pub fn new(evaluator: &'a dyn Evaluator, goal: GoalSpec, ranges: &ParameterRanges, conn: ConnectionMap) -> Self {
        Self {
            evaluator,
            goal,
            conn,
            lower: ranges.iter().map(|iv| iv.lo).collect(),
            upper: ranges.iter().map(|iv| iv.hi).collect(),
        }
    }
}

impl Objective for AntennaObjective<'_> {
    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn evaluate(&self, x: &[f64]) -> Result<Evaluation, SimError> {
        let mut p = [0.0; PARAM_COUNT];
        p.copy_from_slice(x);
        let params = ParameterVector(p);
        if !check_geometry(&params, &self.conn).is_pass() {
            return Ok(Evaluation {
                value: INFEASIBLE_PENALTY,
                goal_met: false,
                penalized: true,
            });
        }
        let metrics = self.goal.metrics(&self.evaluator.evaluate(&params)?)?;
        Ok(Evaluation {
            value: self.goal.score(&metrics),
            goal_met: self.goal.is_met(&metrics),
            penalized: false,
        })
    }
}

/// Why an optimizer stopped.
#[derive(Debug)]
pub enum Halt {
    Budget,
    Goal,
    Failed(SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    Budget,
    Goal,
}

/// Counts, clips and records every objective call.
pub struct Tracker<'a> {
    obj: &'a dyn Objective,
    ledger: BudgetLedger,
    stop_on_goal: bool,
    best: f64,
    best_x: Vec<f64>,
    trace: Vec<f64>,
    evals_to_goal: Option<u64>,
    penalized: u64,
    points: Vec<Vec<f64>>,
    keep_points: bool,
}

impl<'a> Tracker<'a> {
    pub fn new(obj: &'a dyn Objective, budget: u64, stop_on_goal: bool) -> Self {
        Self {
            obj,
            ledger: BudgetLedger::new(budget),
            stop_on_goal,
            best: f64::INFINITY,
            best_x: Vec::new(),
            trace: Vec::new(),
            evals_to_goal: None,
            penalized: 0,
            points: Vec::new(),
            keep_points: false,
        }
    }

    /// Also keep every evaluated point (in objective coordinates).
    pub fn keep_points(mut self) -> Self {
        self.keep_points = true;
        self
    }

    pub fn dim(&self) -> usize {
        self.obj.dim()
    }

    pub fn used(&self) -> u64 {
        self.ledger.used()
    }

    pub fn remaining(&self) -> u64 {
        self.ledger.remaining()
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.obj.lower().iter().zip(self.obj.upper()))
            .map(|(v, (l, u))| ((v - l) / (u - l)).clamp(0.0, 1.0))
            .collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.obj.lower().iter().zip(self.obj.upper()))
            .map(|(v, (l, h))| (l + v.clamp(0.0, 1.0) * (h - l)).clamp(*l, *h))
            .collect()
    }

    /// Evaluates the unit-cube point `u` (clipped into the cube). Returns
    /// `Err(Halt::Goal)` right after the first goal-satisfying call when
    /// stopping on goal.
    pub fn eval(&mut self, u: &[f64]) -> Result<f64, Halt> {
        if self.ledger.charge().is_err() {
            return Err(Halt::Budget);
        }
        let x = self.from_unit(u);
        let e = self.obj.evaluate(&x).map_err(Halt::Failed)?;
        if e.penalized {
            self.penalized += 1;
        }
        if e.value < self.best {
            self.best = e.value;
            self.best_x = x.clone();
        }
        self.trace.push(self.best);
        if self.keep_points {
            self.points.push(x);
        }
        if e.goal_met && self.evals_to_goal.is_none() {
            self.evals_to_goal = Some(self.ledger.used());
            if self.stop_on_goal {
                return Err(Halt::Goal);
            }
        }
        Ok(e.value)
    }

    fn finish(self, method: &str, seed: u64, halt: HaltReason) -> RunRecord {
        RunRecord {
            method: method.to_string(),
            seed,
            evaluations: self.ledger.used(),
            evals_to_goal: self.evals_to_goal,
            best_value: self.best,
            best_x: self.best_x,
            trace: self.trace,
            penalized: self.penalized,
            halt,
            points: self.points,
        }
    }
}

/// Outcome of one optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub seed: u64,
    pub evaluations: u64,
    /// 1-based index of the first goal-satisfying call.
    pub evals_to_goal: Option<u64>,
    pub best_value: f64,
    pub best_x: Vec<f64>,
    /// Best value so far after each call.
    pub trace: Vec<f64>,
    /// Calls that hit infeasible geometry and returned the penalty.
    pub penalized: u64,
    pub halt: HaltReason,
    /// Every evaluated point, when the tracker was asked to keep them.
    #[serde(skip)]
    pub points: Vec<Vec<f64>>,
}

/// Runs `body` until it halts; converts the halt into a record.
pub(crate) fn drive<F>(mut tracker: Tracker<'_>, method: &str, seed: u64, body: F) -> Result<RunRecord, SimError>
where
    F: FnOnce(&mut Tracker<'_>) -> Halt,
{
    match body(&mut tracker) {
        Halt::Budget => Ok(tracker.finish(method, seed, HaltReason::Budget)),
        Halt::Goal => Ok(tracker.finish(method, seed, HaltReason::Goal)),
        Halt::Failed(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NelderMead,
    CmaEs,
    Pso,
    Ga,
    TrustRegion,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::NelderMead, Method::CmaEs, Method::Pso, Method::Ga, Method::TrustRegion];

    pub fn name(self) -> &'static str {
        match self {
            Method::NelderMead => "nelder_mead",
            Method::CmaEs => "cma_es",
            Method::Pso => "pso",
            Method::Ga => "ga",
            Method::TrustRegion => "trust_region",
        }
    }

    /// Runs the method. `start` (objective coordinates) is used by the
    /// local methods; the population methods draw their own from `seed`.
    pub fn run(
        self,
        obj: &dyn Objective,
        start: &[f64],
        budget: u64,
        seed: u64,
        stop_on_goal: bool,
    ) -> Result<RunRecord, SimError> {
        let tracker = Tracker::new(obj, budget, stop_on_goal);
        match self {
            Method::NelderMead => nelder_mead(tracker, start, seed),
            Method::CmaEs => cma_es(tracker, seed),
            Method::Pso => pso(tracker, seed),
            Method::Ga => ga(tracker, seed, GaParams::default()),
            Method::TrustRegion => trust_region(tracker, start, seed),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}
