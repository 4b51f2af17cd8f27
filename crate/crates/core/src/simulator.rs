//! Evaluator boundary and the deterministic surrogate.
//!
//! The surrogate treats every path from the feed to a dangling node (the
//! two arm tips and the ground node) as a quarter-wave resonator. Each
//! path `k` of center-line length `L_k` produces a Lorentzian notch:
//!
//! ```text
//! f_k = V / L_k                 (V = 75 GHz mm)
//! A_k = min(3 + 20 r_k, 30)     dB
//! w_k = 0.15 + 0.5 r_k          GHz
//! s11(f) = max(-60, -sum_k A_k / (1 + ((f - f_k) / w_k)^2))
//! ```
//!
//! where `r_k` is the mean radius of the free nodes on the path (the fixed
//! feed disc is excluded).

use std::io::Write;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::criteria::{CriteriaError, PerformanceVector};
use crate::geometry::{check_geometry, ConnectionMap, GeometryFault, GeometryVerdict, NodeSpec, ParameterVector, NODE_COUNT};
use crate::goal::GoalSpec;

/// Lowest value any curve sample can take, in dB.
pub const S11_FLOOR: f64 = -60.0;

const FREQ_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid sweep: {0}")]
    Sweep(String),
    #[error("invalid curve: {0}")]
    Curve(String),
    #[error("geometry rejected: {0:?}")]
    InvalidGeometry(GeometryFault),
    #[error("frequency {0} GHz outside the sweep")]
    OutsideSweep(f64),
    #[error("evaluation budget of {limit} exhausted")]
    BudgetExhausted { limit: u64 },
    #[error(transparent)]
    Criteria(#[from] CriteriaError),
    #[error("external evaluator: {0}")]
    Command(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencySweep {
    /// GHz
    pub start: f64,
    /// GHz
    pub stop: f64,
    pub points: usize,
}

impl FrequencySweep {
    /// `0 <= start < stop`, at least two points.
    pub fn new(start: f64, stop: f64, points: usize) -> Result<Self, SimError> {
        if !(start.is_finite() && stop.is_finite() && start >= 0.0 && start < stop) {
            return Err(SimError::Sweep(format!("need 0 <= start < stop, got [{start}, {stop}]")));
        }
        if points < 2 {
            return Err(SimError::Sweep(format!("need at least 2 points, got {points}")));
        }
        Ok(Self { start, stop, points })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        Self::new(self.start, self.stop, self.points).map(|_| ())
    }

    /// `start + (stop - start) * i / (points - 1)`, which lands exactly on
    /// decimal grid values such as 2.4 for the default sweep.
    pub fn grid(&self) -> Vec<f64> {
        let n = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| self.start + (self.stop - self.start) * i as f64 / n)
            .collect()
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.start - FREQ_TOL && f <= self.stop + FREQ_TOL
    }
}

impl Default for FrequencySweep {
    /// 0 to 8 GHz, 801 samples (10 MHz step).
    fn default() -> Self {
        Self {
            start: 0.0,
            stop: 8.0,
            points: 801,
        }
    }
}

/// `|S11|` in dB on an ascending frequency grid in GHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S11Curve {
    freqs: Vec<f64>,
    s11: Vec<f64>,
}

impl S11Curve {
    pub fn new(freqs: Vec<f64>, s11: Vec<f64>) -> Result<Self, SimError> {
        if freqs.len() != s11.len() {
            return Err(SimError::Curve(format!("{} frequencies but {} samples", freqs.len(), s11.len())));
        }
        if freqs.is_empty() {
            return Err(SimError::Curve("empty curve".into()));
        }
        if freqs.iter().chain(&s11).any(|v| !v.is_finite()) {
            return Err(SimError::Curve("non-finite value".into()));
        }
        if freqs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SimError::Curve("frequencies must be strictly ascending".into()));
        }
        Ok(Self { freqs, s11 })
    }

    pub fn constant(sweep: &FrequencySweep, value: f64) -> Self {
        let freqs = sweep.grid();
        let s11 = vec![value; freqs.len()];
        Self { freqs, s11 }
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn s11(&self) -> &[f64] {
        &self.s11
    }

    /// Sample at the grid frequency nearest to `f` (lower one on ties).
    pub fn at_nearest(&self, f: f64) -> Result<f64, SimError> {
        let (first, last) = (self.freqs[0], *self.freqs.last().expect("non-empty"));
        if !(f >= first - FREQ_TOL && f <= last + FREQ_TOL) {
            return Err(SimError::OutsideSweep(f));
        }
        let i = self.freqs.partition_point(|&g| g < f);
        let idx = if i == 0 {
            0
        } else if i == self.freqs.len() || (f - self.freqs[i - 1]) <= (self.freqs[i] - f) {
            i - 1
        } else {
            i
        };
        Ok(self.s11[idx])
    }

    pub fn min(&self) -> f64 {
        self.s11.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `freq_ghz,s11_db` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("freq_ghz,s11_db\n");
        for (f, s) in self.freqs.iter().zip(&self.s11) {
            out.push_str(&format!("{f},{s}\n"));
        }
        out
    }

    /// Parses the format written by [`to_csv`](Self::to_csv). The header
    /// row is optional; blank lines are skipped.
    pub fn from_csv(text: &str) -> Result<Self, SimError> {
        let mut freqs = Vec::new();
        let mut s11 = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with(|c: char| c.is_ascii_alphabetic())) {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |p: Option<&str>| -> Result<f64, SimError> {
                p.and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| SimError::Curve(format!("line {}: expected two numbers", lineno + 1)))
            };
            freqs.push(parse(parts.next())?);
            s11.push(parse(parts.next())?);
        }
        Self::new(freqs, s11)
    }
}

/// Black-box `params -> |S11|` evaluator. Implementations must be
/// deterministic.
pub trait Evaluator: Send + Sync {
    fn name(&self) -> &str;

    fn sweep(&self) -> &FrequencySweep;

    fn evaluate(&self, params: &ParameterVector) -> Result<S11Curve, SimError>;

    /// Stable identifier of the evaluator and its settings, written into
    /// reports so runs can be checked for a shared evaluator.
    fn digest(&self) -> String;
}

/// Tunable constants of the surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConstants {
    /// GHz mm
    pub velocity: f64,
    pub depth_base: f64,
    pub depth_per_mm: f64,
    pub depth_cap: f64,
    pub width_base: f64,
    pub width_per_mm: f64,
}

impl Default for SurrogateConstants {
    fn default() -> Self {
        Self {
            velocity: 75.0,
            depth_base: 3.0,
            depth_per_mm: 20.0,
            depth_cap: 30.0,
            width_base: 0.15,
            width_per_mm: 0.5,
        }
    }
}

/// One resonance of the surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Notch {
    /// Node at the far end of the path (1-based).
    pub end: usize,
    /// mm
    pub length: f64,
    /// GHz
    pub freq: f64,
    /// dB
    pub depth: f64,
    /// GHz
    pub width: f64,
}

impl Notch {
    pub fn response(&self, f: f64) -> f64 {
        let u = (f - self.freq) / self.width;
        self.depth / (1.0 + u * u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateEvaluator {
    pub sweep: FrequencySweep,
    pub conn: ConnectionMap,
    pub constants: SurrogateConstants,
    grid: Vec<f64>,
}

impl SurrogateEvaluator {
    pub fn new(sweep: FrequencySweep, conn: ConnectionMap, constants: SurrogateConstants) -> Result<Self, SimError> {
        sweep.validate()?;
        Ok(Self {
            grid: sweep.grid(),
            sweep,
            conn,
            constants,
        })
    }

    /// Notches of a checked geometry, ordered by end node.
    pub fn notches(&self, params: &ParameterVector) -> Result<Vec<Notch>, SimError> {
        if let GeometryVerdict::Fail(fault) = check_geometry(params, &self.conn) {
            return Err(SimError::InvalidGeometry(fault));
        }
        Ok(notches_for_nodes(&self.conn.nodes(params), &self.conn, &self.constants))
    }

    pub fn curve_from_notches(&self, notches: &[Notch]) -> S11Curve {
        let s11 = self
            .grid
            .iter()
            .map(|&f| {
                let total: f64 = notches.iter().map(|n| n.response(f)).sum();
                (-total).clamp(S11_FLOOR, 0.0)
            })
            .collect();
        S11Curve {
            freqs: self.grid.clone(),
            s11,
        }
    }
}

impl Default for SurrogateEvaluator {
    fn default() -> Self {
        Self::new(FrequencySweep::default(), ConnectionMap::default(), SurrogateConstants::default())
            .expect("default sweep is valid")
    }
}

impl Evaluator for SurrogateEvaluator {
    fn name(&self) -> &str {
        "surrogate"
    }

    fn sweep(&self) -> &FrequencySweep {
        &self.sweep
    }

    fn evaluate(&self, params: &ParameterVector) -> Result<S11Curve, SimError> {
        let notches = self.notches(params)?;
        Ok(self.curve_from_notches(&notches))
    }

    fn digest(&self) -> String {
        let body = serde_json::json!({
            "name": self.name(),
            "sweep": self.sweep,
            "pairs": self.conn.pairs(),
            "constants": self.constants,
        });
        short_hash(body.to_string().as_bytes())
    }
}

/// Notches for explicit node positions (index 0 is node 1). Paths run from
/// the feed to every degree-1 node other than the feed, and to the ground
/// node; shortest center-line distance is used if the map has cycles.
pub fn notches_for_nodes(nodes: &[NodeSpec; NODE_COUNT], conn: &ConnectionMap, k: &SurrogateConstants) -> Vec<Notch> {
    let (dist, prev) = shortest_paths(nodes, conn);
    let mut ends: Vec<usize> = (1..=NODE_COUNT)
        .filter(|&n| n != conn.feed && (conn.degree(n) == 1 || n == conn.ground))
        .collect();
    ends.dedup();
    ends.into_iter()
        .filter(|&end| dist[end - 1].is_finite() && dist[end - 1] > 0.0)
        .map(|end| {
            let mut radii = Vec::new();
            let mut cur = end;
            while cur != conn.feed {
                radii.push(nodes[cur - 1].r);
                cur = prev[cur - 1];
            }
            let rbar = radii.iter().sum::<f64>() / radii.len() as f64;
            let length = dist[end - 1];
            Notch {
                end,
                length,
                freq: k.velocity / length,
                depth: (k.depth_base + k.depth_per_mm * rbar).min(k.depth_cap),
                width: k.width_base + k.width_per_mm * rbar,
            }
        })
        .collect()
}

/// Dijkstra from the feed over center-line segment lengths.
fn shortest_paths(nodes: &[NodeSpec; NODE_COUNT], conn: &ConnectionMap) -> ([f64; NODE_COUNT], [usize; NODE_COUNT]) {
    let mut dist = [f64::INFINITY; NODE_COUNT];
    let mut prev = [0usize; NODE_COUNT];
    let mut done = [false; NODE_COUNT];
    dist[conn.feed - 1] = 0.0;
    for _ in 0..NODE_COUNT {
        let Some(u) = (0..NODE_COUNT)
            .filter(|&i| !done[i] && dist[i].is_finite())
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
        else {
            break;
        };
        done[u] = true;
        for &(a, b) in conn.pairs() {
            let v = if a - 1 == u {
                b - 1
            } else if b - 1 == u {
                a - 1
            } else {
                continue;
            };
            let d = dist[u] + (nodes[u].x - nodes[v].x).hypot(nodes[u].y - nodes[v].y);
            if d < dist[v] {
                dist[v] = d;
                prev[v] = u + 1;
            }
        }
    }
    (dist, prev)
}

pub(crate) fn short_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Point goals read the nearest sample, band goals the band target.
pub fn evaluate_metrics(curve: &S11Curve, goal: &GoalSpec) -> Result<PerformanceVector, SimError> {
    goal.metrics(curve)
}

/// Shared evaluation counter. The only synchronized state of a run.
#[derive(Debug)]
pub struct BudgetLedger {
    used: AtomicU64,
    limit: u64,
}

impl BudgetLedger {
    pub fn new(limit: u64) -> Self {
        Self {
            used: AtomicU64::new(0),
            limit,
        }
    }

    pub fn unlimited() -> Self {
        Self::new(u64::MAX)
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn remaining(&self) -> u64 {
        self.limit.saturating_sub(self.used())
    }

    /// Takes one unit, failing without side effects when none is left.
    pub fn charge(&self) -> Result<u64, SimError> {
        self.used
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |u| (u < self.limit).then_some(u + 1))
            .map_err(|_| SimError::BudgetExhausted { limit: self.limit })
    }
}

/// Charges one budget unit per `evaluate` call, including calls whose
/// geometry is then rejected.
pub struct BudgetedEvaluator<'a> {
    inner: &'a dyn Evaluator,
    ledger: &'a BudgetLedger,
}

impl<'a> BudgetedEvaluator<'a> {
    pub fn new(inner: &'a dyn Evaluator, ledger: &'a BudgetLedger) -> Self {
        Self { inner, ledger }
    }

    pub fn ledger(&self) -> &BudgetLedger {
        self.ledger
    }

    pub fn inner(&self) -> &dyn Evaluator {
        self.inner
    }
}

impl Evaluator for BudgetedEvaluator<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn sweep(&self) -> &FrequencySweep {
        self.inner.sweep()
    }

    fn evaluate(&self, params: &ParameterVector) -> Result<S11Curve, SimError> {
        self.ledger.charge()?;
        self.inner.evaluate(params)
    }

    fn digest(&self) -> String {
        self.inner.digest()
    }
}

/// Runs an external program per evaluation. The 20 parameters are written
/// to its stdin as one comma-separated line; it must print a curve in the
/// [`S11Curve::to_csv`] format on stdout and exit with status 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEvaluator {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    pub sweep: FrequencySweep,
}

impl Evaluator for CommandEvaluator {
    fn name(&self) -> &str {
        "command"
    }

    fn sweep(&self) -> &FrequencySweep {
        &self.sweep
    }

    fn evaluate(&self, params: &ParameterVector) -> Result<S11Curve, SimError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()?;
        let line = params.as_slice().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        child
            .stdin
            .take()
            .ok_or_else(|| SimError::Command("stdin unavailable".into()))?
            .write_all(format!("{line}\n").as_bytes())?;
        let out = child.wait_with_output()?;
        if !out.status.success() {
            return Err(SimError::Command(format!(
                "{} exited with {}: {}",
                self.program,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let text = String::from_utf8(out.stdout).map_err(|e| SimError::Command(e.to_string()))?;
        S11Curve::from_csv(&text)
    }

    fn digest(&self) -> String {
        let body = serde_json::json!({
            "name": self.name(),
            "program": self.program,
            "args": self.args,
            "sweep": self.sweep,
        });
        short_hash(body.to_string().as_bytes())
    }
}
