//! Binary support vector classifier trained by SMO with second-order
//! working-set selection on a dense Gram matrix.
//!
//! Labels are `true` (valid, +1) and `false` (invalid, -1). The decision
//! function is `sum_i coef_i K(sv_i, x) + intercept` with
//! `coef_i = alpha_i y_i`; a candidate is accepted when it is `>= 0`.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ParameterRanges, ParameterVector};

pub const SVC_SCHEMA_VERSION: u32 = 1;

const TAU: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SvcError {
    #[error("training data needs both classes")]
    SingleClass,
    #[error("{rows} rows but {labels} labels")]
    Shape { rows: usize, labels: usize },
    #[error("C must be positive, got {0}")]
    BadC(f64),
    #[error("gamma must be positive, got {0}")]
    BadGamma(f64),
    #[error("unsupported schema version {0}")]
    SchemaVersion(u32),
    #[error(transparent)]
    Serde(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        match *self {
            Kernel::Linear => a.dot(&b),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

/// Kernel choice before seeing data; `Rbf { gamma: None }` resolves to
/// `1 / (d * var(X))` over all input entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    Rbf {
        #[serde(default)]
        gamma: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvcConfig {
    pub kernel: KernelSpec,
    pub c: f64,
    /// Stop when the maximal KKT violation `m - M` drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvcConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::Rbf { gamma: None },
            c: 1.0,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvcModel {
    pub schema_version: u32,
    pub kernel: Kernel,
    pub c: f64,
    pub support: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub coef: Vec<f64>,
    pub intercept: f64,
    /// `false` when the iteration cap was hit first.
    pub converged: bool,
    pub iterations: usize,
}

/// Full dual solution, kept for diagnostics and tests.
#[derive(Debug, Clone)]
pub struct SvcSolution {
    pub model: SvcModel,
    /// One multiplier per training row.
    pub alpha: Vec<f64>,
}

fn resolve_kernel(spec: KernelSpec, x: ArrayView2<'_, f64>) -> Result<Kernel, SvcError> {
    match spec {
        KernelSpec::Linear => Ok(Kernel::Linear),
        KernelSpec::Rbf { gamma: Some(g) } => {
            if g > 0.0 && g.is_finite() {
                Ok(Kernel::Rbf { gamma: g })
            } else {
                Err(SvcError::BadGamma(g))
            }
        }
        KernelSpec::Rbf { gamma: None } => {
            let n = x.len() as f64;
            let mean = x.sum() / n;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let g = if var > 0.0 { 1.0 / (x.ncols() as f64 * var) } else { 1.0 };
            Ok(Kernel::Rbf { gamma: g })
        }
    }
}

pub fn train_svc(x: ArrayView2<'_, f64>, labels: &[bool], cfg: &SvcConfig) -> Result<SvcModel, SvcError> {
    Ok(solve(x, labels, cfg)?.model)
}

pub fn solve(x: ArrayView2<'_, f64>, labels: &[bool], cfg: &SvcConfig) -> Result<SvcSolution, SvcError> {
    let n = x.nrows();
    if n != labels.len() {
        return Err(SvcError::Shape {
            rows: n,
            labels: labels.len(),
        });
    }
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(SvcError::BadC(cfg.c));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(SvcError::SingleClass);
    }
    let kernel = resolve_kernel(cfg.kernel, x)?;
    let c = cfg.c;
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();

    let mut q = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let v = y[i] * y[j] * kernel.eval(x.row(i), x.row(j));
            q[[i, j]] = v;
            q[[j, i]] = v;
        }
    }

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi < 0.0 && a < c) || (yi > 0.0 && a > 0.0);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if in_up(alpha[t], y[t]) && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i_sel = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut best = f64::INFINITY;
        let mut j_sel = usize::MAX;
        for t in 0..n {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            if i_sel != usize::MAX && v < gmax {
                let b = gmax - v;
                let mut a = q[[i_sel, i_sel]] + q[[t, t]] - 2.0 * y[i_sel] * y[t] * q[[i_sel, t]];
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -b * b / a;
                if obj < best {
                    best = obj;
                    j_sel = t;
                }
            }
        }
        if i_sel == usize::MAX || j_sel == usize::MAX || gmax - gmin < cfg.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = q[[i, i]] + q[[j, j]] + 2.0 * q[[i, j]];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = q[[i, i]] + q[[j, j]] - 2.0 * q[[i, j]];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q[[t, i]] * di + q[[t, j]] * dj;
        }
    }
    if !converged {
        log::warn!("SMO hit the iteration cap ({}) before converging", cfg.max_iter);
    }

    // Intercept: average over free multipliers, else the middle of the
    // feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };

    let mut support = Vec::new();
    let mut coef = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support.push(x.row(t).to_vec());
            coef.push(alpha[t] * y[t]);
        }
    }
    Ok(SvcSolution {
        model: SvcModel {
            schema_version: SVC_SCHEMA_VERSION,
            kernel,
            c,
            support,
            coef,
            intercept: -rho,
            converged,
            iterations,
        },
        alpha,
    })
}

impl SvcModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        let xv = ArrayView1::from(x);
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(sv, c)| c * self.kernel.eval(ArrayView1::from(sv.as_slice()), xv))
            .sum::<f64>()
            + self.intercept
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.decision(x) >= 0.0
    }

    pub fn accuracy(&self, x: ArrayView2<'_, f64>, labels: &[bool]) -> f64 {
        if labels.is_empty() {
            return f64::NAN;
        }
        let hits = x
            .rows()
            .into_iter()
            .zip(labels)
            .filter(|(row, &l)| self.predict(&row.to_vec()) == l)
            .count();
        hits as f64 / labels.len() as f64
    }

    pub fn to_json(&self) -> Result<String, SvcError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, SvcError> {
        let m: SvcModel = serde_json::from_str(text)?;
        if m.schema_version != SVC_SCHEMA_VERSION {
            return Err(SvcError::SchemaVersion(m.schema_version));
        }
        Ok(m)
    }
}

/// Keeps the candidates predicted valid, after the same `[0, 1]` range
/// normalization used for training.
pub fn svc_filter(model: &SvcModel, candidates: &[ParameterVector], ranges: &ParameterRanges) -> Vec<ParameterVector> {
    candidates
        .iter()
        .filter(|p| model.predict(&ranges.normalize(p)))
        .copied()
        .collect()
}
