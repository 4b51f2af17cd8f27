use rand::Rng;

use super::{drive, Halt, RunRecord, Tracker};
use crate::seeds;
use crate::simulator::SimError;

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;
/// Initial simplex edge as a fraction of each coordinate's range.
const STEP: f64 = 0.05;

/// Nelder-Mead simplex from `start`. Vertices are clipped to the box.
/// When the simplex collapses it restarts around the best vertex, and
/// after a restart that found nothing better, from a random point.
pub fn nelder_mead(tracker: Tracker<'_>, start: &[f64], seed: u64) -> Result<RunRecord, SimError> {
    let u0 = tracker.to_unit(start);
    drive(tracker, "nelder_mead", seed, |t| {
        let mut rng = seeds::rng(seed, "nelder_mead", 0);
        let mut origin = u0;
        let mut last_best = f64::INFINITY;
        loop {
            let (x, f) = match run_simplex(t, &origin) {
                Ok(v) => v,
                Err(h) => return h,
            };
            if f < last_best {
                last_best = f;
                origin = x;
            } else {
                origin = (0..t.dim()).map(|_| rng.gen::<f64>()).collect();
                last_best = f64::INFINITY;
            }
        }
    })
}

fn clip(v: &mut [f64]) {
    for x in v {
        *x = x.clamp(0.0, 1.0);
    }
}

fn combine(a: &[f64], b: &[f64], coef: f64) -> Vec<f64> {
    // a + coef * (a - b), clipped
    let mut v: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + coef * (x - y)).collect();
    clip(&mut v);
    v
}

/// One simplex run until it collapses; returns the best vertex.
fn run_simplex(t: &mut Tracker<'_>, origin: &[f64]) -> Result<(Vec<f64>, f64), Halt> {
    let n = t.dim();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = t.eval(origin)?;
    simplex.push((origin.to_vec(), f0));
    for i in 0..n {
        let mut v = origin.to_vec();
        v[i] = if v[i] + STEP <= 1.0 { v[i] + STEP } else { v[i] - STEP };
        let f = t.eval(&v)?;
        simplex.push((v, f));
    }
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let size = simplex[1..]
            .iter()
            .flat_map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let spread = simplex[n].1 - simplex[0].1;
        if size < 1e-10 || (spread.abs() < 1e-14 && size < 1e-6) {
            return Ok(simplex.swap_remove(0));
        }
        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].0.clone();
        let xr = combine(&centroid, &worst, REFLECT);
        let fr = t.eval(&xr)?;
        if fr < simplex[0].1 {
            let xe = combine(&centroid, &worst, EXPAND);
            let fe = t.eval(&xe)?;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        // contraction: outside if the reflection beat the worst vertex
        let (xc, fc) = if fr < simplex[n].1 {
            let xc = combine(&centroid, &worst, REFLECT * CONTRACT);
            let fc = t.eval(&xc)?;
            (xc, fc)
        } else {
            let xc = combine(&centroid, &worst, -CONTRACT);
            let fc = t.eval(&xc)?;
            (xc, fc)
        };
        if fc < fr.min(simplex[n].1) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for (v, f) in simplex[1..].iter_mut() {
            for (x, b) in v.iter_mut().zip(&best) {
                *x = b + SHRINK * (*x - b);
            }
            *f = t.eval(v)?;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{FnObjective, HaltReason};

    #[test]
    fn sphere_2d_from_one_one() {
        let obj = FnObjective::sphere(2, 5.0, 1e-6);
        let r = nelder_mead(Tracker::new(&obj, 200, true), &[1.0, 1.0], 0).unwrap();
        assert_eq!(r.halt, HaltReason::Goal, "best {} after {}", r.best_value, r.evaluations);
    }

    #[test]
    fn start_at_optimum_is_first_call() {
        let obj = FnObjective::sphere(3, 5.0, 1e-12);
        let r = nelder_mead(Tracker::new(&obj, 100, true), &[0.0; 3], 0).unwrap();
        assert_eq!(r.evals_to_goal, Some(1));
    }

    #[test]
    fn spends_exact_budget_without_goal() {
        let obj = FnObjective::sphere(3, 5.0, -1.0);
        let r = nelder_mead(Tracker::new(&obj, 137, true), &[1.0, 2.0, 3.0], 0).unwrap();
        assert_eq!(r.evaluations, 137);
        assert_eq!(r.trace.len(), 137);
        assert_eq!(r.halt, HaltReason::Budget);
    }
}
