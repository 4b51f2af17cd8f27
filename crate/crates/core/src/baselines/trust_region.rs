use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{drive, Halt, RunRecord, Tracker};
use crate::seeds;
use crate::simulator::SimError;

/// Forward-difference step on the unit cube.
const FD_STEP: f64 = 1e-7;
const RADIUS0: f64 = 0.1;
const RADIUS_MAX: f64 = 1.0;
const SHRINK_BELOW: f64 = 0.25;
const GROW_ABOVE: f64 = 0.75;
const ACCEPT: f64 = 1e-4;

/// Forward-difference gradient; steps that would leave the cube go
/// backwards instead.
fn gradient(t: &mut Tracker<'_>, x: &DVector<f64>, fx: f64) -> Result<DVector<f64>, Halt> {
    let mut g = DVector::zeros(x.len());
    for i in 0..x.len() {
        let mut y = x.clone();
        let h = if x[i] + FD_STEP <= 1.0 { FD_STEP } else { -FD_STEP };
        y[i] += h;
        g[i] = (t.eval(y.as_slice())? - fx) / h;
    }
    Ok(g)
}

/// Dogleg step for the model `g.p + p.B.p / 2` within radius `delta`.
fn dogleg(g: &DVector<f64>, b: &DMatrix<f64>, delta: f64) -> DVector<f64> {
    let gnorm = g.norm();
    if gnorm == 0.0 {
        return DVector::zeros(g.len());
    }
    let full = b.clone().cholesky().map(|c| -c.solve(g));
    if let Some(pb) = &full {
        if pb.norm() <= delta {
            return pb.clone();
        }
    }
    let gbg = g.dot(&(b * g));
    let cauchy_len = if gbg > 0.0 { gnorm * gnorm / gbg } else { f64::INFINITY };
    let pu = -g * cauchy_len;
    if pu.norm() >= delta || full.is_none() {
        return -g * (delta / gnorm);
    }
    let pb = full.expect("checked above");
    let d = &pb - &pu;
    // |pu + tau d| = delta
    let (a, bq, c) = (d.dot(&d), 2.0 * pu.dot(&d), pu.dot(&pu) - delta * delta);
    let tau = (-bq + (bq * bq - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a);
    pu + d * tau
}

/// Trust-region method on the unit cube: forward-difference gradients,
/// a BFGS-updated quadratic model, dogleg steps clipped to the box, and
/// radius updates at ratios 0.25 / 0.75. Restarts from a random point once
/// the radius collapses.
pub fn trust_region(tracker: Tracker<'_>, start: &[f64], seed: u64) -> Result<RunRecord, SimError> {
    let u0 = tracker.to_unit(start);
    drive(tracker, "trust_region", seed, |t| {
        let n = t.dim();
        let mut rng = seeds::rng(seed, "trust_region", 0);
        let mut x = DVector::from_vec(u0);
        loop {
            if let Err(h) = run_from(t, &x) {
                return h;
            }
            x = DVector::from_fn(n, |_, _| rng.gen::<f64>());
        }
    })
}

/// Iterates until the radius collapses; only returns on halt or collapse.
fn run_from(t: &mut Tracker<'_>, x0: &DVector<f64>) -> Result<(), Halt> {
    let n = x0.len();
    let mut x = x0.clone();
    let mut fx = t.eval(x.as_slice())?;
    let mut g = gradient(t, &x, fx)?;
    let mut b = DMatrix::identity(n, n);
    let mut delta = RADIUS0;
    while delta > 1e-10 && g.norm() > 1e-12 {
        let mut p = dogleg(&g, &b, delta);
        let trial = (&x + &p).map(|v| v.clamp(0.0, 1.0));
        p = &trial - &x;
        let pred = -(g.dot(&p) + 0.5 * p.dot(&(&b * &p)));
        if p.norm() == 0.0 || pred <= 0.0 {
            delta *= SHRINK_BELOW;
            continue;
        }
        let ft = t.eval(trial.as_slice())?;
        let rho = (fx - ft) / pred;
        if rho < SHRINK_BELOW {
            delta *= SHRINK_BELOW;
        } else if rho > GROW_ABOVE && p.norm() >= 0.99 * delta {
            delta = (2.0 * delta).min(RADIUS_MAX);
        }
        if rho > ACCEPT {
            let gt = gradient(t, &trial, ft)?;
            let y = &gt - &g;
            let sy = p.dot(&y);
            if sy > 1e-12 * p.norm() * y.norm() {
                let bp = &b * &p;
                b += (&y * y.transpose()) / sy - (&bp * bp.transpose()) / p.dot(&bp);
            }
            x = trial;
            fx = ft;
            g = gt;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dogleg_takes_newton_step_inside_radius() {
        let g = DVector::from_vec(vec![1.0, -2.0]);
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let p = dogleg(&g, &b, 10.0);
        assert!((p - DVector::from_vec(vec![-0.5, 0.5])).norm() < 1e-12);
    }

    #[test]
    fn dogleg_stays_on_radius() {
        let g = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let b = DMatrix::identity(3, 3) * 0.1;
        for delta in [0.01, 0.5, 3.0] {
            assert!((dogleg(&g, &b, delta).norm() - delta).abs() < 1e-9);
        }
    }
}
