use rand::Rng;

use super::{drive, RunRecord, Tracker};
use crate::seeds;
use crate::simulator::SimError;

const PARTICLES: usize = 30;
const INERTIA: f64 = 0.7;
const COGNITIVE: f64 = 1.5;
const SOCIAL: f64 = 1.5;
/// Velocity bound as a fraction of each coordinate's range.
const VMAX: f64 = 0.2;

/// Global-best particle swarm with 30 particles on the unit cube.
/// Positions are clipped to the box and the clipped velocity component is
/// zeroed. The swarm re-initializes when it has collapsed.
pub fn pso(tracker: Tracker<'_>, seed: u64) -> Result<RunRecord, SimError> {
    drive(tracker, "pso", seed, |t| {
        let n = t.dim();
        let mut rng = seeds::rng(seed, "pso", 0);
        loop {
            let mut x: Vec<Vec<f64>> = (0..PARTICLES).map(|_| (0..n).map(|_| rng.gen::<f64>()).collect()).collect();
            let mut v: Vec<Vec<f64>> = (0..PARTICLES)
                .map(|_| (0..n).map(|_| rng.gen_range(-VMAX..VMAX)).collect())
                .collect();
            let mut pbest = x.clone();
            let mut pval = vec![f64::INFINITY; PARTICLES];
            let (mut g, mut gval) = (x[0].clone(), f64::INFINITY);
            loop {
                for i in 0..PARTICLES {
                    let f = match t.eval(&x[i]) {
                        Ok(f) => f,
                        Err(h) => return h,
                    };
                    if f < pval[i] {
                        pval[i] = f;
                        pbest[i] = x[i].clone();
                    }
                }
                for i in 0..PARTICLES {
                    if pval[i] < gval {
                        gval = pval[i];
                        g = pbest[i].clone();
                    }
                }
                let mut extent: f64 = 0.0;
                for i in 0..PARTICLES {
                    for d in 0..n {
                        let r1: f64 = rng.gen();
                        let r2: f64 = rng.gen();
                        let vel = INERTIA * v[i][d] + COGNITIVE * r1 * (pbest[i][d] - x[i][d]) + SOCIAL * r2 * (g[d] - x[i][d]);
                        v[i][d] = vel.clamp(-VMAX, VMAX);
                        let pos = x[i][d] + v[i][d];
                        if !(0.0..=1.0).contains(&pos) {
                            v[i][d] = 0.0;
                        }
                        x[i][d] = pos.clamp(0.0, 1.0);
                        extent = extent.max((x[i][d] - g[d]).abs()).max(v[i][d].abs());
                    }
                }
                if extent < 1e-12 {
                    break;
                }
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{FnObjective, HaltReason};

    #[test]
    fn respects_bounds_and_budget() {
        let obj = FnObjective::sphere(4, 1.0, -1.0);
        let t = Tracker::new(&obj, 500, true).keep_points();
        let r = pso(t, 2).unwrap();
        assert_eq!(r.evaluations, 500);
        assert!(r.points.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(r.halt, HaltReason::Budget);
    }
}
