use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{drive, RunRecord, Tracker};
use crate::seeds;
use crate::simulator::SimError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaParams {
    pub population: usize,
    pub crossover_prob: f64,
    /// Per-variable mutation probability; `None` means `1 / d`.
    pub mutation_prob: Option<f64>,
    pub eta_crossover: f64,
    pub eta_mutation: f64,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population: 30,
            crossover_prob: 0.9,
            mutation_prob: None,
            eta_crossover: 15.0,
            eta_mutation: 20.0,
        }
    }
}

fn tournament<'a>(pop: &'a [(Vec<f64>, f64)], rng: &mut ChaCha8Rng) -> &'a [f64] {
    let a = &pop[rng.gen_range(0..pop.len())];
    let b = &pop[rng.gen_range(0..pop.len())];
    if a.1 <= b.1 {
        &a.0
    } else {
        &b.0
    }
}

/// Bounded simulated binary crossover on `[0, 1]`, applied per variable
/// with probability 0.5.
fn sbx(p1: &[f64], p2: &[f64], eta: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    for i in 0..p1.len() {
        if rng.gen::<f64>() > 0.5 || (p1[i] - p2[i]).abs() < 1e-14 {
            continue;
        }
        let (y1, y2) = if p1[i] < p2[i] { (p1[i], p2[i]) } else { (p2[i], p1[i]) };
        let u: f64 = rng.gen();
        let child = |beta: f64, sign: f64| {
            let alpha = 2.0 - beta.powf(-(eta + 1.0));
            let bq = if u <= 1.0 / alpha {
                (u * alpha).powf(1.0 / (eta + 1.0))
            } else {
                (1.0 / (2.0 - u * alpha)).powf(1.0 / (eta + 1.0))
            };
            (0.5 * ((y1 + y2) + sign * bq * (y2 - y1))).clamp(0.0, 1.0)
        };
        let lo = child(1.0 + 2.0 * y1 / (y2 - y1), -1.0);
        let hi = child(1.0 + 2.0 * (1.0 - y2) / (y2 - y1), 1.0);
        if rng.gen::<bool>() {
            c1[i] = lo;
            c2[i] = hi;
        } else {
            c1[i] = hi;
            c2[i] = lo;
        }
    }
    (c1, c2)
}

/// Bounded polynomial mutation on `[0, 1]`.
fn mutate(x: &mut [f64], prob: f64, eta: f64, rng: &mut ChaCha8Rng) {
    for v in x.iter_mut() {
        if rng.gen::<f64>() >= prob {
            continue;
        }
        let y = *v;
        let u: f64 = rng.gen();
        let p = 1.0 / (eta + 1.0);
        let dq = if u < 0.5 {
            let b = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - y).powf(eta + 1.0);
            b.powf(p) - 1.0
        } else {
            let b = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * y.powf(eta + 1.0);
            1.0 - b.powf(p)
        };
        *v = (y + dq).clamp(0.0, 1.0);
    }
}

/// Real-coded GA: binary tournament, SBX, polynomial mutation, and
/// (mu + lambda) survival of the best `population` from parents and
/// offspring.
pub fn ga(tracker: Tracker<'_>, seed: u64, params: GaParams) -> Result<RunRecord, SimError> {
    drive(tracker, "ga", seed, |t| {
        let n = t.dim();
        let size = params.population.max(2);
        let pm = params.mutation_prob.unwrap_or(1.0 / n as f64);
        let mut rng = seeds::rng(seed, "ga", 0);
        let mut pop: Vec<(Vec<f64>, f64)> = Vec::with_capacity(size);
        for _ in 0..size {
            let x: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            match t.eval(&x) {
                Ok(f) => pop.push((x, f)),
                Err(h) => return h,
            }
        }
        loop {
            let mut children = Vec::with_capacity(size);
            while children.len() < size {
                let a = tournament(&pop, &mut rng).to_vec();
                let b = tournament(&pop, &mut rng).to_vec();
                let (mut c1, mut c2) = if rng.gen::<f64>() < params.crossover_prob {
                    sbx(&a, &b, params.eta_crossover, &mut rng)
                } else {
                    (a, b)
                };
                mutate(&mut c1, pm, params.eta_mutation, &mut rng);
                mutate(&mut c2, pm, params.eta_mutation, &mut rng);
                children.push(c1);
                if children.len() < size {
                    children.push(c2);
                }
            }
            for c in children {
                match t.eval(&c) {
                    Ok(f) => pop.push((c, f)),
                    Err(h) => return h,
                }
            }
            pop.sort_by(|a, b| a.1.total_cmp(&b.1));
            pop.truncate(size);
        }
    })
}
