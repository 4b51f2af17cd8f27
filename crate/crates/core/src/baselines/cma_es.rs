use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{drive, RunRecord, Tracker};
use crate::seeds;
use crate::simulator::SimError;

/// Initial step size on the unit cube.
const SIGMA0: f64 = 0.3;
/// Box handling: a sample outside the cube is redrawn up to this many
/// times, then clipped.
const RESAMPLES: usize = 100;

/// (mu/mu_w, lambda) CMA-ES state on the unit cube.
#[derive(Debug, Clone)]
pub struct CmaEs {
    n: usize,
    lambda: usize,
    weights: Vec<f64>,
    mueff: f64,
    cc: f64,
    cs: f64,
    c1: f64,
    cmu: f64,
    damps: f64,
    chi_n: f64,
    mean: DVector<f64>,
    sigma: f64,
    pc: DVector<f64>,
    ps: DVector<f64>,
    cov: DMatrix<f64>,
    basis: DMatrix<f64>,
    scales: DVector<f64>,
    generation: usize,
}

impl CmaEs {
    pub fn new(mean: &[f64], sigma: f64) -> Self {
        let n = mean.len();
        let nf = n as f64;
        let lambda = 4 + (3.0 * nf.ln()).floor() as usize;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu).map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mueff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let cc = (4.0 + mueff / nf) / (nf + 4.0 + 2.0 * mueff / nf);
        let cs = (mueff + 2.0) / (nf + mueff + 5.0);
        let c1 = 2.0 / ((nf + 1.3).powi(2) + mueff);
        let cmu = (1.0 - c1).min(2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nf + 2.0).powi(2) + mueff));
        let damps = 1.0 + 2.0 * (((mueff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Self {
            n,
            lambda,
            weights,
            mueff,
            cc,
            cs,
            c1,
            cmu,
            damps,
            chi_n,
            mean: DVector::from_column_slice(mean),
            sigma,
            pc: DVector::zeros(n),
            ps: DVector::zeros(n),
            cov: DMatrix::identity(n, n),
            basis: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
            generation: 0,
        }
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Draws one generation inside the unit cube.
    pub fn ask(&self, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let bd = &self.basis * DMatrix::from_diagonal(&self.scales);
        (0..self.lambda)
            .map(|_| {
                let mut x = DVector::zeros(self.n);
                for attempt in 0..=RESAMPLES {
                    let z = DVector::from_fn(self.n, |_, _| rng.sample::<f64, _>(StandardNormal));
                    x = &self.mean + (&bd * z) * self.sigma;
                    if x.iter().all(|v| (0.0..=1.0).contains(v)) || attempt == RESAMPLES {
                        break;
                    }
                }
                x.iter().map(|v| v.clamp(0.0, 1.0)).collect()
            })
            .collect()
    }

    /// Updates the distribution from a full generation of `(point, value)`.
    pub fn tell(&mut self, mut population: Vec<(Vec<f64>, f64)>) {
        population.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mu = self.weights.len();
        let old = self.mean.clone();
        let ys: Vec<DVector<f64>> = population[..mu]
            .iter()
            .map(|(x, _)| (DVector::from_column_slice(x) - &old) / self.sigma)
            .collect();
        let mut yw = DVector::zeros(self.n);
        for (w, y) in self.weights.iter().zip(&ys) {
            yw += y * *w;
        }
        self.mean = &old + &yw * self.sigma;

        let inv_sqrt = &self.basis * DMatrix::from_diagonal(&self.scales.map(|d| 1.0 / d)) * self.basis.transpose();
        self.ps = &self.ps * (1.0 - self.cs) + (&inv_sqrt * &yw) * (self.cs * (2.0 - self.cs) * self.mueff).sqrt();
        self.generation += 1;
        let decay = 1.0 - (1.0 - self.cs).powi(2 * self.generation as i32);
        let hsig = self.ps.norm() / decay.sqrt() / self.chi_n < 1.4 + 2.0 / (self.n as f64 + 1.0);
        let h = if hsig { 1.0 } else { 0.0 };
        self.pc = &self.pc * (1.0 - self.cc) + &yw * (h * (self.cc * (2.0 - self.cc) * self.mueff).sqrt());

        let mut rank_mu = DMatrix::zeros(self.n, self.n);
        for (w, y) in self.weights.iter().zip(&ys) {
            rank_mu += (y * y.transpose()) * *w;
        }
        let rank_one = &self.pc * self.pc.transpose() + &self.cov * ((1.0 - h) * self.cc * (2.0 - self.cc));
        self.cov = &self.cov * (1.0 - self.c1 - self.cmu) + rank_one * self.c1 + rank_mu * self.cmu;
        self.cov = (&self.cov + self.cov.transpose()) * 0.5;
        self.sigma *= ((self.cs / self.damps) * (self.ps.norm() / self.chi_n - 1.0)).exp();

        let eig = SymmetricEigen::new(self.cov.clone());
        self.basis = eig.eigenvectors;
        self.scales = eig.eigenvalues.map(|v| v.max(1e-300).sqrt());
    }

    /// Step size or conditioning has degenerated.
    pub fn stalled(&self) -> bool {
        let max = self.scales.max();
        let min = self.scales.min();
        self.sigma * max < 1e-12 || max / min > 1e7 || !self.sigma.is_finite()
    }
}

/// CMA-ES from a random mean with sigma 0.3 on the unit cube, default
/// population size `4 + floor(3 ln d)`, restarting from a fresh random
/// mean when the search stalls.
pub fn cma_es(tracker: Tracker<'_>, seed: u64) -> Result<RunRecord, SimError> {
    drive(tracker, "cma_es", seed, |t| {
        let mut rng = seeds::rng(seed, "cma_es", 0);
        loop {
            let mean: Vec<f64> = (0..t.dim()).map(|_| rng.gen::<f64>()).collect();
            let mut es = CmaEs::new(&mean, SIGMA0);
            while !es.stalled() {
                let pop = es.ask(&mut rng);
                let mut scored = Vec::with_capacity(pop.len());
                for x in pop {
                    match t.eval(&x) {
                        Ok(f) => scored.push((x, f)),
                        Err(h) => return h,
                    }
                }
                es.tell(scored);
            }
        }
    })
}
