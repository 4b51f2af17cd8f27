//! Discriminator and generator training and candidate sampling.
//!
//! Both networks work in the unit cube: parameter vectors are mapped
//! affinely onto `[0, 1]^20` with [`ParameterRanges::normalize`], and the
//! generator's sigmoid outputs are mapped back with `denormalize`.

use std::ops::ControlFlow;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{check_geometry, ConnectionMap, GeometryError, ParameterRanges, ParameterVector, PARAM_COUNT};
use crate::neuralnet::{
    discriminator_specs, fit_bce_with, generator_specs, loss_and_grad, Loss, Mlp, Mode, NnError, OptimizerKind,
    OptimizerState, TrainConfig,
};

pub const CANDIDATE_SCHEMA_VERSION: u32 = 1;

/// Two candidates closer than this fraction of every range width are
/// treated as the same design.
pub const DEDUPE_RELATIVE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("training data needs both classes (valid: {valid}, invalid: {invalid})")]
    SingleClass { valid: usize, invalid: usize },
    #[error("{params} parameter vectors but {labels} labels")]
    Shape { params: usize, labels: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Stratified train/test partition of labeled parameter vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub x: Vec<ParameterVector>,
    pub y: Vec<bool>,
    /// Indices into `x`/`y`, ascending.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub test_fraction: f64,
}

impl SplitDataset {
    /// Holds out `round(test_fraction * n_class)` rows of each class, but
    /// always leaves at least one row of each class for training and, when
    /// a class has two or more rows, puts at least one in the test split.
    pub fn stratified(x: Vec<ParameterVector>, y: Vec<bool>, test_fraction: f64, seed: u64) -> Result<Self, GenError> {
        if x.len() != y.len() {
            return Err(GenError::Shape {
                params: x.len(),
                labels: y.len(),
            });
        }
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(GenError::Config(format!("test fraction {test_fraction} outside [0, 1)")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for class in [true, false] {
            let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
            idx.shuffle(&mut rng);
            let n = idx.len();
            let mut n_test = (test_fraction * n as f64).round() as usize;
            if test_fraction > 0.0 && n >= 2 {
                n_test = n_test.max(1);
            }
            n_test = n_test.min(n.saturating_sub(1));
            test.extend_from_slice(&idx[..n_test]);
            train.extend_from_slice(&idx[n_test..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok(Self {
            x,
            y,
            train,
            test,
            test_fraction,
        })
    }

    pub fn part(&self, idx: &[usize]) -> (Vec<ParameterVector>, Vec<bool>) {
        (idx.iter().map(|&i| self.x[i]).collect(), idx.iter().map(|&i| self.y[i]).collect())
    }

    pub fn class_counts(&self, idx: &[usize]) -> (usize, usize) {
        let valid = idx.iter().filter(|&&i| self.y[i]).count();
        (valid, idx.len() - valid)
    }
}

/// Rows of normalized parameters.
pub fn unit_matrix(ranges: &ParameterRanges, params: &[ParameterVector]) -> Array2<f64> {
    let mut out = Array2::zeros((params.len(), PARAM_COUNT));
    for (mut row, p) in out.axis_iter_mut(Axis(0)).zip(params) {
        row.assign(&ndarray::ArrayView1::from(&ranges.normalize(p)));
    }
    out
}

fn label_column(y: &[bool]) -> Array2<f64> {
    Array2::from_shape_fn((y.len(), 1), |(i, _)| if y[i] { 1.0 } else { 0.0 })
}

/// Probability-of-valid network over normalized parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub model: Mlp,
    pub ranges: ParameterRanges,
}

impl Discriminator {
    pub fn new(widths: [usize; 3], ranges: ParameterRanges, seed: u64) -> Result<Self, GenError> {
        Ok(Self {
            model: Mlp::new(&discriminator_specs(PARAM_COUNT, widths), seed)?,
            ranges,
        })
    }

    /// Scores for rows that are already normalized.
    pub fn score_unit(&self, unit: ArrayView2<'_, f64>) -> Result<Vec<f64>, GenError> {
        Ok(self.model.predict(unit)?.iter().copied().collect())
    }

    pub fn score(&self, params: &[ParameterVector]) -> Result<Vec<f64>, GenError> {
        self.score_unit(unit_matrix(&self.ranges, params).view())
    }

    /// Hard label: valid iff the score is at least 0.5.
    pub fn predict(&self, params: &[ParameterVector]) -> Result<Vec<bool>, GenError> {
        Ok(self.score(params)?.into_iter().map(|s| s >= 0.5).collect())
    }

    pub fn accuracy(&self, params: &[ParameterVector], labels: &[bool]) -> Result<f64, GenError> {
        if params.is_empty() {
            return Ok(f64::NAN);
        }
        let pred = self.predict(params)?;
        Ok(pred.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub train: TrainConfig,
    /// Share of the training split held out to pick widths and epochs.
    pub validation_fraction: f64,
    /// Validation accuracy is measured every this many epochs.
    pub eval_every: usize,
}

impl DiscriminatorConfig {
    /// Adam at `1e-5`, decoupled decay 0.05, batch 1, up to 1000 epochs.
    pub fn full() -> Self {
        Self {
            train: TrainConfig::discriminator_default(),
            validation_fraction: 0.2,
            eval_every: 10,
        }
    }

    /// Adam at `1e-3` with strong decoupled decay (2.0), batch 8, 200
    /// epochs; the epoch count is fixed and only widths are selected.
    pub fn desk() -> Self {
        Self {
            train: TrainConfig {
                optimizer: OptimizerKind::adam(1e-3, 2.0),
                batch_size: 8,
                max_epochs: 200,
                seed: 0,
            },
            validation_fraction: 0.2,
            eval_every: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedDiscriminator {
    pub disc: Discriminator,
    pub widths: [usize; 3],
    pub epochs: usize,
    pub train_accuracy: f64,
    /// Accuracy on the held-out test split (NaN when it is empty).
    pub test_accuracy: f64,
    /// Validation accuracy that selected `widths` and `epochs`.
    pub validation_accuracy: f64,
}

fn check_classes(y: &[bool]) -> Result<(), GenError> {
    let valid = y.iter().filter(|&&v| v).count();
    if valid == 0 || valid == y.len() {
        return Err(GenError::SingleClass {
            valid,
            invalid: y.len() - valid,
        });
    }
    Ok(())
}

/// Trains one width triple on the train split for exactly `epochs`.
pub fn train_discriminator(
    data: &SplitDataset,
    ranges: &ParameterRanges,
    widths: [usize; 3],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainedDiscriminator, GenError> {
    let (tx, ty) = data.part(&data.train);
    check_classes(&ty)?;
    let mut disc = Discriminator::new(widths, ranges.clone(), seed)?;
    let xu = unit_matrix(ranges, &tx);
    let yl = label_column(&ty);
    let mut tc = *cfg;
    tc.seed = seed;
    let report = fit_bce_with(&mut disc.model, xu.view(), yl.view(), &tc, |_, _, _| ControlFlow::Continue(()))?;
    let (sx, sy) = data.part(&data.test);
    Ok(TrainedDiscriminator {
        train_accuracy: disc.accuracy(&tx, &ty)?,
        test_accuracy: disc.accuracy(&sx, &sy)?,
        disc,
        widths,
        epochs: report.epochs,
        validation_accuracy: f64::NAN,
    })
}

/// Picks a width triple and epoch count by accuracy on a validation share
/// of the train split, then retrains on the whole train split and reports
/// held-out test accuracy.
pub fn tune_discriminator(
    data: &SplitDataset,
    ranges: &ParameterRanges,
    grid: &[[usize; 3]],
    cfg: &DiscriminatorConfig,
    seed: u64,
) -> Result<TrainedDiscriminator, GenError> {
    if grid.is_empty() {
        return Err(GenError::Config("empty width grid".into()));
    }
    let (tx, ty) = data.part(&data.train);
    check_classes(&ty)?;
    let inner = SplitDataset::stratified(tx, ty, cfg.validation_fraction, seed ^ 0x5eed)?;
    let (fx, fy) = inner.part(&inner.train);
    let (vx, vy) = inner.part(&inner.test);
    let usable = !vx.is_empty() && check_classes(&fy).is_ok();

    let mut best = (grid[0], cfg.train.max_epochs, f64::NAN);
    if usable && (grid.len() > 1 || cfg.eval_every < cfg.train.max_epochs) {
        let fu = unit_matrix(ranges, &fx);
        let fl = label_column(&fy);
        let vu = unit_matrix(ranges, &vx);
        let mut best_key = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (gi, &w) in grid.iter().enumerate() {
            let mut model = Mlp::new(&discriminator_specs(PARAM_COUNT, w), seed.wrapping_add(gi as u64))?;
            let mut tc = cfg.train;
            tc.seed = seed.wrapping_add(gi as u64);
            let every = cfg.eval_every.max(1);
            fit_bce_with(&mut model, fu.view(), fl.view(), &tc, |epoch, _, m| {
                if (epoch + 1) % every == 0 || epoch + 1 == tc.max_epochs {
                    if let Ok(out) = m.predict(vu.view()) {
                        let (mut hits, mut nll) = (0usize, 0.0);
                        for (p, &l) in out.iter().zip(&vy) {
                            hits += usize::from((*p >= 0.5) == l);
                            let p = p.clamp(1e-12, 1.0 - 1e-12);
                            nll -= if l { p.ln() } else { (1.0 - p).ln() };
                        }
                        let key = (hits as f64 / vy.len() as f64, -nll / vy.len() as f64);
                        if key > best_key {
                            best_key = key;
                            best = (w, epoch + 1, key.0);
                        }
                    }
                }
                ControlFlow::Continue(())
            })?;
        }
    }
    let (widths, epochs, val_acc) = best;
    let mut tc = cfg.train;
    tc.max_epochs = epochs;
    let mut out = train_discriminator(data, ranges, widths, &tc, seed)?;
    out.validation_accuracy = val_acc;
    Ok(out)
}

/// Network from uniform noise to the unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub model: Mlp,
    pub noise_dim: usize,
}

impl Generator {
    pub fn new(noise_dim: usize, hidden: [usize; 3], seed: u64) -> Result<Self, GenError> {
        Ok(Self {
            model: Mlp::new(&generator_specs(noise_dim, hidden, PARAM_COUNT), seed)?,
            noise_dim,
        })
    }

    /// `k` rows of `Uniform(-1, 1)` noise.
    pub fn sample_noise<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Array2<f64> {
        Array2::from_shape_simple_fn((k, self.noise_dim), || rng.gen_range(-1.0..1.0))
    }

    /// Eval-mode outputs in `(0, 1)^20`.
    pub fn generate(&self, noise: ArrayView2<'_, f64>) -> Result<Array2<f64>, GenError> {
        Ok(self.model.predict(noise)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub hidden: [usize; 3],
    pub noise_dim: usize,
    /// One epoch is one minibatch of fresh noise.
    pub train: TrainConfig,
    /// Stop once the mean score on the probe reaches this.
    pub stop_threshold: f64,
    pub probe_size: usize,
    pub probe_every: usize,
    /// Minimize `-log D` instead of `log(1 - D)`.
    pub nonsaturating: bool,
}

impl GeneratorConfig {
    /// Widths 128/256/512, SGD at `1e-4`, batch 500, up to 30000 epochs.
    pub fn full() -> Self {
        Self {
            hidden: [128, 256, 512],
            noise_dim: PARAM_COUNT,
            train: TrainConfig::generator_default(),
            stop_threshold: 0.95,
            probe_size: 500,
            probe_every: 50,
            nonsaturating: false,
        }
    }

    /// Narrower network, SGD at `1e-2` with batch 128 and the
    /// nonsaturating loss, which keeps a gradient when the discriminator
    /// rejects the untrained generator's outputs.
    pub fn desk() -> Self {
        Self {
            hidden: [32, 64, 128],
            noise_dim: PARAM_COUNT,
            train: TrainConfig {
                optimizer: OptimizerKind::Sgd { lr: 0.01 },
                batch_size: 128,
                max_epochs: 600,
                seed: 0,
            },
            stop_threshold: 0.95,
            probe_size: 500,
            probe_every: 10,
            nonsaturating: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorReport {
    pub epochs: usize,
    /// Epoch of the returned snapshot (0 = untrained).
    pub best_epoch: usize,
    /// Probe loss before the first update.
    pub initial_loss: f64,
    /// Probe loss of the returned snapshot.
    pub final_loss: f64,
    pub probe_mean_score: f64,
    pub reached_threshold: bool,
    /// Every probe score was below 1e-6 at the start, so the saturating
    /// loss had almost no gradient.
    pub saturated: bool,
}

/// Mean probe score and probe loss. Outputs rejected by `feasible` score
/// 0 in the mean; the loss is the plain objective.
fn probe<F: Fn(&ParameterVector) -> bool>(
    gen: &Generator,
    disc: &Discriminator,
    noise: &Array2<f64>,
    nonsaturating: bool,
    feasible: &F,
) -> Result<(f64, f64), GenError> {
    let unit = gen.generate(noise.view())?;
    let scores = disc.score_unit(unit.view())?;
    let n = scores.len() as f64;
    let mut mean = 0.0;
    for (row, &s) in unit.rows().into_iter().zip(scores.iter()) {
        let p = disc.ranges.denormalize(row.as_slice().expect("row-major output"))?;
        if feasible(&p) {
            mean += s;
        }
    }
    mean /= n;
    let loss = scores
        .iter()
        .map(|&s| {
            let s = s.clamp(1e-300, 1.0 - 1e-16);
            if nonsaturating {
                -s.ln()
            } else {
                (1.0 - s).ln()
            }
        })
        .sum::<f64>()
        / n;
    Ok((mean, loss))
}

/// Trains a generator against a frozen discriminator.
pub fn train_generator(disc: &Discriminator, cfg: &GeneratorConfig, seed: u64) -> Result<(Generator, GeneratorReport), GenError> {
    train_generator_with(disc, cfg, seed, None, |_| true)
}

/// Trains a generator against a frozen discriminator, probing every
/// `probe_every` epochs. Probe outputs rejected by `feasible` count as
/// score 0, training stops once the probe mean reaches the threshold, and
/// the snapshot with the best probe mean is returned. Training continues
/// from `init` when given (its shape must match `cfg`).
pub fn train_generator_with<F: Fn(&ParameterVector) -> bool>(
    disc: &Discriminator,
    cfg: &GeneratorConfig,
    seed: u64,
    init: Option<&Generator>,
    feasible: F,
) -> Result<(Generator, GeneratorReport), GenError> {
    cfg.train.validate()?;
    if cfg.noise_dim == 0 || cfg.probe_size == 0 {
        return Err(GenError::Config("noise dimension and probe size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gen = Generator::new(cfg.noise_dim, cfg.hidden, rng.gen())?;
    if let Some(g) = init {
        if g.noise_dim != cfg.noise_dim || g.model.params_flat().len() != gen.model.params_flat().len() {
            return Err(GenError::Config("warm-start generator does not match the configured shape".into()));
        }
        gen = g.clone();
    }
    let probe_noise = gen.sample_noise(cfg.probe_size, &mut rng);
    let (start_mean, initial_loss) = probe(&gen, disc, &probe_noise, cfg.nonsaturating, &feasible)?;
    let saturated = {
        let scores = disc.score_unit(gen.generate(probe_noise.view())?.view())?;
        scores.iter().all(|&s| s < 1e-6)
    };
    if saturated {
        log::warn!("discriminator is saturated at 0 on the generator's initial outputs");
    }
    let mut opt = OptimizerState::new(cfg.train.optimizer, &gen.model);
    let loss = Loss::Generator {
        discriminator: &disc.model,
        nonsaturating: cfg.nonsaturating,
    };
    let mut best = (start_mean, initial_loss, 0, gen.model.clone());
    let mut epochs = 0;
    let mut reached = start_mean >= cfg.stop_threshold;
    while !reached && epochs < cfg.train.max_epochs {
        let noise = gen.sample_noise(cfg.train.batch_size, &mut rng);
        let eval = loss_and_grad(&gen.model, noise.view(), Mode::Train, loss)?;
        gen.model.absorb_batch_stats(&eval.cache);
        opt.step(&mut gen.model, &eval.grads);
        epochs += 1;
        if epochs % cfg.probe_every.max(1) == 0 || epochs == cfg.train.max_epochs {
            if !gen.model.all_finite() {
                return Err(NnError::NonFiniteLoss(f64::NAN).into());
            }
            let (mean, l) = probe(&gen, disc, &probe_noise, cfg.nonsaturating, &feasible)?;
            reached = mean >= cfg.stop_threshold;
            if mean > best.0 {
                best = (mean, l, epochs, gen.model.clone());
            }
        }
    }
    let (mean, final_loss, best_epoch, model) = best;
    gen.model = model;
    Ok((
        gen,
        GeneratorReport {
            epochs,
            best_epoch,
            initial_loss,
            final_loss,
            probe_mean_score: mean,
            reached_threshold: reached,
            saturated,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub params: ParameterVector,
    pub noise: Vec<f64>,
    pub disc_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateBatch {
    pub candidates: Vec<Candidate>,
    /// Noise vectors consumed.
    pub draws: usize,
    pub rejected_geometry: usize,
    pub rejected_duplicate: usize,
    pub rejected_filter: usize,
    /// Fewer than the requested number survived within the draw budget.
    pub shortfall: bool,
}

/// Everything [`sample_candidates`] needs besides the generator.
pub struct SamplingContext<'a> {
    pub ranges: &'a ParameterRanges,
    pub conn: &'a ConnectionMap,
    pub discriminator: Option<&'a Discriminator>,
    /// Designs that count as already taken for deduplication.
    pub existing: &'a [ParameterVector],
    pub max_draws: usize,
}

fn same_design(a: &ParameterVector, b: &ParameterVector, ranges: &ParameterRanges) -> bool {
    a.0.iter()
        .zip(&b.0)
        .zip(ranges.iter())
        .all(|((x, y), iv)| (x - y).abs() <= DEDUPE_RELATIVE_TOL * iv.width())
}

/// Draws noise, maps it through the generator onto the ranges, and keeps
/// checker-passing, non-duplicate vectors accepted by `filter`, until `k`
/// survive or `max_draws` noise vectors have been used.
pub fn sample_candidates<R, F>(
    gen: &Generator,
    k: usize,
    ctx: &SamplingContext<'_>,
    rng: &mut R,
    mut filter: F,
) -> Result<CandidateBatch, GenError>
where
    R: Rng + ?Sized,
    F: FnMut(&ParameterVector) -> bool,
{
    if k == 0 {
        return Err(GenError::Config("candidate count must be at least 1".into()));
    }
    let mut batch = CandidateBatch {
        candidates: Vec::with_capacity(k),
        draws: 0,
        rejected_geometry: 0,
        rejected_duplicate: 0,
        rejected_filter: 0,
        shortfall: false,
    };
    while batch.candidates.len() < k && batch.draws < ctx.max_draws {
        let chunk = (k - batch.candidates.len()).max(16).min(ctx.max_draws - batch.draws);
        let noise = gen.sample_noise(chunk, rng);
        let unit = gen.generate(noise.view())?;
        for (z, u) in noise.rows().into_iter().zip(unit.rows()) {
            if batch.candidates.len() >= k {
                break;
            }
            batch.draws += 1;
            let params = ctx.ranges.denormalize(&u.to_vec()).map_err(|e| GenError::Config(e.to_string()))?;
            if !check_geometry(&params, ctx.conn).is_pass() {
                batch.rejected_geometry += 1;
                continue;
            }
            let dup = ctx.existing.iter().any(|e| same_design(e, &params, ctx.ranges))
                || batch.candidates.iter().any(|c| same_design(&c.params, &params, ctx.ranges));
            if dup {
                batch.rejected_duplicate += 1;
                continue;
            }
            if !filter(&params) {
                batch.rejected_filter += 1;
                continue;
            }
            batch.candidates.push(Candidate {
                params,
                noise: z.to_vec(),
                disc_score: None,
            });
        }
    }
    if let Some(d) = ctx.discriminator {
        let params: Vec<ParameterVector> = batch.candidates.iter().map(|c| c.params).collect();
        if !params.is_empty() {
            for (c, s) in batch.candidates.iter_mut().zip(d.score(&params)?) {
                c.disc_score = Some(s);
            }
        }
    }
    batch.shortfall = batch.candidates.len() < k;
    Ok(batch)
}

/// One JSON object per line: `{schema_version, params, noise, disc_score}`.
pub fn candidates_to_jsonl(candidates: &[Candidate]) -> String {
    let mut out = String::new();
    for c in candidates {
        let rec = serde_json::json!({
            "schema_version": CANDIDATE_SCHEMA_VERSION,
            "params": c.params.0.to_vec(),
            "noise": c.noise,
            "disc_score": c.disc_score,
        });
        out.push_str(&rec.to_string());
        out.push('\n');
    }
    out
}
