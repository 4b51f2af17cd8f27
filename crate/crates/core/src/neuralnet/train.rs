use std::ops::ControlFlow;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_and_grad, Loss};
use super::model::{Mlp, Mode};
use super::optim::{OptimizerKind, OptimizerState};
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Adam, decoupled decay 0.05, batch 1, up to 1000 epochs.
    pub fn discriminator_default() -> Self {
        Self {
            optimizer: OptimizerKind::adam(1e-5, 0.05),
            batch_size: 1,
            max_epochs: 1000,
            seed: 0,
        }
    }

    /// Plain SGD, batch 500, up to 30000 epochs.
    pub fn generator_default() -> Self {
        Self {
            optimizer: OptimizerKind::Sgd { lr: 1e-4 },
            batch_size: 500,
            max_epochs: 30_000,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let lr = self.optimizer.lr();
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(NnError::Config(format!("learning rate must be positive, got {lr}")));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(NnError::Config("batch size and epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub epochs: usize,
    pub steps: u64,
    /// Mean minibatch loss over the final epoch.
    pub final_loss: f64,
}

/// Minibatch BCE training, reshuffling the rows every epoch.
pub fn fit_bce(model: &mut Mlp, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, cfg: &TrainConfig) -> Result<FitReport, NnError> {
    fit_bce_with(model, x, y, cfg, |_, _, _| ControlFlow::Continue(()))
}

/// [`fit_bce`] with a per-epoch hook `(epoch, mean_loss, model)`; returning
/// `Break` ends training after that epoch.
pub fn fit_bce_with<F>(
    model: &mut Mlp,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<FitReport, NnError>
where
    F: FnMut(usize, f64, &Mlp) -> ControlFlow<()>,
{
    cfg.validate()?;
    if x.nrows() != y.nrows() || x.nrows() == 0 {
        return Err(NnError::Shape {
            expected: x.nrows(),
            got: y.nrows(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimizerState::new(cfg.optimizer, model);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut final_loss = f64::NAN;
    let mut epochs = 0;
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb = y.select(Axis(0), chunk);
            let eval = loss_and_grad(model, xb.view(), Mode::Train, Loss::Bce { targets: yb.view() })?;
            model.absorb_batch_stats(&eval.cache);
            opt.step(model, &eval.grads);
            total += eval.loss;
            batches += 1;
        }
        final_loss = total / batches as f64;
        epochs = epoch + 1;
        if on_epoch(epoch, final_loss, model).is_break() {
            break;
        }
    }
    if !model.all_finite() {
        return Err(NnError::NonFiniteLoss(final_loss));
    }
    Ok(FitReport {
        epochs,
        steps: opt.steps_taken(),
        final_loss,
    })
}
