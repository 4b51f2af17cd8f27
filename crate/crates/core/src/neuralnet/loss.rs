use ndarray::{Array2, ArrayView2};

use super::layer::{sigmoid, softplus, Activation};
use super::model::{ForwardCache, Gradients, Mlp, Mode};
use super::NnError;

/// Scalar mean losses supported by [`loss_and_grad`].
#[derive(Debug, Clone, Copy)]
pub enum Loss<'a> {
    /// Binary cross-entropy against targets in `[0, 1]`, one column.
    Bce { targets: ArrayView2<'a, f64> },
    /// `mean log(1 - D(out))` through a frozen discriminator `D`; with
    /// `nonsaturating` set, `mean -log D(out)` instead.
    Generator {
        discriminator: &'a Mlp,
        nonsaturating: bool,
    },
}

pub struct LossEval {
    pub loss: f64,
    pub grads: Gradients,
    pub cache: ForwardCache,
    /// Discriminator scores of the batch, for [`Loss::Generator`].
    pub scores: Option<Vec<f64>>,
}

/// Mean BCE computed from logits: `softplus(s) - y s`.
pub fn bce_from_logits(logits: &Array2<f64>, targets: ArrayView2<'_, f64>) -> (f64, Array2<f64>) {
    let n = logits.nrows() as f64;
    let mut loss = 0.0;
    let mut d = Array2::zeros(logits.raw_dim());
    for ((s, y), g) in logits.iter().zip(targets.iter()).zip(d.iter_mut()) {
        loss += softplus(*s) - y * s;
        *g = (sigmoid(*s) - y) / n;
    }
    (loss / n, d)
}

/// Loss value plus exact gradients of the mean loss w.r.t. every
/// parameter of `model`.
pub fn loss_and_grad(model: &Mlp, batch: ArrayView2<'_, f64>, mode: Mode, loss: Loss<'_>) -> Result<LossEval, NnError> {
    let cache = model.forward(batch, mode)?;
    match loss {
        Loss::Bce { targets } => {
            if targets.dim() != cache.output().dim() {
                return Err(NnError::Shape {
                    expected: cache.output().len(),
                    got: targets.len(),
                });
            }
            let head = model.layers.last().expect("non-empty").spec.activation;
            let (value, grads) = if head == Activation::Sigmoid {
                let (value, d_logits) = bce_from_logits(cache.logits(), targets);
                (value, model.backward_from_logits(&cache, d_logits, mode, true).0)
            } else {
                let n = cache.output().nrows() as f64;
                let mut value = 0.0;
                let mut d = Array2::zeros(cache.output().raw_dim());
                for ((p, y), g) in cache.output().iter().zip(targets.iter()).zip(d.iter_mut()) {
                    let p = p.clamp(1e-15, 1.0 - 1e-15);
                    value -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
                    *g = (p - y) / (p * (1.0 - p)) / n;
                }
                (value / n, model.backward(&cache, &d, mode).0)
            };
            if !value.is_finite() {
                return Err(NnError::NonFiniteLoss(value));
            }
            Ok(LossEval {
                loss: value,
                grads,
                cache,
                scores: None,
            })
        }
        Loss::Generator {
            discriminator,
            nonsaturating,
        } => {
            let d_cache = discriminator.forward(cache.output().view(), Mode::Eval)?;
            let logits = d_cache.logits();
            let n = logits.nrows() as f64;
            let mut value = 0.0;
            let mut d_logits = Array2::zeros(logits.raw_dim());
            let mut scores = Vec::with_capacity(logits.len());
            for (s, g) in logits.iter().zip(d_logits.iter_mut()) {
                let p = sigmoid(*s);
                scores.push(p);
                if nonsaturating {
                    value += softplus(-*s);
                    *g = (p - 1.0) / n;
                } else {
                    // log(1 - sigmoid(s)) = -softplus(s)
                    value -= softplus(*s);
                    *g = -p / n;
                }
            }
            let value = value / n;
            if !value.is_finite() {
                return Err(NnError::NonFiniteLoss(value));
            }
            let (_, d_out) = discriminator.backward_from_logits(&d_cache, d_logits, Mode::Eval, false);
            let (grads, _) = model.backward(&cache, &d_out, mode);
            Ok(LossEval {
                loss: value,
                grads,
                cache,
                scores: Some(scores),
            })
        }
    }
}

/// Loss value only (used by finite-difference checks).
pub fn loss_value(model: &Mlp, batch: ArrayView2<'_, f64>, mode: Mode, loss: Loss<'_>) -> Result<f64, NnError> {
    let cache = model.forward(batch, mode)?;
    match loss {
        Loss::Bce { targets } => {
            let head = model.layers.last().expect("non-empty").spec.activation;
            if head == Activation::Sigmoid {
                Ok(bce_from_logits(cache.logits(), targets).0)
            } else {
                let n = cache.output().nrows() as f64;
                Ok(cache
                    .output()
                    .iter()
                    .zip(targets.iter())
                    .map(|(p, y)| {
                        let p = p.clamp(1e-15, 1.0 - 1e-15);
                        -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
                    })
                    .sum::<f64>()
                    / n)
            }
        }
        Loss::Generator {
            discriminator,
            nonsaturating,
        } => {
            let d_cache = discriminator.forward(cache.output().view(), Mode::Eval)?;
            let logits = d_cache.logits();
            let n = logits.nrows() as f64;
            Ok(logits
                .iter()
                .map(|s| if nonsaturating { softplus(-*s) } else { -softplus(*s) })
                .sum::<f64>()
                / n)
        }
    }
}
