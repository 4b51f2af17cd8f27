use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{batch_mean_var, BatchNorm, BnCache, Layer, LayerCache, LayerSpec};
use super::{linalg, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batchnorm normalizes with the statistics of the current batch.
    Train,
    /// Batchnorm uses its running statistics.
    Eval,
}

/// Stack of dense layers, each optionally followed by batchnorm, then an
/// activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub(crate) layers: Vec<LayerCache>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.layers.last().expect("non-empty model").output
    }

    /// Input to the last activation (the logit when the head is a sigmoid).
    pub fn logits(&self) -> &Array2<f64> {
        &self.layers.last().expect("non-empty model").pre
    }
}

/// Gradient of a scalar loss with respect to one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Option<Array1<f64>>,
    pub gamma: Option<Array1<f64>>,
    pub beta: Option<Array1<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(model: &Mlp) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: l.bias.as_ref().map(|b| Array1::zeros(b.len())),
                    gamma: l.bn.as_ref().map(|bn| Array1::zeros(bn.gamma.len())),
                    beta: l.bn.as_ref().map(|bn| Array1::zeros(bn.beta.len())),
                })
                .collect(),
        }
    }

    /// Flattened in the same order as [`Mlp::params_flat`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weight.iter());
            if let Some(b) = &l.bias {
                out.extend(b.iter());
            }
            if let (Some(g), Some(b)) = (&l.gamma, &l.beta) {
                out.extend(g.iter());
                out.extend(b.iter());
            }
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.weight *= k;
            for v in [&mut l.bias, &mut l.gamma, &mut l.beta].into_iter().flatten() {
                *v *= k;
            }
        }
    }
}

impl Mlp {
    pub fn new(specs: &[LayerSpec], seed: u64) -> Result<Self, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::with_rng(specs, &mut rng)
    }

    pub fn with_rng<R: rand::Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Self, NnError> {
        if specs.is_empty() {
            return Err(NnError::EmptyModel);
        }
        for (i, s) in specs.iter().enumerate() {
            if s.input == 0 || s.output == 0 {
                return Err(NnError::ZeroWidth { layer: i });
            }
            if i > 0 && specs[i - 1].output != s.input {
                return Err(NnError::WidthMismatch {
                    layer: i,
                    expected: specs[i - 1].output,
                    got: s.input,
                });
            }
        }
        Ok(Self {
            layers: specs.iter().map(|&s| Layer::init(s, rng)).collect(),
        })
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].spec.input
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("non-empty").spec.output
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn forward(&self, batch: ArrayView2<'_, f64>, mode: Mode) -> Result<ForwardCache, NnError> {
        if batch.ncols() != self.input_width() {
            return Err(NnError::Shape {
                expected: self.input_width(),
                got: batch.ncols(),
            });
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = batch.to_owned();
        for layer in &self.layers {
            let mut z = linalg::mul(x.view(), layer.weight.view());
            if let Some(b) = &layer.bias {
                z += b;
            }
            let (pre, bn_cache) = match &layer.bn {
                None => (z, None),
                Some(bn) => {
                    let (mean, var, inv_std) = match mode {
                        Mode::Train => {
                            let (m, v) = batch_mean_var(&z);
                            let inv = v.mapv(|s| 1.0 / (s + bn.eps).sqrt());
                            (m, v, inv)
                        }
                        Mode::Eval => (
                            bn.running_mean.clone(),
                            bn.running_var.clone(),
                            bn.running_var.mapv(|s| 1.0 / (s + bn.eps).sqrt()),
                        ),
                    };
                    let xhat = (&z - &mean) * &inv_std;
                    let y = &xhat * &bn.gamma + &bn.beta;
                    (
                        y,
                        Some(BnCache {
                            xhat,
                            inv_std,
                            mean,
                            var,
                        }),
                    )
                }
            };
            let out = layer.spec.activation.apply(&pre);
            caches.push(LayerCache {
                input: x,
                pre,
                bn: bn_cache,
                output: out.clone(),
            });
            x = out;
        }
        Ok(ForwardCache { layers: caches })
    }

    /// Eval-mode forward pass returning only the output.
    pub fn predict(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>, NnError> {
        let mut cache = self.forward(batch, Mode::Eval)?;
        Ok(cache.layers.pop().expect("non-empty").output)
    }

    /// Backpropagates `d_output` (gradient of the loss w.r.t. the model
    /// output). Returns parameter gradients and the gradient w.r.t. the
    /// input batch.
    pub fn backward(&self, cache: &ForwardCache, d_output: &Array2<f64>, mode: Mode) -> (Gradients, Array2<f64>) {
        let last = cache.layers.last().expect("non-empty");
        let act = self.layers.last().expect("non-empty").spec.activation;
        let d_pre = act.backprop(&last.pre, &last.output, d_output);
        self.backward_from_pre(cache, d_pre, mode, true)
    }

    /// Like [`backward`](Self::backward) but seeded with the gradient w.r.t.
    /// the last layer's pre-activation (the logit).
    pub fn backward_from_logits(
        &self,
        cache: &ForwardCache,
        d_logits: Array2<f64>,
        mode: Mode,
        want_params: bool,
    ) -> (Gradients, Array2<f64>) {
        self.backward_from_pre(cache, d_logits, mode, want_params)
    }

    fn backward_from_pre(
        &self,
        cache: &ForwardCache,
        mut d_pre: Array2<f64>,
        mode: Mode,
        want_params: bool,
    ) -> (Gradients, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        for (idx, (layer, lc)) in self.layers.iter().zip(cache.layers.iter()).enumerate().rev() {
            if idx + 1 < self.layers.len() {
                d_pre = layer.spec.activation.backprop(&lc.pre, &lc.output, &d_pre);
            }
            let (d_z, gamma_g, beta_g) = match (&layer.bn, &lc.bn) {
                (Some(bn), Some(bc)) => {
                    let d_beta = d_pre.sum_axis(Axis(0));
                    let d_gamma = (&d_pre * &bc.xhat).sum_axis(Axis(0));
                    let d_xhat = &d_pre * &bn.gamma;
                    let d_z = match mode {
                        Mode::Train => {
                            let n = d_xhat.nrows() as f64;
                            let sum_d = d_xhat.sum_axis(Axis(0));
                            let sum_dx = (&d_xhat * &bc.xhat).sum_axis(Axis(0));
                            let inner = &d_xhat * n - &sum_d - &bc.xhat * &sum_dx;
                            inner * &(&bc.inv_std / n)
                        }
                        Mode::Eval => &d_xhat * &bc.inv_std,
                    };
                    (d_z, Some(d_gamma), Some(d_beta))
                }
                _ => (d_pre, None, None),
            };
            let d_in = linalg::mul_bt(d_z.view(), layer.weight.view());
            if want_params {
                grads.push(LayerGrad {
                    weight: linalg::mul_at(lc.input.view(), d_z.view()),
                    bias: layer.bias.as_ref().map(|_| d_z.sum_axis(Axis(0))),
                    gamma: gamma_g,
                    beta: beta_g,
                });
            }
            d_pre = d_in;
        }
        grads.reverse();
        (Gradients { layers: grads }, d_pre)
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// estimates (unbiased variance, momentum [`BN_MOMENTUM`](super::layer::BN_MOMENTUM)).
    pub fn absorb_batch_stats(&mut self, cache: &ForwardCache) {
        for (layer, lc) in self.layers.iter_mut().zip(cache.layers.iter()) {
            if let (Some(bn), Some(bc)) = (&mut layer.bn, &lc.bn) {
                let n = lc.input.nrows() as f64;
                let unbiased = if n > 1.0 {
                    &bc.var * (n / (n - 1.0))
                } else {
                    bc.var.clone()
                };
                let m = bn.momentum;
                bn.running_mean = &bn.running_mean * (1.0 - m) + &bc.mean * m;
                bn.running_var = &bn.running_var * (1.0 - m) + unbiased * m;
            }
        }
    }

    /// Trainable parameters in a fixed order: per layer weight (row-major),
    /// bias, BN scale, BN shift.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.weight.iter());
            if let Some(b) = &l.bias {
                out.extend(b.iter());
            }
            if let Some(bn) = &l.bn {
                out.extend(bn.gamma.iter());
                out.extend(bn.beta.iter());
            }
        }
        out
    }

    pub fn set_params_flat(&mut self, values: &[f64]) -> Result<(), NnError> {
        if values.len() != self.param_count() {
            return Err(NnError::Shape {
                expected: self.param_count(),
                got: values.len(),
            });
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|w| *w = it.next().unwrap());
            if let Some(b) = &mut l.bias {
                b.iter_mut().for_each(|w| *w = it.next().unwrap());
            }
            if let Some(bn) = &mut l.bn {
                bn.gamma.iter_mut().for_each(|w| *w = it.next().unwrap());
                bn.beta.iter_mut().for_each(|w| *w = it.next().unwrap());
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.params_flat().iter().all(|v| v.is_finite())
    }

    /// Replaces every parameter with zero (BN scale stays 1).
    pub fn zero_weights(&mut self) {
        for l in &mut self.layers {
            l.weight.fill(0.0);
            if let Some(b) = &mut l.bias {
                b.fill(0.0);
            }
            if let Some(bn) = &mut l.bn {
                *bn = BatchNorm::new(bn.gamma.len());
            }
        }
    }
}

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDump {
    schema_version: u32,
    model: Mlp,
}

impl Mlp {
    pub fn to_json(&self) -> Result<String, NnError> {
        serde_json::to_string(&ModelDump {
            schema_version: MODEL_SCHEMA_VERSION,
            model: self.clone(),
        })
        .map_err(|e| NnError::Serde(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self, NnError> {
        let v: serde_json::Value = serde_json::from_str(s).map_err(|e| NnError::Serde(e.to_string()))?;
        let version = v.get("schema_version").and_then(|x| x.as_u64());
        if version != Some(MODEL_SCHEMA_VERSION as u64) {
            return Err(NnError::SchemaVersion(version));
        }
        let dump: ModelDump = serde_json::from_value(v).map_err(|e| NnError::Serde(e.to_string()))?;
        let model = dump.model;
        let specs = model.specs();
        for (i, l) in model.layers.iter().enumerate() {
            if l.weight.dim() != (l.spec.input, l.spec.output) || (i > 0 && specs[i - 1].output != l.spec.input) {
                return Err(NnError::WidthMismatch {
                    layer: i,
                    expected: l.spec.input,
                    got: l.weight.nrows(),
                });
            }
        }
        Ok(model)
    }
}
