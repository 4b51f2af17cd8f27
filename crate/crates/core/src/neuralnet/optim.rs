use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::model::{Gradients, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        #[serde(default)]
        weight_decay: f64,
        /// Decoupled (AdamW-style) decay when true, L2-in-gradient otherwise.
        #[serde(default = "default_true")]
        decoupled: bool,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_true() -> bool {
    true
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    pub fn adam(lr: f64, weight_decay: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            weight_decay,
            decoupled: true,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerKind::Sgd { lr } | OptimizerKind::Adam { lr, .. } => lr,
        }
    }
}

/// Per-parameter moment buffers, laid out like [`Gradients`].
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    t: u64,
    m: Option<Gradients>,
    v: Option<Gradients>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, model: &Mlp) -> Self {
        let (m, v) = match kind {
            OptimizerKind::Sgd { .. } => (None, None),
            OptimizerKind::Adam { .. } => (Some(Gradients::zeros_like(model)), Some(Gradients::zeros_like(model))),
        };
        Self { kind, t: 0, m, v }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one update. Weight decay touches weight matrices only, never
    /// biases or batchnorm scale/shift.
    pub fn step(&mut self, model: &mut Mlp, grads: &Gradients) {
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd { lr } => {
                for (layer, g) in model.layers.iter_mut().zip(&grads.layers) {
                    layer.weight.scaled_add(-lr, &g.weight);
                    if let (Some(b), Some(gb)) = (&mut layer.bias, &g.bias) {
                        b.scaled_add(-lr, gb);
                    }
                    if let (Some(bn), Some(gg), Some(gb)) = (&mut layer.bn, &g.gamma, &g.beta) {
                        bn.gamma.scaled_add(-lr, gg);
                        bn.beta.scaled_add(-lr, gb);
                    }
                }
            }
            OptimizerKind::Adam {
                lr,
                weight_decay,
                decoupled,
                beta1,
                beta2,
                eps,
            } => {
                let t = self.t as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                let m = self.m.as_mut().expect("adam state");
                let v = self.v.as_mut().expect("adam state");
                let hp = AdamHp {
                    lr,
                    beta1,
                    beta2,
                    eps,
                    bc1,
                    bc2,
                };
                for (li, layer) in model.layers.iter_mut().enumerate() {
                    let g = &grads.layers[li];
                    let (ml, vl) = (&mut m.layers[li], &mut v.layers[li]);
                    if decoupled {
                        if weight_decay != 0.0 {
                            layer.weight *= 1.0 - lr * weight_decay;
                        }
                        adam2(&mut layer.weight, &g.weight, &mut ml.weight, &mut vl.weight, &hp, 0.0);
                    } else {
                        adam2(&mut layer.weight, &g.weight, &mut ml.weight, &mut vl.weight, &hp, weight_decay);
                    }
                    if let (Some(b), Some(gb), Some(mb), Some(vb)) = (&mut layer.bias, &g.bias, &mut ml.bias, &mut vl.bias) {
                        adam1(b, gb, mb, vb, &hp);
                    }
                    if let Some(bn) = &mut layer.bn {
                        if let (Some(gg), Some(mg), Some(vg)) = (&g.gamma, &mut ml.gamma, &mut vl.gamma) {
                            adam1(&mut bn.gamma, gg, mg, vg, &hp);
                        }
                        if let (Some(gb), Some(mb), Some(vb)) = (&g.beta, &mut ml.beta, &mut vl.beta) {
                            adam1(&mut bn.beta, gb, mb, vb, &hp);
                        }
                    }
                }
            }
        }
    }
}

struct AdamHp {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
}

impl AdamHp {
    #[inline]
    fn update(&self, w: &mut f64, g: f64, m: &mut f64, v: &mut f64) {
        *m = self.beta1 * *m + (1.0 - self.beta1) * g;
        *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
        let mhat = *m / self.bc1;
        let vhat = *v / self.bc2;
        *w -= self.lr * mhat / (vhat.sqrt() + self.eps);
    }
}

/// `l2` > 0 adds `l2 * w` to the gradient (coupled decay).
fn adam2(w: &mut Array2<f64>, g: &Array2<f64>, m: &mut Array2<f64>, v: &mut Array2<f64>, hp: &AdamHp, l2: f64) {
    Zip::from(w).and(g).and(m).and(v).for_each(|w, &g, m, v| {
        let gi = g + l2 * *w;
        hp.update(w, gi, m, v);
    });
}

fn adam1(w: &mut Array1<f64>, g: &Array1<f64>, m: &mut Array1<f64>, v: &mut Array1<f64>, hp: &AdamHp) {
    Zip::from(w).and(g).and(m).and(v).for_each(|w, &g, m, v| hp.update(w, g, m, v));
}
