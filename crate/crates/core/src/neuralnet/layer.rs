use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
    Sigmoid,
    None,
}

impl Activation {
    pub const LEAKY_DEFAULT: Activation = Activation::LeakyRelu { slope: 0.2 };

    /// Kaiming gain for this nonlinearity.
    pub fn gain(&self) -> f64 {
        match *self {
            Activation::Relu => 2f64.sqrt(),
            Activation::LeakyRelu { slope } => (2.0 / (1.0 + slope * slope)).sqrt(),
            Activation::Sigmoid | Activation::None => 1.0,
        }
    }

    pub(crate) fn apply(&self, z: &Array2<f64>) -> Array2<f64> {
        match *self {
            Activation::Relu => z.mapv(|v| v.max(0.0)),
            Activation::LeakyRelu { slope } => z.mapv(|v| if v > 0.0 { v } else { slope * v }),
            Activation::Sigmoid => z.mapv(sigmoid),
            Activation::None => z.clone(),
        }
    }

    /// Multiplies `upstream` by the activation derivative, given the
    /// pre-activation `z` and the activation output `a`.
    pub(crate) fn backprop(&self, z: &Array2<f64>, a: &Array2<f64>, upstream: &Array2<f64>) -> Array2<f64> {
        match *self {
            Activation::Relu => {
                let mut d = upstream.clone();
                d.zip_mut_with(z, |g, &v| {
                    if v <= 0.0 {
                        *g = 0.0
                    }
                });
                d
            }
            Activation::LeakyRelu { slope } => {
                let mut d = upstream.clone();
                d.zip_mut_with(z, |g, &v| {
                    if v <= 0.0 {
                        *g *= slope
                    }
                });
                d
            }
            Activation::Sigmoid => {
                let mut d = upstream.clone();
                d.zip_mut_with(a, |g, &s| *g *= s * (1.0 - s));
                d
            }
            Activation::None => upstream.clone(),
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^v)` without overflow.
pub fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input: usize,
    pub output: usize,
    pub batchnorm: bool,
    pub bias: bool,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            input,
            output,
            batchnorm: false,
            bias: true,
            activation,
        }
    }

    pub fn with_batchnorm(mut self, on: bool) -> Self {
        self.batchnorm = on;
        self
    }

    pub fn with_bias(mut self, on: bool) -> Self {
        self.bias = on;
        self
    }
}

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub spec: LayerSpec,
    /// `input x output`, so a row batch maps as `x.dot(weight)`.
    pub weight: Array2<f64>,
    pub bias: Option<Array1<f64>>,
    pub bn: Option<BatchNorm>,
}

impl Layer {
    /// Kaiming-uniform weights over fan-in, zero bias, unit BN scale.
    pub fn init<R: Rng + ?Sized>(spec: LayerSpec, rng: &mut R) -> Self {
        let bound = spec.activation.gain() * (3.0 / spec.input as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((spec.input, spec.output), || rng.gen_range(-bound..=bound));
        Self {
            spec,
            weight,
            bias: spec.bias.then(|| Array1::zeros(spec.output)),
            bn: spec.batchnorm.then(|| BatchNorm::new(spec.output)),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len()
            + self.bias.as_ref().map_or(0, |b| b.len())
            + self.bn.as_ref().map_or(0, |bn| 2 * bn.gamma.len())
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BnCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    pub input: Array2<f64>,
    /// Input to the activation (after linear, bias and batchnorm).
    pub pre: Array2<f64>,
    pub bn: Option<BnCache>,
    pub output: Array2<f64>,
}

pub(crate) fn batch_mean_var(z: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
    let n = z.nrows() as f64;
    let mean = z.sum_axis(Axis(0)) / n;
    let centered = z - &mean;
    let var = (&centered * &centered).sum_axis(Axis(0)) / n;
    (mean, var)
}
