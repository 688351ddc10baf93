//! Dense feed-forward networks with exact reverse-mode gradients and an
//! Adam optimizer. Everything is plain `f64` so runs reproduce
//! bit-for-bit; the forward/backward pair is the substrate for both the
//! actor (softmax head) and the critic (scalar identity head).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Softmax,
    Identity,
}

/// Multi-layer perceptron: affine + ReLU on hidden layers, a softmax or
/// identity head on the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layer_dims: Vec<usize>,
    pub output_activation: OutputActivation,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// Pre- and post-activation record of one forward pass, consumed by
/// [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input; `activations[l + 1]` the output of
    /// layer `l`.
    activations: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds the input")
    }
}

/// Parameter-shaped gradient (or moment) container.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows, w.cols))
                .collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn init(
        layer_dims: &[usize],
        output_activation: OutputActivation,
        rng: &mut impl Rng,
    ) -> Result<Mlp> {
        if layer_dims.len() < 2 {
            return Err(Error::Config(
                "a network needs at least input and output dims".into(),
            ));
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("layer dims must be positive".into()));
        }
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for pair in layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut w = Matrix::zeros(fan_out, fan_in);
            for v in &mut w.data {
                *v = rng.random_range(-limit..limit);
            }
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Mlp {
            layer_dims: layer_dims.to_vec(),
            output_activation,
            weights,
            biases,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.data.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn forward(&self, input: &[f64]) -> (Vec<f64>, ForwardCache) {
        assert_eq!(
            input.len(),
            self.input_dim(),
            "input has dim {}, network expects {}",
            input.len(),
            self.input_dim()
        );
        let num_layers = self.weights.len();
        let mut activations = Vec::with_capacity(num_layers + 1);
        activations.push(input.to_vec());
        let mut pre = Vec::with_capacity(num_layers);
        for l in 0..num_layers {
            let w = &self.weights[l];
            let b = &self.biases[l];
            let a_prev = activations.last().unwrap();
            let mut z = vec![0.0; w.rows];
            for (i, zi) in z.iter_mut().enumerate() {
                let row = w.row(i);
                let mut acc = b[i];
                for (wij, aj) in row.iter().zip(a_prev.iter()) {
                    acc += wij * aj;
                }
                *zi = acc;
            }
            let a = if l + 1 < num_layers {
                z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
            } else {
                match self.output_activation {
                    OutputActivation::Identity => z.clone(),
                    OutputActivation::Softmax => softmax(&z),
                }
            };
            pre.push(z);
            activations.push(a);
        }
        (activations.last().unwrap().clone(), ForwardCache { activations, pre })
    }

    /// Exact gradients of a scalar loss with respect to every parameter
    /// and to the network input, given `d loss / d output`.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> (Gradients, Vec<f64>) {
        assert_eq!(
            output_grad.len(),
            self.output_dim(),
            "output grad has dim {}, network emits {}",
            output_grad.len(),
            self.output_dim()
        );
        let num_layers = self.weights.len();
        let mut grads = Gradients::zeros_like(self);

        let output = &cache.activations[num_layers];
        let mut delta: Vec<f64> = match self.output_activation {
            OutputActivation::Identity => output_grad.to_vec(),
            OutputActivation::Softmax => {
                let dot: f64 = output_grad.iter().zip(output).map(|(g, y)| g * y).sum();
                output
                    .iter()
                    .zip(output_grad)
                    .map(|(y, g)| y * (g - dot))
                    .collect()
            }
        };

        for l in (0..num_layers).rev() {
            let input_l = &cache.activations[l];
            let w = &self.weights[l];
            let dw = &mut grads.weights[l];
            for (i, &d) in delta.iter().enumerate() {
                let row = dw.row_mut(i);
                for (r, &a) in row.iter_mut().zip(input_l.iter()) {
                    *r += d * a;
                }
            }
            grads.biases[l].copy_from_slice(&delta);

            let mut dinput = vec![0.0; w.cols];
            for (i, &d) in delta.iter().enumerate() {
                let row = w.row(i);
                for (di, &wij) in dinput.iter_mut().zip(row.iter()) {
                    *di += wij * d;
                }
            }
            if l > 0 {
                let z_prev = &cache.pre[l - 1];
                delta = dinput
                    .iter()
                    .zip(z_prev)
                    .map(|(&d, &z)| if z > 0.0 { d } else { 0.0 })
                    .collect();
            } else {
                return (grads, dinput);
            }
        }
        unreachable!("loop returns at layer 0");
    }
}

/// Adam with bias correction. Moments live alongside the parameters
/// they belong to; one state per network.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    first_moments: Gradients,
    second_moments: Gradients,
}

impl AdamState {
    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moments: Gradients::zeros_like(net),
            second_moments: Gradients::zeros_like(net),
        }
    }

    /// One bias-corrected update of every parameter.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.step_count += 1;
        let t = self.step_count as f64;
        let lr = self.learning_rate;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let bc1 = 1.0 - b1.powf(t);
        let bc2 = 1.0 - b2.powf(t);

        let update = |param: &mut f64, grad: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * grad;
            *v = b2 * *v + (1.0 - b2) * grad * grad;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *param -= lr * m_hat / (v_hat.sqrt() + eps);
        };

        for l in 0..net.weights.len() {
            let w = &mut net.weights[l].data;
            let g = &grads.weights[l].data;
            let m = &mut self.first_moments.weights[l].data;
            let v = &mut self.second_moments.weights[l].data;
            for i in 0..w.len() {
                update(&mut w[i], g[i], &mut m[i], &mut v[i]);
            }
            let b = &mut net.biases[l];
            let gb = &grads.biases[l];
            let mb = &mut self.first_moments.biases[l];
            let vb = &mut self.second_moments.biases[l];
            for i in 0..b.len() {
                update(&mut b[i], gb[i], &mut mb[i], &mut vb[i]);
            }
        }
    }
}
