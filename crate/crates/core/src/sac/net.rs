//! Fully connected networks with hand-written backpropagation.
//!
//! All parameters of a network live in one flat `Vec<f64>`; layer `l`
//! stores its `outputs × inputs` weight matrix row-major followed by its
//! bias vector. Gradients use the same layout, so optimizers and target
//! updates work on plain slices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedForwardNet {
    /// Layer widths, input first.
    sizes: Vec<usize>,
    /// One activation per weight layer.
    activations: Vec<Activation>,
    params: Vec<f64>,
}

/// Activations recorded by [`FeedForwardNet::forward_batch`], needed for
/// the backward pass. `values[0]` is the input batch.
#[derive(Debug, Clone)]
pub struct Trace {
    rows: usize,
    values: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("trace holds the input at least")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

impl FeedForwardNet {
    /// Hidden layers use `hidden`, the last layer `output`. Weights are drawn
    /// uniform in `±√(6/fan_in)` (`±√(6/(fan_in+fan_out))` for tanh); the
    /// output layer uses `±output_scale`. Biases start at zero.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        output_scale: f64,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "a network needs input and output widths");
        let layers = sizes.len() - 1;
        let activations: Vec<Activation> = (0..layers)
            .map(|l| if l + 1 == layers { output } else { hidden })
            .collect();
        let mut params = Vec::with_capacity(Self::count(sizes));
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = if l + 1 == layers {
                output_scale
            } else if hidden == Activation::Tanh {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            } else {
                (6.0 / fan_in as f64).sqrt()
            };
            for _ in 0..fan_in * fan_out {
                params.push(rng.random_range(-bound..=bound));
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            sizes: sizes.to_vec(),
            activations,
            params,
        }
    }

    fn count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Checks that the parameter vector matches the declared shapes.
    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 2 || self.sizes.contains(&0) {
            return Err(Error::Checkpoint(format!("invalid layer sizes {:?}", self.sizes)));
        }
        if self.activations.len() != self.sizes.len() - 1 {
            return Err(Error::Checkpoint("activation count does not match layers".into()));
        }
        let expected = Self::count(&self.sizes);
        if self.params.len() != expected {
            return Err(Error::Checkpoint(format!(
                "network {:?} needs {expected} parameters, found {}",
                self.sizes,
                self.params.len()
            )));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Checkpoint("non-finite network parameter".into()));
        }
        Ok(())
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("sizes validated")
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let trace = self.forward_batch(x, 1);
        trace.output().to_vec()
    }

    /// Forward pass over `rows` inputs stored row-major in `x`.
    pub fn forward_batch(&self, x: &[f64], rows: usize) -> Trace {
        assert_eq!(x.len(), rows * self.input_dim(), "input batch shape");
        let mut values = Vec::with_capacity(self.sizes.len());
        values.push(x.to_vec());
        let mut offset = 0;
        for (l, act) in self.activations.iter().enumerate() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let input = values.last().expect("input pushed");
            let mut out = vec![0.0; rows * n_out];
            for r in 0..rows {
                let xr = &input[r * n_in..(r + 1) * n_in];
                for o in 0..n_out {
                    let wo = &w[o * n_in..(o + 1) * n_in];
                    let z = b[o] + wo.iter().zip(xr).map(|(w, x)| w * x).sum::<f64>();
                    out[r * n_out + o] = act.apply(z);
                }
            }
            values.push(out);
            offset += n_in * n_out + n_out;
        }
        Trace { rows, values }
    }

    /// Backpropagates `d_output` (gradient of the loss with respect to the
    /// network output, row-major) and returns the parameter gradient and the
    /// gradient with respect to the input batch.
    pub fn backward(&self, trace: &Trace, d_output: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let rows = trace.rows;
        assert_eq!(d_output.len(), rows * self.output_dim(), "output gradient shape");
        let mut grad = vec![0.0; self.params.len()];
        let mut delta = d_output.to_vec();
        let mut offsets = Vec::with_capacity(self.activations.len());
        let mut acc = 0;
        for l in 0..self.activations.len() {
            offsets.push(acc);
            acc += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }

        for l in (0..self.activations.len()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let offset = offsets[l];
            let act = self.activations[l];
            let output = &trace.values[l + 1];
            let input = &trace.values[l];
            for (d, &y) in delta.iter_mut().zip(output) {
                *d *= act.derivative_from_output(y);
            }
            let (gw, gb) = grad[offset..offset + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            let w = &self.params[offset..offset + n_in * n_out];
            let mut d_input = vec![0.0; rows * n_in];
            for r in 0..rows {
                let xr = &input[r * n_in..(r + 1) * n_in];
                let dr = &delta[r * n_out..(r + 1) * n_out];
                let di = &mut d_input[r * n_in..(r + 1) * n_in];
                for (o, &d) in dr.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    let gwo = &mut gw[o * n_in..(o + 1) * n_in];
                    let wo = &w[o * n_in..(o + 1) * n_in];
                    for i in 0..n_in {
                        gwo[i] += d * xr[i];
                        di[i] += d * wo[i];
                    }
                }
            }
            delta = d_input;
        }
        (grad, delta)
    }

    /// `self ← τ·online + (1 − τ)·self`.
    pub fn soft_update_from(&mut self, online: &FeedForwardNet, tau: f64) -> Result<()> {
        if self.sizes != online.sizes {
            return Err(Error::Dimension {
                what: "soft update network parameters",
                expected: self.params.len(),
                got: online.params.len(),
            });
        }
        for (t, o) in self.params.iter_mut().zip(&online.params) {
            *t = tau * o + (1.0 - tau) * *t;
        }
        Ok(())
    }
}

/// Adam optimizer state for one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(lr: f64, len: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), grad.len());
        self.t = self.t.saturating_add(1);
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}
