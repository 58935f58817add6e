//! Feed-forward Gaussian policy with hand-written backpropagation.
//!
//! Parameters live in one flat vector. Layer `l` stores its weight matrix
//! row-major as `out x in`, followed by its `out` biases. Hidden layers use
//! `tanh`; the output layer is linear and has four units: the translation
//! mean and the gripper logit. Two fixed factors set the working units:
//! inputs are multiplied by `input_scale` before the first layer and the
//! translation units by `output_scale` to give meters.

use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::geom::{clip_norm, Vec3};
use crate::rng::Rng;
use crate::types::{Action, Gripper};

pub const OUTPUT_DIM: usize = 4;

/// `ln(sqrt(2 pi))`
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Training record: features, executed action and its weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedSample {
    pub features: super::StateFeatures,
    pub action: Action,
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyModel {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
    sigma: f64,
    #[serde(default = "unit")]
    input_scale: f64,
    #[serde(default = "unit")]
    output_scale: f64,
}

fn unit() -> f64 {
    1.0
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl PolicyModel {
    /// Glorot-uniform hidden layers, zero biases. The output layer's weights
    /// are scaled by `output_gain`; a gain of zero gives the null policy.
    pub fn new(layer_sizes: &[usize], sigma: f64, output_gain: f64, rng: &mut Rng) -> Result<Self, AgentError> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) || *layer_sizes.last().unwrap() != OUTPUT_DIM {
            return Err(AgentError::BadArchitecture(layer_sizes.to_vec()));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(AgentError::BadSigma(sigma));
        }
        let mut params = Vec::with_capacity(param_count(layer_sizes));
        let n_layers = layer_sizes.len() - 1;
        for (l, w) in layer_sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let gain = if l + 1 == n_layers { output_gain } else { 1.0 };
            params.extend((0..fan_in * fan_out).map(|_| gain * rng.uniform(-limit, limit)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self { layer_sizes: layer_sizes.to_vec(), params, sigma, input_scale: 1.0, output_scale: 1.0 })
    }

    pub fn from_parts(layer_sizes: Vec<usize>, params: Vec<f64>, sigma: f64) -> Result<Self, AgentError> {
        if layer_sizes.len() < 2 || *layer_sizes.last().unwrap() != OUTPUT_DIM {
            return Err(AgentError::BadArchitecture(layer_sizes));
        }
        if params.len() != param_count(&layer_sizes) {
            return Err(AgentError::ParamCount { expected: param_count(&layer_sizes), got: params.len() });
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(AgentError::BadSigma(sigma));
        }
        Ok(Self { layer_sizes, params, sigma, input_scale: 1.0, output_scale: 1.0 })
    }

    pub fn with_scales(mut self, input_scale: f64, output_scale: f64) -> Result<Self, AgentError> {
        for v in [input_scale, output_scale] {
            if !(v.is_finite() && v > 0.0) {
                return Err(AgentError::BadScale(v));
            }
        }
        self.input_scale = input_scale;
        self.output_scale = output_scale;
        Ok(self)
    }

    pub fn input_scale(&self) -> f64 {
        self.input_scale
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        // (offset, fan_in, fan_out)
        self.layer_sizes.windows(2).scan(0usize, |off, w| {
            let start = *off;
            *off += w[0] * w[1] + w[1];
            Some((start, w[0], w[1]))
        })
    }

    fn check_dim(&self, len: usize) -> Result<(), AgentError> {
        if len != self.input_dim() {
            return Err(AgentError::DimensionMismatch { expected: self.input_dim(), got: len });
        }
        Ok(())
    }

    /// Translation mean and gripper logit for one feature vector.
    pub fn forward(&self, features: &[f64]) -> Result<(Vec3, f64), AgentError> {
        self.check_dim(features.len())?;
        let n_layers = self.layer_sizes.len() - 1;
        let mut x: Vec<f64> = features.iter().map(|v| v * self.input_scale).collect();
        for (l, (off, fan_in, fan_out)) in self.layers().enumerate() {
            let w = &self.params[off..off + fan_in * fan_out];
            let b = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            let mut y: Vec<f64> = (0..fan_out).map(|o| dot(&w[o * fan_in..(o + 1) * fan_in], &x) + b[o]).collect();
            if l + 1 < n_layers {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            x = y;
        }
        let out = (Vec3::new(x[0], x[1], x[2]) * self.output_scale, x[3]);
        if !(out.0.is_finite() && out.1.is_finite()) {
            return Err(AgentError::NonFinite { sample: 0 });
        }
        Ok(out)
    }

    /// Deterministic action: the clipped mean and the thresholded gripper.
    pub fn mean_action(&self, features: &[f64], max_step: f64) -> Result<Action, AgentError> {
        self.sample_action_with_sigma(features, None, 0.0, max_step)
    }

    /// Draws `mu + sigma * z` per axis and clips it to `max_step`.
    pub fn sample_action(&self, features: &[f64], rng: &mut Rng, max_step: f64) -> Result<Action, AgentError> {
        self.sample_action_with_sigma(features, Some(rng), self.sigma, max_step)
    }

    pub fn sample_action_with_sigma(
        &self,
        features: &[f64],
        rng: Option<&mut Rng>,
        sigma: f64,
        max_step: f64,
    ) -> Result<Action, AgentError> {
        let (mu, logit) = self.forward(features)?;
        let t = match rng {
            Some(rng) if sigma > 0.0 => mu + Vec3::new(rng.normal(), rng.normal(), rng.normal()) * sigma,
            _ => mu,
        };
        let translation = clip_norm(t, max_step).map_err(|_| AgentError::NonFinite { sample: 0 })?;
        // sigmoid(logit) > 0.5  <=>  logit > 0
        Ok(Action::new(translation, if logit > 0.0 { Gripper::Close } else { Gripper::Open }))
    }

    /// Mean over the batch of `q * (Gaussian NLL of the translation + BCE of
    /// the gripper bit)`, and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, batch: &[WeightedSample]) -> Result<(f64, Vec<f64>), AgentError> {
        let (loss, grad) = self.objective(batch, true, true)?;
        Ok((loss, grad.unwrap_or_default()))
    }

    pub fn loss(&self, batch: &[WeightedSample]) -> Result<f64, AgentError> {
        self.objective(batch, true, false).map(|(l, _)| l)
    }

    /// The loss without the parameter-independent `ln(sigma sqrt(2 pi))`
    /// terms, which would otherwise dominate finite-difference roundoff.
    pub(crate) fn loss_up_to_constant(&self, batch: &[WeightedSample]) -> Result<f64, AgentError> {
        self.objective(batch, false, false).map(|(l, _)| l)
    }

    fn objective(
        &self,
        batch: &[WeightedSample],
        with_constant: bool,
        with_grad: bool,
    ) -> Result<(f64, Option<Vec<f64>>), AgentError> {
        if batch.is_empty() {
            return Err(AgentError::EmptyBatch);
        }
        for s in batch {
            self.check_dim(s.features.0.len())?;
        }
        let n = batch.len();
        let n_layers = self.layer_sizes.len() - 1;

        // acts[l] holds the batch input to layer l, row-major n x size.
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        acts.push(batch.iter().flat_map(|s| s.features.0.map(|v| v * self.input_scale)).collect());
        for (l, (off, fan_in, fan_out)) in self.layers().enumerate() {
            let w = &self.params[off..off + fan_in * fan_out];
            let b = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            let x = &acts[l];
            let mut y = vec![0.0; n * fan_out];
            for r in 0..n {
                let xr = &x[r * fan_in..(r + 1) * fan_in];
                let yr = &mut y[r * fan_out..(r + 1) * fan_out];
                for o in 0..fan_out {
                    yr[o] = dot(&w[o * fan_in..(o + 1) * fan_in], xr) + b[o];
                }
                if l + 1 < n_layers {
                    yr.iter_mut().for_each(|v| *v = v.tanh());
                }
            }
            acts.push(y);
        }

        let inv_var = 1.0 / (self.sigma * self.sigma);
        let log_norm = 3.0 * (self.sigma.ln() + LN_SQRT_2PI);
        let scale = 1.0 / n as f64;
        let out = &acts[n_layers];
        let mut d_out = vec![0.0; n * OUTPUT_DIM];
        let mut loss = 0.0;
        let mut q_sum = 0.0;
        for (r, s) in batch.iter().enumerate() {
            let o = &out[r * OUTPUT_DIM..(r + 1) * OUTPUT_DIM];
            let a = s.action.translation.to_array();
            let g = if s.action.gripper.is_close() { 1.0 } else { 0.0 };
            let mut nll = 0.0;
            for i in 0..3 {
                let diff = a[i] - o[i] * self.output_scale;
                nll += 0.5 * diff * diff * inv_var;
                d_out[r * OUTPUT_DIM + i] = -s.q * scale * diff * inv_var * self.output_scale;
            }
            let logit = o[3];
            let bce = logit.max(0.0) + (-logit.abs()).exp().ln_1p() - g * logit;
            d_out[r * OUTPUT_DIM + 3] = s.q * scale * (sigmoid(logit) - g);
            let sample_loss = s.q * (nll + bce);
            if !(sample_loss.is_finite() && s.q.is_finite()) || !o.iter().all(|v| v.is_finite()) {
                return Err(AgentError::NonFinite { sample: r });
            }
            loss += sample_loss;
            q_sum += s.q;
        }
        if with_constant {
            loss += log_norm * q_sum;
        }
        loss *= scale;
        if !with_grad {
            return Ok((loss, None));
        }

        let mut grad = vec![0.0; self.params.len()];
        let layers: Vec<_> = self.layers().collect();
        let mut delta = d_out;
        for l in (0..n_layers).rev() {
            let (off, fan_in, fan_out) = layers[l];
            let x = &acts[l];
            let (gw, gb) = grad[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
            for r in 0..n {
                let xr = &x[r * fan_in..(r + 1) * fan_in];
                let dr = &delta[r * fan_out..(r + 1) * fan_out];
                for o in 0..fan_out {
                    axpy(dr[o], xr, &mut gw[o * fan_in..(o + 1) * fan_in]);
                    gb[o] += dr[o];
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + fan_in * fan_out];
            let mut prev = vec![0.0; n * fan_in];
            for r in 0..n {
                let dr = &delta[r * fan_out..(r + 1) * fan_out];
                let pr = &mut prev[r * fan_in..(r + 1) * fan_in];
                for o in 0..fan_out {
                    axpy(dr[o], &w[o * fan_in..(o + 1) * fan_in], pr);
                }
                // previous layer is hidden: tanh' = 1 - tanh^2
                let xr = &x[r * fan_in..(r + 1) * fan_in];
                for (p, &h) in pr.iter_mut().zip(xr) {
                    *p *= 1.0 - h * h;
                }
            }
            delta = prev;
        }
        Ok((loss, Some(grad)))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * c + k] * b[4 * c + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
