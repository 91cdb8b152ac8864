use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Denoiser, DenoiserInput};
use crate::error::{invalid, Error, Result};
use crate::latent::LatentPoint;
use crate::rng::RngStream;

pub const CHECKPOINT_FORMAT: &str = "cbb-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Softplus,
    /// Linear network; used to check gradients against closed forms.
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
            Activation::Identity => x,
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Softplus => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected network on `concat(x_t, y, z, label)`.
///
/// All weights and biases live in one flat buffer, layer by layer, each layer
/// as a row-major `out × in` weight block followed by its `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpDenoiser {
    widths: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
    version: u64,
}

/// Activations recorded by [`MlpDenoiser::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    /// Layer inputs `h_0 .. h_{L-1}` followed by the network output.
    activations: Vec<Vec<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("non-empty cache")
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    widths: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

impl MlpDenoiser {
    pub const DEFAULT_HIDDEN: [usize; 2] = [128, 128];

    /// Network for latent dimension `dim` with the default hidden layers.
    pub fn for_latent_dim(dim: usize, rng: &mut RngStream) -> Result<Self> {
        let mut widths = vec![3 * dim + 1];
        widths.extend(Self::DEFAULT_HIDDEN);
        widths.push(dim);
        Self::new(widths, Activation::Softplus, rng)
    }

    /// Weights drawn `N(0, 1/fan_in)`, biases zero.
    pub fn new(widths: Vec<usize>, activation: Activation, rng: &mut RngStream) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(invalid("widths", "need at least two positive layer widths"));
        }
        let mut params = Vec::with_capacity(Self::param_count_for(&widths));
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = 1.0 / (fan_in as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| scale * rng.standard_normal()));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self {
            widths,
            activation,
            params,
            version: 0,
        })
    }

    fn param_count_for(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn latent_dim(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access. Invalidates every outstanding [`ForwardCache`].
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn encode_input(input: &DenoiserInput) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * input.dim() + 1);
        v.extend_from_slice(input.x_t.as_slice());
        v.extend_from_slice(input.y.as_slice());
        v.extend_from_slice(input.z.as_slice());
        v.push(input.label);
        v
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardCache> {
        if input.len() != self.input_width() {
            return Err(Error::DimensionMismatch {
                expected: self.input_width(),
                actual: input.len(),
            });
        }
        let n_layers = self.widths.len() - 1;
        let mut activations = Vec::with_capacity(n_layers + 1);
        let mut pre = Vec::with_capacity(n_layers);
        activations.push(input.to_vec());
        let mut offset = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let h = &activations[l];
            let z: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    b[o] + row.iter().zip(h).map(|(a, x)| a * x).sum::<f64>()
                })
                .collect();
            let out = if l + 1 == n_layers {
                z.clone()
            } else {
                z.iter().map(|v| self.activation.apply(*v)).collect()
            };
            pre.push(z);
            activations.push(out);
        }
        Ok(ForwardCache {
            version: self.version,
            activations,
            pre,
        })
    }

    /// Adds `∂L/∂θ` into `grads` given `∂L/∂output`.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
        grads: &mut [f64],
    ) -> Result<()> {
        if cache.version != self.version {
            return Err(Error::StaleCache {
                cached: cache.version,
                current: self.version,
            });
        }
        if output_grad.len() != self.latent_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim(),
                actual: output_grad.len(),
            });
        }
        if grads.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                actual: grads.len(),
            });
        }
        let n_layers = self.widths.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for w in self.widths.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        // delta = ∂L/∂(pre-activation) of the current layer
        let mut delta = output_grad.to_vec();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let base = offsets[l];
            let h = &cache.activations[l];
            for o in 0..fan_out {
                let g = delta[o];
                if g != 0.0 {
                    let row = &mut grads[base + o * fan_in..base + (o + 1) * fan_in];
                    for (r, x) in row.iter_mut().zip(h) {
                        *r += g * x;
                    }
                }
                grads[base + fan_in * fan_out + o] += g;
            }
            if l > 0 {
                let w = &self.params[base..base + fan_in * fan_out];
                let mut next = vec![0.0; fan_in];
                for o in 0..fan_out {
                    let g = delta[o];
                    if g != 0.0 {
                        for (n, a) in next.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                            *n += g * a;
                        }
                    }
                }
                for (n, z) in next.iter_mut().zip(&cache.pre[l - 1]) {
                    *n *= self.activation.derivative(*z);
                }
                delta = next;
            }
        }
        Ok(())
    }

    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<Vec<f64>> {
        let mut grads = vec![0.0; self.params.len()];
        self.backward_into(cache, output_grad, &mut grads)?;
        Ok(grads)
    }

    pub fn to_json(&self) -> Result<String> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            widths: self.widths.clone(),
            activation: self.activation,
            params: self.params.clone(),
        };
        Ok(serde_json::to_string(&ck)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(invalid(
                "format",
                format!("expected `{CHECKPOINT_FORMAT}`, got `{}`", ck.format),
            ));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(invalid(
                "version",
                format!("unsupported checkpoint version {}", ck.version),
            ));
        }
        if ck.widths.len() < 2 || ck.widths.contains(&0) {
            return Err(invalid("widths", "need at least two positive layer widths"));
        }
        if ck.params.len() != Self::param_count_for(&ck.widths) {
            return Err(Error::DimensionMismatch {
                expected: Self::param_count_for(&ck.widths),
                actual: ck.params.len(),
            });
        }
        if ck.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("checkpoint parameters"));
        }
        Ok(Self {
            widths: ck.widths,
            activation: ck.activation,
            params: ck.params,
            version: 0,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl Denoiser for MlpDenoiser {
    fn predict(&self, input: &DenoiserInput) -> Result<LatentPoint> {
        input.x_t.ensure_dim(self.latent_dim())?;
        let cache = self.forward(&Self::encode_input(input))?;
        LatentPoint::new(cache.output().to_vec())
    }
}
