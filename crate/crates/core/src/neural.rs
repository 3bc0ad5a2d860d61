//! Small feedforward Q-network with hand-written backpropagation.
//!
//! Hidden layers use tanh, the output layer is linear. Loss per sample is
//! ½·(target − Q(input, action))², so only the taken action's output
//! contributes a gradient.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{DsaError, Result};
use crate::rng::SimRng;
use crate::snapshot::MatrixSnapshot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    /// Full shape: input, hidden..., output.
    pub layer_sizes: Vec<usize>,
    pub seed: u64,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 3 {
            return Err(DsaError::config(
                "agent.hidden_layers",
                "need at least one hidden layer",
            ));
        }
        if self.layer_sizes.contains(&0) {
            return Err(DsaError::config("agent.hidden_layers", "layer sizes must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// out × in
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Per-layer gradients, same shapes as the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// Uniform init in ±1/√fan_in.
    pub fn new(config: &MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = SimRng::seed_from_u64(config.seed);
        let layers = config
            .layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                Layer {
                    weights: DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-bound..=bound)),
                    bias: DVector::from_fn(fan_out, |_, _| rng.random_range(-bound..=bound)),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.nrows())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.n_inputs() {
            return Err(DsaError::Contract(format!(
                "network expects {} inputs, got {}",
                self.n_inputs(),
                input.len()
            )));
        }
        Ok(())
    }

    /// Activations of every layer, input first.
    fn activations(&self, input: &[f64]) -> Vec<DVector<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(DVector::from_column_slice(input));
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.weights * acts.last().unwrap() + &layer.bias;
            if i < last {
                z.apply(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.activations(input).pop().unwrap().iter().copied().collect())
    }

    pub fn loss(&self, input: &[f64], action: usize, target: f64) -> Result<f64> {
        let q = self.forward(input)?;
        let qa = q
            .get(action)
            .ok_or_else(|| DsaError::Contract(format!("action {action} out of range")))?;
        Ok(0.5 * (target - qa).powi(2))
    }

    pub fn gradient(&self, input: &[f64], action: usize, target: f64) -> Result<(f64, MlpGradient)> {
        self.check_input(input)?;
        if action >= self.n_outputs() {
            return Err(DsaError::Contract(format!("action {action} out of range")));
        }
        let acts = self.activations(input);
        let out = acts.last().unwrap();
        let err = out[action] - target;
        let mut delta = DVector::zeros(out.len());
        delta[action] = err;

        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let a_prev = &acts[i];
            grads.push(Layer {
                weights: &delta * a_prev.transpose(),
                bias: delta.clone(),
            });
            if i > 0 {
                let back = layer.weights.transpose() * &delta;
                // a_prev = tanh(z) so tanh'(z) = 1 − a_prev².
                delta = back.zip_map(a_prev, |d, a| d * (1.0 - a * a));
            }
        }
        grads.reverse();
        Ok((0.5 * err * err, MlpGradient { layers: grads }))
    }

    /// One SGD step on a single sample; returns the pre-step loss.
    pub fn backward(&mut self, input: &[f64], action: usize, target: f64, learning_rate: f64) -> Result<f64> {
        if !(learning_rate >= 0.0) {
            return Err(DsaError::Domain(format!("learning rate {learning_rate} must be >= 0")));
        }
        if !target.is_finite() {
            return Err(DsaError::Training("non-finite TD target".into()));
        }
        let (loss, grad) = self.gradient(input, action, target)?;
        let finite = grad
            .layers
            .iter()
            .all(|g| g.weights.iter().chain(g.bias.iter()).all(|v| v.is_finite()));
        if !finite {
            return Err(DsaError::Training("non-finite gradient".into()));
        }
        for (layer, g) in self.layers.iter_mut().zip(&grad.layers) {
            layer.weights -= &g.weights * learning_rate;
            layer.bias.axpy(-learning_rate, &g.bias, 1.0);
        }
        Ok(loss)
    }

    pub fn scale_output(&mut self, alpha: f64) {
        if let Some(last) = self.layers.last_mut() {
            last.weights *= alpha;
            last.bias *= alpha;
        }
    }

    pub fn snapshot(&self) -> Vec<LayerSnapshot> {
        self.layers
            .iter()
            .map(|l| LayerSnapshot {
                weights: MatrixSnapshot::from_matrix(&l.weights),
                bias: MatrixSnapshot::from_vector(&l.bias),
            })
            .collect()
    }

    pub fn from_snapshot(layers: &[LayerSnapshot]) -> Result<Self> {
        let layers = layers
            .iter()
            .map(|l| {
                Ok(Layer {
                    weights: l.weights.to_matrix()?,
                    bias: l.bias.to_vector()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if layers.is_empty() {
            return Err(DsaError::Parse { what: "mlp snapshot".into(), message: "no layers".into() });
        }
        for w in layers.windows(2) {
            if w[0].weights.nrows() != w[1].weights.ncols() {
                return Err(DsaError::Parse {
                    what: "mlp snapshot".into(),
                    message: "consecutive layer shapes do not chain".into(),
                });
            }
        }
        if layers.iter().any(|l| l.bias.len() != l.weights.nrows()) {
            return Err(DsaError::Parse { what: "mlp snapshot".into(), message: "bias length mismatch".into() });
        }
        Ok(Self { layers })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSnapshot {
    pub weights: MatrixSnapshot,
    pub bias: MatrixSnapshot,
}
