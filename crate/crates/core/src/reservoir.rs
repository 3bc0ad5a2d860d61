//! Echo state network used as a Q-function approximator.
//!
//! The input and recurrent weights are drawn once and frozen; only the linear
//! readout over `[state; input; 1]` is ever trained.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{DsaError, Result};
use crate::rng::SimRng;
use crate::snapshot::MatrixSnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReservoirConfig {
    pub n_reservoir: usize,
    pub spectral_radius: f64,
    pub input_scale: f64,
    pub connectivity: f64,
    pub leak_rate: f64,
    pub seed: u64,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self {
            n_reservoir: 64,
            spectral_radius: 0.9,
            input_scale: 1.0,
            connectivity: 0.2,
            leak_rate: 1.0,
            seed: 0,
        }
    }
}

impl ReservoirConfig {
    pub fn validate(&self) -> Result<()> {
        let field = |f: &str, m: &str| Err(DsaError::config(format!("reservoir.{f}"), m));
        if self.n_reservoir == 0 {
            return field("n_reservoir", "must be positive");
        }
        if !(self.spectral_radius > 0.0 && self.spectral_radius < 1.0) {
            return field("spectral_radius", "must lie in (0, 1)");
        }
        if !(self.input_scale > 0.0) {
            return field("input_scale", "must be positive");
        }
        if !(self.connectivity > 0.0 && self.connectivity <= 1.0) {
            return field("connectivity", "must lie in (0, 1]");
        }
        if !(self.leak_rate > 0.0 && self.leak_rate <= 1.0) {
            return field("leak_rate", "must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirState(pub DVector<f64>);

const MAX_INIT_ATTEMPTS: usize = 16;

/// Fixed part of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Reservoir {
    config: ReservoirConfig,
    n_input: usize,
    /// n_reservoir × (n_input + 1); last column is the bias.
    w_in: DMatrix<f64>,
    w_rec: DMatrix<f64>,
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

impl Reservoir {
    pub fn init(config: ReservoirConfig, n_input: usize) -> Result<Self> {
        config.validate()?;
        let n = config.n_reservoir;
        let mut rng = SimRng::seed_from_u64(config.seed);
        for _ in 0..MAX_INIT_ATTEMPTS {
            let w_rec = DMatrix::from_fn(n, n, |_, _| {
                if rng.random::<f64>() < config.connectivity {
                    rng.random_range(-1.0..1.0)
                } else {
                    0.0
                }
            });
            let rho = spectral_radius(&w_rec);
            if !(rho.is_finite() && rho > 1e-8) {
                continue;
            }
            let w_rec = w_rec * (config.spectral_radius / rho);
            let w_in = DMatrix::from_fn(n, n_input + 1, |_, _| {
                config.input_scale * rng.random_range(-1.0..1.0)
            });
            return Ok(Self {
                config,
                n_input,
                w_in,
                w_rec,
            });
        }
        Err(DsaError::Training(format!(
            "could not draw a non-degenerate {n}x{n} reservoir in {MAX_INIT_ATTEMPTS} attempts"
        )))
    }

    pub fn config(&self) -> &ReservoirConfig {
        &self.config
    }

    pub fn n_input(&self) -> usize {
        self.n_input
    }

    pub fn n_reservoir(&self) -> usize {
        self.config.n_reservoir
    }

    /// Length of the readout feature vector `[x; u; 1]`.
    /// Input weights; the last column is the bias.
    pub fn w_in(&self) -> &DMatrix<f64> {
        &self.w_in
    }

    pub fn w_rec(&self) -> &DMatrix<f64> {
        &self.w_rec
    }

    pub fn n_features(&self) -> usize {
        self.config.n_reservoir + self.n_input + 1
    }

    pub fn zero_state(&self) -> ReservoirState {
        ReservoirState(DVector::zeros(self.config.n_reservoir))
    }

    /// x' = (1 − a)·x + a·tanh(W_rec·x + W_in·[u; 1])
    pub fn update_state(&self, state: &ReservoirState, input: &[f64]) -> Result<ReservoirState> {
        if input.len() != self.n_input {
            return Err(DsaError::Contract(format!(
                "reservoir expects {} inputs, got {}",
                self.n_input,
                input.len()
            )));
        }
        let bias_col = self.n_input;
        let mut pre = &self.w_rec * &state.0;
        for (j, &u) in input.iter().enumerate() {
            pre.axpy(u, &self.w_in.column(j), 1.0);
        }
        pre += self.w_in.column(bias_col);
        let a = self.config.leak_rate;
        let next = state.0.zip_map(&pre, |x, p| (1.0 - a) * x + a * p.tanh());
        Ok(ReservoirState(next))
    }

    pub fn features(&self, state: &ReservoirState, input: &[f64]) -> DVector<f64> {
        let mut f = DVector::zeros(self.n_features());
        f.rows_mut(0, self.config.n_reservoir).copy_from(&state.0);
        for (j, &u) in input.iter().enumerate() {
            f[self.config.n_reservoir + j] = u;
        }
        f[self.n_features() - 1] = 1.0;
        f
    }

    /// SHA-256 over the frozen weights' bit patterns.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for v in self.w_in.iter().chain(self.w_rec.iter()) {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn snapshot(&self) -> ReservoirSnapshot {
        ReservoirSnapshot {
            config: self.config,
            n_input: self.n_input,
            w_in: MatrixSnapshot::from_matrix(&self.w_in),
            w_rec: MatrixSnapshot::from_matrix(&self.w_rec),
        }
    }

    pub fn from_snapshot(s: &ReservoirSnapshot) -> Result<Self> {
        let w_in = s.w_in.to_matrix()?;
        let w_rec = s.w_rec.to_matrix()?;
        let n = s.config.n_reservoir;
        if w_rec.shape() != (n, n) || w_in.shape() != (n, s.n_input + 1) {
            return Err(DsaError::Parse {
                what: "reservoir snapshot".into(),
                message: "weight shapes do not match the config".into(),
            });
        }
        Ok(Self {
            config: s.config,
            n_input: s.n_input,
            w_in,
            w_rec,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirSnapshot {
    pub config: ReservoirConfig,
    pub n_input: usize,
    pub w_in: MatrixSnapshot,
    pub w_rec: MatrixSnapshot,
}

/// Trainable readout, one row per action.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutWeights(pub DMatrix<f64>);

impl ReadoutWeights {
    pub fn zeros(n_actions: usize, n_features: usize) -> Self {
        Self(DMatrix::zeros(n_actions, n_features))
    }

    pub fn n_actions(&self) -> usize {
        self.0.nrows()
    }

    pub fn q_values(&self, features: &DVector<f64>) -> Vec<f64> {
        (&self.0 * features).iter().copied().collect()
    }

    pub fn q(&self, features: &DVector<f64>, action: usize) -> f64 {
        self.0.row(action).transpose().dot(features)
    }
}

/// Q(x, u) = W_out·[x; u; 1]
pub fn q_values(
    reservoir: &Reservoir,
    state: &ReservoirState,
    input: &[f64],
    weights: &ReadoutWeights,
) -> Vec<f64> {
    weights.q_values(&reservoir.features(state, input))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutSample {
    pub features: DVector<f64>,
    pub action: usize,
    pub target: f64,
}

/// Half squared TD error summed over the batch.
pub fn readout_loss(batch: &[ReadoutSample], weights: &ReadoutWeights) -> f64 {
    batch
        .iter()
        .map(|s| 0.5 * (s.target - weights.q(&s.features, s.action)).powi(2))
        .sum()
}

/// Gradient of [`readout_loss`] with respect to the readout matrix.
pub fn readout_gradient(batch: &[ReadoutSample], weights: &ReadoutWeights) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(weights.0.nrows(), weights.0.ncols());
    for s in batch {
        let err = weights.q(&s.features, s.action) - s.target;
        let mut row = g.row_mut(s.action);
        row += s.features.transpose() * err;
    }
    g
}

fn check_targets(batch: &[ReadoutSample], weights: &ReadoutWeights) -> Result<()> {
    for (i, s) in batch.iter().enumerate() {
        if !s.target.is_finite() {
            return Err(DsaError::Training(format!(
                "non-finite TD target at sample {i}; check reward scale and discount"
            )));
        }
        if s.action >= weights.n_actions() || s.features.len() != weights.0.ncols() {
            return Err(DsaError::Contract(format!("sample {i} does not fit the readout shape")));
        }
    }
    Ok(())
}

/// One SGD pass over the batch, in order. Each sample only moves the row of
/// the action it took.
pub fn train_readout(
    batch: &[ReadoutSample],
    weights: &mut ReadoutWeights,
    learning_rate: f64,
) -> Result<()> {
    if !(learning_rate >= 0.0) {
        return Err(DsaError::Domain(format!("learning rate {learning_rate} must be >= 0")));
    }
    check_targets(batch, weights)?;
    for s in batch {
        let err = s.target - weights.q(&s.features, s.action);
        let mut row = weights.0.row_mut(s.action);
        row += s.features.transpose() * (learning_rate * err);
    }
    if weights.0.iter().any(|v| !v.is_finite()) {
        return Err(DsaError::Training("readout weights diverged".into()));
    }
    Ok(())
}

/// Closed-form per-action ridge fit of the readout rows.
/// Actions without samples keep their current row.
pub fn ridge_readout(batch: &[ReadoutSample], weights: &mut ReadoutWeights, lambda: f64) -> Result<()> {
    if !(lambda > 0.0) {
        return Err(DsaError::Domain(format!("ridge penalty {lambda} must be > 0")));
    }
    check_targets(batch, weights)?;
    let d = weights.0.ncols();
    for a in 0..weights.n_actions() {
        let mut gram = DMatrix::<f64>::identity(d, d) * lambda;
        let mut rhs = DVector::<f64>::zeros(d);
        let mut seen = false;
        for s in batch.iter().filter(|s| s.action == a) {
            gram.ger(1.0, &s.features, &s.features, 1.0);
            rhs.axpy(s.target, &s.features, 1.0);
            seen = true;
        }
        if !seen {
            continue;
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| DsaError::Training("ridge system not positive definite".into()))?;
        let w = chol.solve(&rhs);
        weights.0.row_mut(a).copy_from(&w.transpose());
    }
    Ok(())
}
