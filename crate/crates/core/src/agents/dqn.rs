use std::sync::Arc;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::environment::{Action, SensedState};
use crate::error::{DsaError, Result};
use crate::neural::Mlp;
use crate::reservoir::{
    readout_loss, ridge_readout, train_readout, ReadoutSample, ReadoutWeights, Reservoir, ReservoirState,
};
use crate::rng::SimRng;

use super::{epsilon_greedy, Experience, PolicyParams};

/// A trainable Q-function usable inside [`DqnPair`].
pub trait QNetwork: Clone {
    fn n_actions(&self) -> usize;

    /// Clears any recurrent context; called at the start of every iteration.
    fn reset_context(&mut self);

    /// Feeds the next observation and returns its Q-values.
    fn step(&mut self, input: &[f64]) -> Result<Vec<f64>>;

    /// Q-values along a sequence, starting from a cleared context.
    fn sequence_q(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>>;

    /// Trains on one iteration's buffer, bootstrapping from `target`.
    fn train_on(&mut self, target: &Self, buffer: &[Experience], params: &PolicyParams, rng: &mut SimRng) -> Result<()>;

    /// ½·Σ (r + γ·max Q_target(s') − Q(s, a))² over the buffer.
    fn buffer_loss(&self, target: &Self, buffer: &[Experience], gamma: f64) -> Result<f64>;

    /// Overwrites this network's trainable weights with `other`'s.
    fn copy_weights_from(&mut self, other: &Self);
}

/// Evaluation and target networks of identical structure.
#[derive(Debug, Clone)]
pub struct DqnPair<Q> {
    pub eval: Q,
    pub target: Q,
}

impl<Q: QNetwork> DqnPair<Q> {
    pub fn new(net: Q) -> Self {
        Self {
            target: net.clone(),
            eval: net,
        }
    }
}

fn check_buffer(buffer: &[Experience]) -> Result<()> {
    if buffer.is_empty() {
        return Err(DsaError::Contract("empty experience buffer".into()));
    }
    for (t, e) in buffer.iter().enumerate() {
        if e.slot != t {
            return Err(DsaError::Contract(format!(
                "experience {t} carries slot index {}; buffer must be contiguous from 0",
                e.slot
            )));
        }
        if let Some(next) = buffer.get(t + 1) {
            if next.s != e.s_next {
                return Err(DsaError::Contract(format!(
                    "experience {t}'s next state does not match experience {}'s state",
                    t + 1
                )));
            }
        }
    }
    Ok(())
}

/// One iteration of training: fit the evaluation network to
/// r + γ·max Q_target(s', ·), then copy it into the target network.
pub fn dqn_train_iteration<Q: QNetwork>(
    pair: &mut DqnPair<Q>,
    buffer: &[Experience],
    params: &PolicyParams,
    rng: &mut SimRng,
) -> Result<()> {
    check_buffer(buffer)?;
    pair.eval.train_on(&pair.target, buffer, params, rng)?;
    pair.target.copy_weights_from(&pair.eval);
    Ok(())
}

fn max_q(q: &[f64]) -> f64 {
    q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReadoutTraining {
    #[default]
    Sgd,
    /// Closed-form refit of each action's row every iteration.
    Ridge { lambda: f64 },
}

/// Reservoir Q-network. The reservoir is shared read-only between the
/// evaluation and target copies.
#[derive(Debug, Clone)]
pub struct EsnQ {
    reservoir: Arc<Reservoir>,
    readout: ReadoutWeights,
    state: ReservoirState,
    training: ReadoutTraining,
}

impl EsnQ {
    pub fn new(reservoir: Reservoir, n_actions: usize, training: ReadoutTraining) -> Self {
        Self::with_readout(Arc::new(reservoir), ReadoutWeights::zeros(n_actions, 0), training, true)
    }

    fn with_readout(reservoir: Arc<Reservoir>, readout: ReadoutWeights, training: ReadoutTraining, fresh: bool) -> Self {
        let readout = if fresh {
            ReadoutWeights::zeros(readout.n_actions(), reservoir.n_features())
        } else {
            readout
        };
        Self {
            state: reservoir.zero_state(),
            reservoir,
            readout,
            training,
        }
    }

    pub fn from_parts(reservoir: Reservoir, readout: ReadoutWeights, training: ReadoutTraining) -> Result<Self> {
        if readout.0.ncols() != reservoir.n_features() {
            return Err(DsaError::Parse {
                what: "readout snapshot".into(),
                message: format!(
                    "{} columns for {} reservoir features",
                    readout.0.ncols(),
                    reservoir.n_features()
                ),
            });
        }
        Ok(Self::with_readout(Arc::new(reservoir), readout, training, false))
    }

    pub fn reservoir(&self) -> &Reservoir {
        &self.reservoir
    }

    pub fn readout(&self) -> &ReadoutWeights {
        &self.readout
    }

    /// Reservoir features for every state of the buffer plus the final next
    /// state, replayed in slot order from a zero state.
    fn replay_features(&self, buffer: &[Experience]) -> Result<Vec<DVector<f64>>> {
        let inputs: Vec<Vec<f64>> = buffer
            .iter()
            .map(|e| e.s.to_inputs())
            .chain(buffer.last().map(|e| e.s_next.to_inputs()))
            .collect();
        self.features_along(&inputs)
    }

    fn features_along(&self, inputs: &[Vec<f64>]) -> Result<Vec<DVector<f64>>> {
        let mut state = self.reservoir.zero_state();
        inputs
            .iter()
            .map(|u| {
                state = self.reservoir.update_state(&state, u)?;
                Ok(self.reservoir.features(&state, u))
            })
            .collect()
    }

    fn samples(&self, target: &Self, buffer: &[Experience], gamma: f64) -> Result<Vec<ReadoutSample>> {
        let feats = self.replay_features(buffer)?;
        Ok(buffer
            .iter()
            .enumerate()
            .map(|(t, e)| ReadoutSample {
                features: feats[t].clone(),
                action: e.a.0,
                target: e.r + gamma * max_q(&target.readout.q_values(&feats[t + 1])),
            })
            .collect())
    }
}

impl QNetwork for EsnQ {
    fn n_actions(&self) -> usize {
        self.readout.n_actions()
    }

    fn reset_context(&mut self) {
        self.state = self.reservoir.zero_state();
    }

    fn step(&mut self, input: &[f64]) -> Result<Vec<f64>> {
        self.state = self.reservoir.update_state(&self.state, input)?;
        Ok(self.readout.q_values(&self.reservoir.features(&self.state, input)))
    }

    fn sequence_q(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .features_along(inputs)?
            .iter()
            .map(|f| self.readout.q_values(f))
            .collect())
    }

    fn train_on(&mut self, target: &Self, buffer: &[Experience], params: &PolicyParams, _rng: &mut SimRng) -> Result<()> {
        let samples = self.samples(target, buffer, params.gamma)?;
        match self.training {
            ReadoutTraining::Sgd => {
                for _ in 0..params.epochs {
                    train_readout(&samples, &mut self.readout, params.learning_rate)?;
                }
            }
            ReadoutTraining::Ridge { lambda } => ridge_readout(&samples, &mut self.readout, lambda)?,
        }
        Ok(())
    }

    fn buffer_loss(&self, target: &Self, buffer: &[Experience], gamma: f64) -> Result<f64> {
        check_buffer(buffer)?;
        Ok(readout_loss(&self.samples(target, buffer, gamma)?, &self.readout))
    }

    fn copy_weights_from(&mut self, other: &Self) {
        self.readout = other.readout.clone();
    }
}

/// Feedforward Q-network; no recurrent context.
#[derive(Debug, Clone)]
pub struct MlpQ {
    mlp: Mlp,
}

impl MlpQ {
    pub fn new(mlp: Mlp) -> Self {
        Self { mlp }
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    fn targets(&self, target: &Self, buffer: &[Experience], gamma: f64) -> Result<Vec<f64>> {
        buffer
            .iter()
            .map(|e| Ok(e.r + gamma * max_q(&target.mlp.forward(&e.s_next.to_inputs())?)))
            .collect()
    }
}

impl QNetwork for MlpQ {
    fn n_actions(&self) -> usize {
        self.mlp.n_outputs()
    }

    fn reset_context(&mut self) {}

    fn step(&mut self, input: &[f64]) -> Result<Vec<f64>> {
        self.mlp.forward(input)
    }

    fn sequence_q(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        inputs.iter().map(|u| self.mlp.forward(u)).collect()
    }

    fn train_on(&mut self, target: &Self, buffer: &[Experience], params: &PolicyParams, rng: &mut SimRng) -> Result<()> {
        let targets = self.targets(target, buffer, params.gamma)?;
        let inputs: Vec<Vec<f64>> = buffer.iter().map(|e| e.s.to_inputs()).collect();
        let mut order: Vec<usize> = (0..buffer.len()).collect();
        for _ in 0..params.epochs {
            order.shuffle(rng);
            for &t in &order {
                self.mlp
                    .backward(&inputs[t], buffer[t].a.0, targets[t], params.learning_rate)?;
            }
        }
        Ok(())
    }

    fn buffer_loss(&self, target: &Self, buffer: &[Experience], gamma: f64) -> Result<f64> {
        let targets = self.targets(target, buffer, gamma)?;
        buffer
            .iter()
            .zip(targets)
            .map(|(e, y)| self.mlp.loss(&e.s.to_inputs(), e.a.0, y))
            .sum()
    }

    fn copy_weights_from(&mut self, other: &Self) {
        self.mlp = other.mlp.clone();
    }
}

#[derive(Debug, Clone)]
pub struct DqnAgent<Q> {
    pub pair: DqnPair<Q>,
    pub params: PolicyParams,
    pub epsilon: f64,
    pub buffer: Vec<Experience>,
}

impl<Q: QNetwork> DqnAgent<Q> {
    pub fn new(net: Q, params: PolicyParams) -> Self {
        Self {
            pair: DqnPair::new(net),
            epsilon: params.epsilon.at(0),
            params,
            buffer: Vec::new(),
        }
    }

    pub fn begin_iteration(&mut self) {
        self.pair.eval.reset_context();
        self.buffer.clear();
    }

    pub fn act(&mut self, sensed: &SensedState, rng: &mut SimRng) -> Result<Action> {
        let q = self.pair.eval.step(&sensed.to_inputs())?;
        Ok(epsilon_greedy(&q, self.epsilon, rng))
    }

    pub fn end_iteration(&mut self, iteration: usize, rng: &mut SimRng) -> Result<()> {
        if !self.buffer.is_empty() {
            let buffer = std::mem::take(&mut self.buffer);
            dqn_train_iteration(&mut self.pair, &buffer, &self.params, rng)?;
        }
        self.epsilon = self.params.epsilon.at(iteration + 1);
        Ok(())
    }
}
