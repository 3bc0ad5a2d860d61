//! Spectrum-access policies.
//!
//! Learning agents (DQN and tabular Q-learning) are built without access to
//! the transition matrices or sensing-error probabilities: their constructors
//! never see a [`Scenario`](crate::environment::Scenario). Only the myopic
//! baseline is handed those statistics.

mod dqn;
mod myopic;
mod qtable;

pub use dqn::{dqn_train_iteration, DqnAgent, DqnPair, EsnQ, MlpQ, QNetwork, ReadoutTraining};
pub use myopic::{myopic_act, myopic_belief, myopic_expected_reward, MyopicAgent};
pub use qtable::{q_learning_update, QLearningAgent, QTable};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{Action, SensedState};
use crate::error::{DsaError, Result};
use crate::neural::LayerSnapshot;
use crate::reservoir::ReservoirSnapshot;
use crate::rng::SimRng;
use crate::snapshot::MatrixSnapshot;

/// One stored transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub s: SensedState,
    pub a: Action,
    pub r: f64,
    pub s_next: SensedState,
    /// Slot index within the iteration, 0-based.
    pub slot: usize,
}

/// ε(k) = max(floor, start · decay^k) for iteration k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub decay: f64,
    pub floor: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            decay: 0.995,
            floor: 0.02,
        }
    }
}

impl EpsilonSchedule {
    pub fn constant(eps: f64) -> Self {
        Self {
            start: eps,
            decay: 1.0,
            floor: eps,
        }
    }

    pub fn at(&self, iteration: usize) -> f64 {
        let decayed = self.start * self.decay.powi(iteration.min(i32::MAX as usize) as i32);
        decayed.max(self.floor).min(1.0)
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.start)
            && (0.0..=1.0).contains(&self.decay)
            && (0.0..=1.0).contains(&self.floor);
        if !ok {
            return Err(DsaError::config(field, "start, decay and floor must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyParams {
    pub gamma: f64,
    pub learning_rate: f64,
    pub epsilon: EpsilonSchedule,
    /// Training passes over each iteration's buffer.
    pub epochs: usize,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            learning_rate: 0.01,
            epsilon: EpsilonSchedule::default(),
            epochs: 1,
        }
    }
}

impl PolicyParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(DsaError::config(format!("{prefix}.gamma"), "must lie in [0, 1]"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(DsaError::config(format!("{prefix}.learning_rate"), "must be positive"));
        }
        if self.epochs == 0 {
            return Err(DsaError::config(format!("{prefix}.epochs"), "must be at least 1"));
        }
        self.epsilon.validate(&format!("{prefix}.epsilon"))
    }
}

/// Greedy with probability 1 − ε (uniform tie-break), uniform otherwise.
pub fn epsilon_greedy<R: Rng + ?Sized>(q: &[f64], epsilon: f64, rng: &mut R) -> Action {
    assert!(!q.is_empty(), "no actions to choose from");
    if rng.random::<f64>() < epsilon {
        return Action(rng.random_range(0..q.len()));
    }
    let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = q
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == best)
        .map(|(i, _)| i)
        .collect();
    if ties.len() == 1 {
        Action(ties[0])
    } else {
        Action(ties[rng.random_range(0..ties.len())])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Myopic,
    QLearning,
    DqnRc,
    DqnMlp,
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AgentKind::Myopic => "myopic",
            AgentKind::QLearning => "q_learning",
            AgentKind::DqnRc => "dqn_rc",
            AgentKind::DqnMlp => "dqn_mlp",
        };
        f.write_str(s)
    }
}

/// One SU's decision maker.
#[derive(Debug, Clone)]
pub enum Agent {
    Myopic(MyopicAgent),
    QLearning(QLearningAgent),
    DqnRc(DqnAgent<EsnQ>),
    DqnMlp(DqnAgent<MlpQ>),
}

impl Agent {
    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::Myopic(_) => AgentKind::Myopic,
            Agent::QLearning(_) => AgentKind::QLearning,
            Agent::DqnRc(_) => AgentKind::DqnRc,
            Agent::DqnMlp(_) => AgentKind::DqnMlp,
        }
    }

    /// Current exploration rate (0 for myopic).
    pub fn epsilon(&self) -> f64 {
        match self {
            Agent::Myopic(_) => 0.0,
            Agent::QLearning(a) => a.epsilon,
            Agent::DqnRc(a) => a.epsilon,
            Agent::DqnMlp(a) => a.epsilon,
        }
    }

    pub fn set_epsilon(&mut self, eps: f64) {
        match self {
            Agent::Myopic(_) => {}
            Agent::QLearning(a) => a.epsilon = eps,
            Agent::DqnRc(a) => a.epsilon = eps,
            Agent::DqnMlp(a) => a.epsilon = eps,
        }
    }

    pub fn begin_iteration(&mut self) {
        match self {
            Agent::Myopic(_) | Agent::QLearning(_) => {}
            Agent::DqnRc(a) => a.begin_iteration(),
            Agent::DqnMlp(a) => a.begin_iteration(),
        }
    }

    pub fn act(&mut self, sensed: &SensedState, rng: &mut SimRng) -> Result<Action> {
        match self {
            Agent::Myopic(a) => Ok(a.act(sensed)),
            Agent::QLearning(a) => a.act(sensed, rng),
            Agent::DqnRc(a) => a.act(sensed, rng),
            Agent::DqnMlp(a) => a.act(sensed, rng),
        }
    }

    /// Feeds back the slot's transition. Q-learning learns online here; DQN
    /// agents buffer it for the end-of-iteration update.
    pub fn observe(&mut self, e: Experience, learn: bool) -> Result<()> {
        if !learn {
            return Ok(());
        }
        match self {
            Agent::Myopic(_) => Ok(()),
            Agent::QLearning(a) => a.observe(&e),
            Agent::DqnRc(a) => {
                a.buffer.push(e);
                Ok(())
            }
            Agent::DqnMlp(a) => {
                a.buffer.push(e);
                Ok(())
            }
        }
    }

    /// Runs end-of-iteration training (if any) and advances the ε schedule.
    pub fn end_iteration(&mut self, iteration: usize, rng: &mut SimRng) -> Result<()> {
        match self {
            Agent::Myopic(_) => Ok(()),
            Agent::QLearning(a) => {
                a.epsilon = a.params.epsilon.at(iteration + 1);
                Ok(())
            }
            Agent::DqnRc(a) => a.end_iteration(iteration, rng),
            Agent::DqnMlp(a) => a.end_iteration(iteration, rng),
        }
    }

    pub fn checkpoint(&self) -> Result<AgentCheckpoint> {
        Ok(match self {
            Agent::Myopic(a) => AgentCheckpoint::Myopic {
                allow_idle: a.allow_idle,
            },
            Agent::QLearning(a) => AgentCheckpoint::QLearning {
                params: a.params,
                epsilon: a.epsilon,
                n_channels: a.table.n_channels(),
                table: a.table.rows_sorted(),
            },
            Agent::DqnRc(a) => AgentCheckpoint::DqnRc {
                params: a.params,
                epsilon: a.epsilon,
                reservoir: a.pair.eval.reservoir().snapshot(),
                readout: MatrixSnapshot::from_matrix(&a.pair.eval.readout().0),
            },
            Agent::DqnMlp(a) => AgentCheckpoint::DqnMlp {
                params: a.params,
                epsilon: a.epsilon,
                layers: a.pair.eval.mlp().snapshot(),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QRow {
    /// Sensed bit-vector packed with channel 0 as the least significant bit.
    pub state: u64,
    pub q: Vec<f64>,
}

/// Serialized agent: kind tag, hyperparameters and learned weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentCheckpoint {
    Myopic {
        allow_idle: bool,
    },
    QLearning {
        params: PolicyParams,
        epsilon: f64,
        n_channels: usize,
        table: Vec<QRow>,
    },
    DqnRc {
        params: PolicyParams,
        epsilon: f64,
        reservoir: ReservoirSnapshot,
        readout: MatrixSnapshot,
    },
    DqnMlp {
        params: PolicyParams,
        epsilon: f64,
        layers: Vec<LayerSnapshot>,
    },
}

impl AgentCheckpoint {
    pub fn kind(&self) -> AgentKind {
        match self {
            AgentCheckpoint::Myopic { .. } => AgentKind::Myopic,
            AgentCheckpoint::QLearning { .. } => AgentKind::QLearning,
            AgentCheckpoint::DqnRc { .. } => AgentKind::DqnRc,
            AgentCheckpoint::DqnMlp { .. } => AgentKind::DqnMlp,
        }
    }
}
