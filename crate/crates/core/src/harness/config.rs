//! Experiment configuration (TOML). Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{AgentKind, EpsilonSchedule, PolicyParams};
use crate::agents::ReadoutTraining;
use crate::channel::{FadingMode, PropagationParams};
use crate::environment::{
    ChannelState, DeterministicSchedule, RewardTiming, ScenarioSpec, SensingErrorProfile, TransmitPowers,
};
use crate::error::{DsaError, Result};
use crate::reservoir::ReservoirConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub seed: u64,
    pub iterations: usize,
    pub slots_per_iteration: usize,
    /// Magnitude C of the PU-collision penalty.
    #[serde(default = "default_penalty")]
    pub penalty: f64,
    #[serde(default)]
    pub reward_timing: RewardTiming,
    #[serde(default)]
    pub fading: FadingMode,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub propagation: PropagationParams,
    #[serde(default)]
    pub powers: TransmitPowers,
    /// One entry applied to every SU, or exactly one per SU.
    pub agents: Vec<AgentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_penalty() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SensingErrorSpec {
    Uniform(f64),
    PerSu(Vec<Vec<f64>>),
}

impl Default for SensingErrorSpec {
    fn default() -> Self {
        SensingErrorSpec::Uniform(0.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_channels: usize,
    pub n_sus: usize,
    #[serde(default = "default_arena")]
    pub arena_m: f64,
    #[serde(default = "default_link")]
    pub link_distance_m: (f64, f64),
    #[serde(default = "default_p11")]
    pub p11_range: (f64, f64),
    #[serde(default = "default_p00")]
    pub p00_range: (f64, f64),
    #[serde(default)]
    pub sensing_error: SensingErrorSpec,
    /// Periodic PU pattern applied to every channel (1 = Inactive, 0 = Active).
    /// Replaces the Markov chains when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<u8>>,
    /// Load geometry, matrices and error profile from a saved snapshot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<PathBuf>,
}

fn default_arena() -> f64 {
    150.0
}
fn default_link() -> (f64, f64) {
    (20.0, 40.0)
}
fn default_p11() -> (f64, f64) {
    (0.7, 1.0)
}
fn default_p00() -> (f64, f64) {
    (0.0, 0.3)
}

impl ScenarioConfig {
    pub fn spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            n_channels: self.n_channels,
            n_sus: self.n_sus,
            arena_m: self.arena_m,
            link_distance_m: self.link_distance_m,
            p11_range: self.p11_range,
            p00_range: self.p00_range,
        }
    }

    pub fn error_profile(&self) -> Result<SensingErrorProfile> {
        let profile = match &self.sensing_error {
            SensingErrorSpec::Uniform(e) => SensingErrorProfile(vec![vec![*e; self.n_channels]; self.n_sus]),
            SensingErrorSpec::PerSu(rows) => SensingErrorProfile(rows.clone()),
        };
        profile.validate()?;
        if profile.0.len() != self.n_sus || profile.0.iter().any(|r| r.len() != self.n_channels) {
            return Err(DsaError::config(
                "scenario.sensing_error",
                format!("expected a {}x{} matrix", self.n_sus, self.n_channels),
            ));
        }
        Ok(profile)
    }

    pub fn deterministic_schedule(&self) -> Result<Option<DeterministicSchedule>> {
        let Some(pattern) = &self.schedule else {
            return Ok(None);
        };
        let states = pattern
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                ChannelState::from_bit(b)
                    .map_err(|_| DsaError::config(format!("scenario.schedule[{i}]"), "must be 0 or 1"))
            })
            .collect::<Result<Vec<_>>>()?;
        DeterministicSchedule::uniform(states, self.n_channels).map(Some)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub kind: AgentKind,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub epsilon: EpsilonSchedule,
    /// Reservoir shape for `dqn_rc`. Its `seed` is always re-derived from the
    /// run's master seed.
    #[serde(default)]
    pub reservoir: ReservoirConfig,
    #[serde(default)]
    pub readout: ReadoutTraining,
    /// Hidden layer widths for `dqn_mlp`.
    #[serde(default = "default_hidden")]
    pub hidden_layers: Vec<usize>,
    /// Lets the myopic agent stay idle when every channel looks unprofitable.
    #[serde(default = "default_true")]
    pub allow_idle: bool,
}

fn default_gamma() -> f64 {
    0.9
}
fn default_lr() -> f64 {
    0.01
}
fn default_epochs() -> usize {
    1
}
fn default_hidden() -> Vec<usize> {
    vec![64]
}
fn default_true() -> bool {
    true
}

impl AgentSpec {
    pub fn new(kind: AgentKind) -> Self {
        Self {
            kind,
            gamma: default_gamma(),
            learning_rate: default_lr(),
            epochs: default_epochs(),
            epsilon: EpsilonSchedule::default(),
            reservoir: ReservoirConfig::default(),
            readout: ReadoutTraining::default(),
            hidden_layers: default_hidden(),
            allow_idle: true,
        }
    }

    pub fn policy_params(&self) -> PolicyParams {
        PolicyParams {
            gamma: self.gamma,
            learning_rate: self.learning_rate,
            epsilon: self.epsilon,
            epochs: self.epochs,
        }
    }

    fn validate(&self, prefix: &str) -> Result<()> {
        self.policy_params().validate(prefix)?;
        match self.kind {
            AgentKind::QLearning if self.learning_rate >= 1.0 => Err(DsaError::config(
                format!("{prefix}.learning_rate"),
                "tabular learning rate must lie in (0, 1)",
            )),
            AgentKind::DqnRc => {
                self.reservoir
                    .validate()
                    .map_err(|e| rebase(e, "reservoir", &format!("{prefix}.reservoir")))?;
                if let ReadoutTraining::Ridge { lambda } = self.readout {
                    if !(lambda > 0.0) {
                        return Err(DsaError::config(format!("{prefix}.readout.lambda"), "must be positive"));
                    }
                }
                Ok(())
            }
            AgentKind::DqnMlp if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) => {
                Err(DsaError::config(
                    format!("{prefix}.hidden_layers"),
                    "need at least one hidden layer of positive width",
                ))
            }
            _ => Ok(()),
        }
    }
}

fn rebase(e: DsaError, from: &str, to: &str) -> DsaError {
    match e {
        DsaError::Config { field, message } => DsaError::Config {
            field: field.replacen(from, to, 1),
            message,
        },
        other => other,
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| DsaError::Parse {
            what: "experiment config".into(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DsaError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        // Relative snapshot paths resolve against the config's directory.
        if let (Some(snap), Some(dir)) = (&cfg.scenario.snapshot, path.parent()) {
            if snap.is_relative() {
                cfg.scenario.snapshot = Some(dir.join(snap));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| DsaError::Parse {
            what: "experiment config".into(),
            message: e.to_string(),
        })
    }

    /// Checks every field; errors name the offending path.
    pub fn validate(&self) -> Result<()> {
        if self.slots_per_iteration == 0 {
            return Err(DsaError::config("slots_per_iteration", "must be positive"));
        }
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return Err(DsaError::config("penalty", "must be positive"));
        }
        let sc = &self.scenario;
        if sc.n_channels == 0 {
            return Err(DsaError::config("scenario.n_channels", "must be positive"));
        }
        if sc.n_sus == 0 {
            return Err(DsaError::config("scenario.n_sus", "must be positive"));
        }
        for (field, (lo, hi)) in [("p11_range", sc.p11_range), ("p00_range", sc.p00_range)] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(DsaError::config(
                    format!("scenario.{field}"),
                    format!("[{lo}, {hi}] is not a sub-range of [0, 1]"),
                ));
            }
        }
        if !(sc.arena_m > 0.0) {
            return Err(DsaError::config("scenario.arena_m", "must be positive"));
        }
        let (dmin, dmax) = sc.link_distance_m;
        if !(dmin > 0.0 && dmin <= dmax) {
            return Err(DsaError::config("scenario.link_distance_m", "need 0 < min <= max"));
        }
        if dmin > sc.arena_m * std::f64::consts::SQRT_2 {
            return Err(DsaError::config(
                "scenario.link_distance_m",
                "minimum link distance exceeds the arena diagonal",
            ));
        }
        sc.error_profile()?;
        sc.deterministic_schedule()?;
        self.propagation.validate()?;
        if !(self.powers.su_mw >= 0.0 && self.powers.pu_mw >= 0.0) {
            return Err(DsaError::config("powers", "transmit powers must be non-negative"));
        }
        if self.agents.is_empty() {
            return Err(DsaError::config("agents", "need at least one agent spec"));
        }
        if self.agents.len() != 1 && self.agents.len() != sc.n_sus {
            return Err(DsaError::config(
                "agents",
                format!("give one spec for all SUs or exactly {} specs", sc.n_sus),
            ));
        }
        for (i, a) in self.agents.iter().enumerate() {
            a.validate(&format!("agents[{i}]"))?;
        }
        Ok(())
    }

    pub fn agent_for(&self, su: usize) -> &AgentSpec {
        if self.agents.len() == 1 {
            &self.agents[0]
        } else {
            &self.agents[su]
        }
    }

    /// Hash of everything except the seed and output location.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.seed = 0;
        c.output = None;
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    /// Same config with every SU running `kind`.
    pub fn with_agent_kind(&self, kind: AgentKind) -> Self {
        let mut c = self.clone();
        for a in &mut c.agents {
            a.kind = kind;
        }
        c
    }
}
