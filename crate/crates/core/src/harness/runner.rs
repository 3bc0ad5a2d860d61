use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{
    Agent, AgentCheckpoint, AgentKind, DqnAgent, EsnQ, Experience, MlpQ, MyopicAgent, QLearningAgent, QTable,
};
use crate::channel::FadingField;
use crate::environment::{generate_scenario, Environment, EnvironmentParts, Scenario, SensedState};
use crate::error::{DsaError, Result};
use crate::neural::{Mlp, MlpConfig};
use crate::reservoir::{ReadoutWeights, Reservoir};
use crate::rng::{derive_seed, SeedTree, SimRng, Stream};

use super::config::ExperimentConfig;
use super::metrics::{compute_metrics, IterationMetrics};

pub const CHECKPOINT_FORMAT: u32 = 1;

/// Loads the snapshot named in the config, or draws a fresh scenario.
pub fn load_scenario(config: &ExperimentConfig) -> Result<Scenario> {
    let sc = &config.scenario;
    let scenario = match &sc.snapshot {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| DsaError::io(path, e))?;
            Scenario::from_toml_str(&text)?
        }
        None => {
            let tree = SeedTree::new(config.seed);
            let mut rng = tree.rng(Stream::Scenario, 0);
            generate_scenario(&sc.spec(), sc.error_profile()?, config.seed, &mut rng)?
        }
    };
    if scenario.n_channels() != sc.n_channels || scenario.n_sus() != sc.n_sus {
        return Err(DsaError::config(
            "scenario.snapshot",
            format!(
                "snapshot has {} channels and {} SUs; config asks for {} and {}",
                scenario.n_channels(),
                scenario.n_sus(),
                sc.n_channels,
                sc.n_sus
            ),
        ));
    }
    Ok(scenario)
}

/// Environment whose random streams all hang off `tree`.
pub fn build_environment(config: &ExperimentConfig, scenario: &Scenario, tree: SeedTree) -> Result<Environment> {
    Environment::new(EnvironmentParts {
        scenario: scenario.clone(),
        schedule: config.scenario.deterministic_schedule()?,
        params: config.propagation,
        powers: config.powers,
        penalty: config.penalty,
        timing: config.reward_timing,
        fading: FadingField::new(tree.seed(Stream::Fading, 0), config.fading),
        markov_rng: tree.rng(Stream::Markov, 0),
        sensing_rngs: (0..scenario.n_sus() as u64)
            .map(|l| tree.rng(Stream::Sensing, l))
            .collect(),
    })
}

fn myopic_for(config: &ExperimentConfig, scenario: &Scenario, su: usize, allow_idle: bool) -> Result<MyopicAgent> {
    MyopicAgent::new(
        su,
        &scenario.geometry,
        scenario.matrices.clone(),
        scenario.sensing_error.for_su(su).to_vec(),
        &config.propagation,
        &config.powers,
        config.penalty,
        allow_idle,
    )
}

/// Fresh agent for SU `su`. Learning agents see only the channel count.
pub fn build_agent(config: &ExperimentConfig, scenario: &Scenario, su: usize) -> Result<Agent> {
    let spec = config.agent_for(su);
    let n = scenario.n_channels();
    let init_seed = SeedTree::new(config.seed).seed(Stream::AgentInit, su as u64);
    let params = spec.policy_params();
    Ok(match spec.kind {
        AgentKind::Myopic => Agent::Myopic(myopic_for(config, scenario, su, spec.allow_idle)?),
        AgentKind::QLearning => Agent::QLearning(QLearningAgent::new(n, params)?),
        AgentKind::DqnRc => {
            let mut rc = spec.reservoir;
            rc.seed = init_seed;
            let reservoir = Reservoir::init(rc, n)?;
            Agent::DqnRc(DqnAgent::new(EsnQ::new(reservoir, n + 1, spec.readout), params))
        }
        AgentKind::DqnMlp => {
            let mut sizes = vec![n];
            sizes.extend(&spec.hidden_layers);
            sizes.push(n + 1);
            let mlp = Mlp::new(&MlpConfig {
                layer_sizes: sizes,
                seed: init_seed,
            })?;
            Agent::DqnMlp(DqnAgent::new(MlpQ::new(mlp), params))
        }
    })
}

/// Rebuilds a trained agent from its checkpoint.
pub fn restore_agent(config: &ExperimentConfig, scenario: &Scenario, su: usize, cp: &AgentCheckpoint) -> Result<Agent> {
    let spec = config.agent_for(su);
    if cp.kind() != spec.kind {
        return Err(DsaError::Parse {
            what: "checkpoint".into(),
            message: format!("SU {su} holds a {} agent but the config asks for {}", cp.kind(), spec.kind),
        });
    }
    let n = scenario.n_channels();
    Ok(match cp {
        AgentCheckpoint::Myopic { allow_idle } => Agent::Myopic(myopic_for(config, scenario, su, *allow_idle)?),
        AgentCheckpoint::QLearning {
            params,
            epsilon,
            n_channels,
            table,
        } => {
            if *n_channels != n {
                return Err(DsaError::Parse {
                    what: "checkpoint".into(),
                    message: format!("q-table built for {n_channels} channels, scenario has {n}"),
                });
            }
            let mut a = QLearningAgent::new(n, *params)?;
            a.table = QTable::from_rows(n, table)?;
            a.epsilon = *epsilon;
            Agent::QLearning(a)
        }
        AgentCheckpoint::DqnRc {
            params,
            epsilon,
            reservoir,
            readout,
        } => {
            let reservoir = Reservoir::from_snapshot(reservoir)?;
            let readout = ReadoutWeights(readout.to_matrix()?);
            let mut a = DqnAgent::new(EsnQ::from_parts(reservoir, readout, spec.readout)?, *params);
            a.epsilon = *epsilon;
            Agent::DqnRc(a)
        }
        AgentCheckpoint::DqnMlp { params, epsilon, layers } => {
            let mut a = DqnAgent::new(MlpQ::new(Mlp::from_snapshot(layers)?), *params);
            a.epsilon = *epsilon;
            Agent::DqnMlp(a)
        }
    })
}

/// Plays `slots` slots. With `train` given, agents learn and run their
/// end-of-iteration update; otherwise they only act.
#[allow(clippy::too_many_arguments)]
fn play_iteration(
    env: &mut Environment,
    agents: &mut [Agent],
    explore: &mut [SimRng],
    train: Option<&mut [SimRng]>,
    first_obs: Vec<SensedState>,
    iteration: usize,
    slots: usize,
) -> Result<(IterationMetrics, Vec<SensedState>)> {
    let learn = train.is_some();
    let epsilon: Vec<f64> = agents.iter().map(Agent::epsilon).collect();
    for a in agents.iter_mut() {
        a.begin_iteration();
    }
    let mut obs = first_obs;
    let mut outcomes = Vec::with_capacity(slots);
    for t in 0..slots {
        let actions = agents
            .iter_mut()
            .zip(explore.iter_mut())
            .zip(&obs)
            .map(|((a, rng), s)| a.act(s, rng))
            .collect::<Result<Vec<_>>>()?;
        let out = env.step(&actions)?;
        let next = env.observe()?;
        for (l, agent) in agents.iter_mut().enumerate() {
            agent.observe(
                Experience {
                    s: obs[l].clone(),
                    a: actions[l],
                    r: out[l].reward,
                    s_next: next[l].clone(),
                    slot: t,
                },
                learn,
            )?;
        }
        outcomes.push(out);
        obs = next;
    }
    let metrics = compute_metrics(iteration, &outcomes, epsilon)?;
    if let Some(train) = train {
        agents
            .par_iter_mut()
            .zip(train.par_iter_mut())
            .try_for_each(|(a, rng)| a.end_iteration(iteration, rng))?;
    }
    Ok((metrics, obs))
}

/// Greedy, non-learning pass over a fresh environment drawn from the
/// evaluation stream. Deterministic given the config seed and the agents.
pub fn evaluate(config: &ExperimentConfig, scenario: &Scenario, agents: &[Agent]) -> Result<IterationMetrics> {
    let tree = SeedTree::new(SeedTree::new(config.seed).seed(Stream::Evaluation, 0));
    let mut env = build_environment(config, scenario, tree)?;
    let mut agents: Vec<Agent> = agents.to_vec();
    for a in &mut agents {
        a.set_epsilon(0.0);
    }
    let mut explore: Vec<SimRng> = (0..agents.len() as u64)
        .map(|l| tree.rng(Stream::Exploration, l))
        .collect();
    let obs = env.observe()?;
    let (m, _) = play_iteration(
        &mut env,
        &mut agents,
        &mut explore,
        None,
        obs,
        config.iterations,
        config.slots_per_iteration,
    )?;
    Ok(m)
}

/// A training run in progress.
pub struct Session {
    config: ExperimentConfig,
    scenario: Scenario,
    env: Environment,
    agents: Vec<Agent>,
    explore: Vec<SimRng>,
    train: Vec<SimRng>,
    obs: Vec<SensedState>,
    iteration: usize,
}

impl Session {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let scenario = load_scenario(config)?;
        Self::with_scenario(config, scenario)
    }

    pub fn with_scenario(config: &ExperimentConfig, scenario: Scenario) -> Result<Self> {
        config.validate()?;
        let tree = SeedTree::new(config.seed);
        let mut env = build_environment(config, &scenario, tree)?;
        let n_sus = scenario.n_sus();
        let agents = (0..n_sus)
            .map(|l| build_agent(config, &scenario, l))
            .collect::<Result<Vec<_>>>()?;
        let explore = (0..n_sus as u64).map(|l| tree.rng(Stream::Exploration, l)).collect();
        let train = (0..n_sus as u64)
            .map(|l| tree.rng(Stream::Exploration, n_sus as u64 + l))
            .collect();
        let obs = env.observe()?;
        Ok(Self {
            config: config.clone(),
            scenario,
            env,
            agents,
            explore,
            train,
            obs,
            iteration: 0,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.config.iterations
    }

    /// Runs one training iteration.
    pub fn step(&mut self) -> Result<IterationMetrics> {
        let obs = std::mem::take(&mut self.obs);
        let (m, next) = play_iteration(
            &mut self.env,
            &mut self.agents,
            &mut self.explore,
            Some(&mut self.train),
            obs,
            self.iteration,
            self.config.slots_per_iteration,
        )?;
        self.obs = next;
        self.iteration += 1;
        Ok(m)
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint {
            format: CHECKPOINT_FORMAT,
            config_hash: self.config.config_hash(),
            seed: self.config.seed,
            iterations_completed: self.iteration,
            scenario: self.scenario.clone(),
            agents: self.agents.iter().map(Agent::checkpoint).collect::<Result<_>>()?,
            evaluation: evaluate(&self.config, &self.scenario, &self.agents)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: u32,
    pub config_hash: String,
    pub seed: u64,
    pub iterations_completed: usize,
    pub scenario: Scenario,
    pub agents: Vec<AgentCheckpoint>,
    /// Greedy evaluation of the saved agents; `replay` must reproduce it.
    pub evaluation: IterationMetrics,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| DsaError::Parse {
            what: "checkpoint".into(),
            message: e.to_string(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cp: Checkpoint = serde_json::from_str(text).map_err(|e| DsaError::Parse {
            what: "checkpoint".into(),
            message: e.to_string(),
        })?;
        if cp.format != CHECKPOINT_FORMAT {
            return Err(DsaError::Parse {
                what: "checkpoint".into(),
                message: format!("unsupported format {}", cp.format),
            });
        }
        cp.scenario.validate()?;
        Ok(cp)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| DsaError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DsaError::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Re-runs a checkpoint's greedy evaluation.
pub fn replay(config: &ExperimentConfig, cp: &Checkpoint) -> Result<IterationMetrics> {
    if cp.config_hash != config.config_hash() {
        return Err(DsaError::config(
            "config",
            "does not match the configuration the checkpoint was trained with",
        ));
    }
    let mut config = config.clone();
    config.seed = cp.seed;
    config.iterations = cp.iterations_completed;
    config.validate()?;
    if cp.agents.len() != cp.scenario.n_sus() {
        return Err(DsaError::Parse {
            what: "checkpoint".into(),
            message: "need one agent per SU".into(),
        });
    }
    let agents = cp
        .agents
        .iter()
        .enumerate()
        .map(|(l, a)| restore_agent(&config, &cp.scenario, l, a))
        .collect::<Result<Vec<_>>>()?;
    evaluate(&config, &cp.scenario, &agents)
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub metrics: Vec<IterationMetrics>,
    pub checkpoint: Checkpoint,
}

/// Trains for `config.iterations`, calling `on_iteration` after each one.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    mut on_iteration: impl FnMut(&IterationMetrics) -> Result<()>,
) -> Result<RunResult> {
    let mut session = Session::new(config)?;
    let mut metrics = Vec::with_capacity(config.iterations);
    while !session.is_done() {
        let m = session.step()?;
        on_iteration(&m)?;
        metrics.push(m);
    }
    Ok(RunResult {
        metrics,
        checkpoint: session.checkpoint()?,
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunResult> {
    run_experiment_with(config, |_| Ok(()))
}

/// Seed of the k-th sweep replicate. Kept below 2^63 so it fits a TOML integer.
pub fn sweep_seed(master: u64, k: usize) -> u64 {
    derive_seed(&[master, Stream::Sweep as u64, k as u64]) >> 1
}

/// Runs `n_seeds` replicates in parallel, each with its own derived seed.
pub fn sweep(config: &ExperimentConfig, n_seeds: usize) -> Result<Vec<(u64, RunResult)>> {
    if n_seeds == 0 {
        return Err(DsaError::config("seeds", "need at least one seed"));
    }
    config.validate()?;
    (0..n_seeds)
        .into_par_iter()
        .map(|k| {
            let mut c = config.clone();
            c.seed = sweep_seed(config.seed, k);
            run_experiment(&c).map(|r| (c.seed, r))
        })
        .collect()
}
