//! The multi-agent spectrum world: PU Markov chains, noisy sensing, and
//! resolution of simultaneous SU actions into rewards.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, FadingField, PropagationParams};
use crate::error::{DsaError, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub su_tx: Vec<Point>,
    pub su_rx: Vec<Point>,
    pub pu_tx: Vec<Point>,
    pub pu_rx: Vec<Point>,
}

impl Geometry {
    pub fn n_sus(&self) -> usize {
        self.su_tx.len()
    }

    pub fn n_channels(&self) -> usize {
        self.pu_tx.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.su_tx.len() != self.su_rx.len() {
            return Err(DsaError::config("geometry.su_rx", "must have one receiver per SU transmitter"));
        }
        if self.pu_tx.len() != self.pu_rx.len() {
            return Err(DsaError::config("geometry.pu_rx", "must have one receiver per PU transmitter"));
        }
        for (i, (tx, rx)) in self.su_tx.iter().zip(&self.su_rx).enumerate() {
            if !(tx.distance(rx) > 0.0) {
                return Err(DsaError::config(
                    format!("geometry.su_rx[{i}]"),
                    "receiver coincides with its transmitter",
                ));
            }
        }
        Ok(())
    }

    /// Distance from SU `k`'s transmitter to SU `i`'s receiver.
    pub fn su_link_distance(&self, k: usize, i: usize) -> f64 {
        self.su_tx[k].distance(&self.su_rx[i])
    }
}

/// Two-state Markov chain; state 0 is Active, state 1 is Inactive.
/// `pij` is Pr{next = j | current = i}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionMatrix {
    pub p00: f64,
    pub p01: f64,
    pub p10: f64,
    pub p11: f64,
}

impl TransitionMatrix {
    pub fn new(p11: f64, p00: f64) -> Result<Self> {
        let m = Self {
            p00,
            p01: 1.0 - p00,
            p10: 1.0 - p11,
            p11,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let entries = [self.p00, self.p01, self.p10, self.p11];
        if entries.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(DsaError::Domain(format!("transition entries must lie in [0,1]: {self:?}")));
        }
        if (self.p00 + self.p01 - 1.0).abs() > 1e-9 || (self.p10 + self.p11 - 1.0).abs() > 1e-9 {
            return Err(DsaError::Domain(format!("transition rows must sum to 1: {self:?}")));
        }
        Ok(())
    }

    /// Long-run fraction of slots spent Inactive: p01 / (p01 + p10).
    pub fn stationary_inactive(&self) -> f64 {
        let denom = self.p01 + self.p10;
        if denom == 0.0 {
            // Both states absorbing; no unique stationary law.
            0.5
        } else {
            self.p01 / denom
        }
    }

    pub fn next<R: Rng + ?Sized>(&self, current: ChannelState, rng: &mut R) -> ChannelState {
        let u: f64 = rng.random();
        let p_inactive = match current {
            ChannelState::Active => self.p01,
            ChannelState::Inactive => self.p11,
        };
        if u < p_inactive {
            ChannelState::Inactive
        } else {
            ChannelState::Active
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelState {
    /// PU transmitting (0).
    Active,
    /// Channel free for SUs (1).
    Inactive,
}

impl ChannelState {
    pub fn bit(self) -> u8 {
        match self {
            ChannelState::Active => 0,
            ChannelState::Inactive => 1,
        }
    }

    pub fn from_bit(bit: u8) -> Result<Self> {
        match bit {
            0 => Ok(ChannelState::Active),
            1 => Ok(ChannelState::Inactive),
            other => Err(DsaError::Domain(format!("channel state bit must be 0 or 1, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelOccupancy(pub Vec<ChannelState>);

impl ChannelOccupancy {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn state(&self, channel: usize) -> ChannelState {
        self.0[channel]
    }
}

/// One SU's sensed bit-vector, 1 meaning "looks Inactive".
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SensedState(pub Vec<u8>);

impl SensedState {
    pub fn from_occupancy(occ: &ChannelOccupancy) -> Self {
        SensedState(occ.0.iter().map(|s| s.bit()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Bits mapped to {-1, +1} network inputs.
    pub fn to_inputs(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b == 1 { 1.0 } else { -1.0 }).collect()
    }

    /// Packs the bits into an integer key (channel 0 is the least significant bit).
    pub fn key(&self) -> Result<u64> {
        if self.0.len() > 64 {
            return Err(DsaError::Contract(format!(
                "cannot key a sensed state of {} channels",
                self.0.len()
            )));
        }
        Ok(self
            .0
            .iter()
            .enumerate()
            .fold(0u64, |k, (i, &b)| k | (u64::from(b & 1) << i)))
    }
}

/// Per-(SU, channel) probability that the sensed bit differs from the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingErrorProfile(pub Vec<Vec<f64>>);

impl SensingErrorProfile {
    pub fn uniform(n_sus: usize, n_channels: usize, e: f64) -> Result<Self> {
        let p = Self(vec![vec![e; n_channels]; n_sus]);
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (l, row) in self.0.iter().enumerate() {
            for (n, &e) in row.iter().enumerate() {
                if !(0.0..=0.5).contains(&e) {
                    return Err(DsaError::config(
                        format!("scenario.sensing_error[{l}][{n}]"),
                        format!("error probability {e} outside [0, 0.5]"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn for_su(&self, l: usize) -> &[f64] {
        &self.0[l]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action(pub usize);

impl Action {
    pub const IDLE: Action = Action(0);

    pub fn new(value: usize, n_channels: usize) -> Result<Self> {
        if value > n_channels {
            return Err(DsaError::Contract(format!(
                "action {value} out of range 0..={n_channels}"
            )));
        }
        Ok(Action(value))
    }

    /// Zero-based channel index, or `None` for idle.
    pub fn channel(self) -> Option<usize> {
        self.0.checked_sub(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeLabel {
    Success,
    CollisionWithPu,
    CollisionWithSu,
    Idle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub label: OutcomeLabel,
    pub warning_received: bool,
    /// Zero-based channel accessed, if any.
    pub channel: Option<usize>,
    /// Other SUs sharing the channel.
    pub co_channel_sus: Vec<usize>,
    /// Linear SINR, when a rate was computed.
    pub sinr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransmitPowers {
    pub su_mw: f64,
    pub pu_mw: f64,
}

impl Default for TransmitPowers {
    fn default() -> Self {
        Self { su_mw: 20.0, pu_mw: 40.0 }
    }
}

/// Periodic channel activity, one pattern per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicSchedule {
    pub patterns: Vec<Vec<ChannelState>>,
}

impl DeterministicSchedule {
    pub fn uniform(pattern: Vec<ChannelState>, n_channels: usize) -> Result<Self> {
        let s = Self {
            patterns: vec![pattern; n_channels],
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patterns.iter().any(|p| p.is_empty()) {
            return Err(DsaError::config("scenario.schedule", "period must be at least 1"));
        }
        Ok(())
    }
}

pub fn step_deterministic(schedule: &DeterministicSchedule, t: u64) -> ChannelOccupancy {
    ChannelOccupancy(
        schedule
            .patterns
            .iter()
            .map(|p| p[(t % p.len() as u64) as usize])
            .collect(),
    )
}

pub fn step_markov<R: Rng + ?Sized>(
    occupancy: &ChannelOccupancy,
    matrices: &[TransitionMatrix],
    rng: &mut R,
) -> Result<ChannelOccupancy> {
    if occupancy.len() != matrices.len() {
        return Err(DsaError::Contract(format!(
            "{} channels but {} transition matrices",
            occupancy.len(),
            matrices.len()
        )));
    }
    Ok(ChannelOccupancy(
        occupancy
            .0
            .iter()
            .zip(matrices)
            .map(|(&s, m)| m.next(s, rng))
            .collect(),
    ))
}

/// Senses every channel for one SU, flipping each bit with its error probability.
pub fn sense_one<R: Rng + ?Sized>(
    occupancy: &ChannelOccupancy,
    errors: &[f64],
    rng: &mut R,
) -> Result<SensedState> {
    if occupancy.len() != errors.len() {
        return Err(DsaError::Contract(format!(
            "{} channels but {} error probabilities",
            occupancy.len(),
            errors.len()
        )));
    }
    Ok(SensedState(
        occupancy
            .0
            .iter()
            .zip(errors)
            .map(|(s, &e)| {
                let flip = rng.random::<f64>() < e;
                s.bit() ^ u8::from(flip)
            })
            .collect(),
    ))
}

pub fn sense<R: Rng + ?Sized>(
    occupancy: &ChannelOccupancy,
    errors: &SensingErrorProfile,
    rng: &mut R,
) -> Result<Vec<SensedState>> {
    errors
        .0
        .iter()
        .map(|row| sense_one(occupancy, row, rng))
        .collect()
}

pub(crate) fn su_key(k: usize) -> u64 {
    k as u64
}

/// Resolves one slot of simultaneous actions against `occupancy`.
///
/// Case precedence: idle → 0; Active channel → −`penalty` with a warning to
/// every SU transmitting there; otherwise the normalized rate with all other
/// SUs on the channel as interferers.
#[allow(clippy::too_many_arguments)]
pub fn resolve_actions(
    occupancy: &ChannelOccupancy,
    actions: &[Action],
    geometry: &Geometry,
    params: &PropagationParams,
    powers: &TransmitPowers,
    penalty: f64,
    fading: &FadingField,
    slot: u64,
) -> Result<Vec<StepOutcome>> {
    if actions.len() != geometry.n_sus() {
        return Err(DsaError::Contract(format!(
            "{} actions for {} SUs",
            actions.len(),
            geometry.n_sus()
        )));
    }
    let n = occupancy.len();
    if let Some(a) = actions.iter().find(|a| a.0 > n) {
        return Err(DsaError::Contract(format!("action {} out of range 0..={n}", a.0)));
    }

    let mut users: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (l, a) in actions.iter().enumerate() {
        if let Some(c) = a.channel() {
            users[c].push(l);
        }
    }

    actions
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let Some(c) = a.channel() else {
                return Ok(StepOutcome {
                    reward: 0.0,
                    label: OutcomeLabel::Idle,
                    warning_received: false,
                    channel: None,
                    co_channel_sus: Vec::new(),
                    sinr: None,
                });
            };
            let others: Vec<usize> = users[c].iter().copied().filter(|&k| k != i).collect();
            if occupancy.state(c) == ChannelState::Active {
                return Ok(StepOutcome {
                    reward: -penalty,
                    label: OutcomeLabel::CollisionWithPu,
                    warning_received: true,
                    channel: Some(c),
                    co_channel_sus: others,
                    sinr: None,
                });
            }
            let desired = fading
                .draw(slot, su_key(i), su_key(i), geometry.su_link_distance(i, i), params)?
                .gain();
            let gains = others
                .iter()
                .map(|&k| {
                    fading
                        .draw(slot, su_key(k), su_key(i), geometry.su_link_distance(k, i), params)
                        .map(|d| d.gain())
                })
                .collect::<Result<Vec<_>>>()?;
            let interferer_powers = vec![powers.su_mw; others.len()];
            let s = channel::sinr(powers.su_mw, desired, &interferer_powers, &gains, params)?;
            let label = if others.is_empty() {
                OutcomeLabel::Success
            } else {
                OutcomeLabel::CollisionWithSu
            };
            Ok(StepOutcome {
                reward: channel::achievable_rate(s, params)?,
                label,
                warning_received: false,
                channel: Some(c),
                co_channel_sus: others,
                sinr: Some(s),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n_channels: usize,
    pub n_sus: usize,
    pub arena_m: f64,
    pub link_distance_m: (f64, f64),
    pub p11_range: (f64, f64),
    pub p00_range: (f64, f64),
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n_channels: 22,
            n_sus: 1,
            arena_m: 150.0,
            link_distance_m: (20.0, 40.0),
            p11_range: (0.7, 1.0),
            p00_range: (0.0, 0.3),
        }
    }
}

/// A fully drawn scenario. Serializes to a snapshot that replays exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub geometry: Geometry,
    pub matrices: Vec<TransitionMatrix>,
    pub sensing_error: SensingErrorProfile,
}

impl Scenario {
    pub fn n_channels(&self) -> usize {
        self.matrices.len()
    }

    pub fn n_sus(&self) -> usize {
        self.geometry.n_sus()
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.geometry.n_channels() != self.matrices.len() {
            return Err(DsaError::config("scenario.matrices", "need one matrix per PU/channel"));
        }
        for (n, m) in self.matrices.iter().enumerate() {
            m.validate()
                .map_err(|e| DsaError::config(format!("scenario.matrices[{n}]"), e.to_string()))?;
        }
        self.sensing_error.validate()?;
        if self.sensing_error.0.len() != self.n_sus()
            || self.sensing_error.0.iter().any(|r| r.len() != self.n_channels())
        {
            return Err(DsaError::config(
                "scenario.sensing_error",
                "must be an n_sus × n_channels matrix",
            ));
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| DsaError::Parse {
            what: "scenario snapshot".into(),
            message: e.to_string(),
        })
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(s).map_err(|e| DsaError::Parse {
            what: "scenario snapshot".into(),
            message: e.to_string(),
        })?;
        sc.validate()?;
        Ok(sc)
    }
}

fn check_range(field: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
        return Err(DsaError::config(
            format!("scenario.{field}"),
            format!("[{lo}, {hi}] is not a sub-range of [0, 1]"),
        ));
    }
    Ok(())
}

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

const MAX_PLACEMENT_TRIES: usize = 10_000;

pub fn generate_scenario(
    spec: &ScenarioSpec,
    sensing_error: SensingErrorProfile,
    seed: u64,
    rng: &mut SimRng,
) -> Result<Scenario> {
    check_range("p11_range", spec.p11_range)?;
    check_range("p00_range", spec.p00_range)?;
    if !(spec.arena_m > 0.0) {
        return Err(DsaError::config("scenario.arena_m", "must be positive"));
    }
    let (dmin, dmax) = spec.link_distance_m;
    if !(dmin > 0.0 && dmin <= dmax) {
        return Err(DsaError::config(
            "scenario.link_distance_m",
            "need 0 < min <= max",
        ));
    }
    if dmin > spec.arena_m * std::f64::consts::SQRT_2 {
        return Err(DsaError::config(
            "scenario.link_distance_m",
            "minimum link distance exceeds the arena diagonal",
        ));
    }
    if spec.n_channels == 0 {
        return Err(DsaError::config("scenario.n_channels", "need at least one channel"));
    }

    let side = spec.arena_m;
    let point = |rng: &mut SimRng| Point::new(side * rng.random::<f64>(), side * rng.random::<f64>());

    let pu_tx: Vec<Point> = (0..spec.n_channels).map(|_| point(rng)).collect();
    let pu_rx: Vec<Point> = (0..spec.n_channels).map(|_| point(rng)).collect();
    let mut su_tx = Vec::with_capacity(spec.n_sus);
    let mut su_rx = Vec::with_capacity(spec.n_sus);
    for l in 0..spec.n_sus {
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_TRIES {
            let tx = point(rng);
            let d = uniform_in(rng, (dmin, dmax));
            let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
            let rx = Point::new(tx.x + d * phi.cos(), tx.y + d * phi.sin());
            if (0.0..=side).contains(&rx.x) && (0.0..=side).contains(&rx.y) {
                placed = Some((tx, rx));
                break;
            }
        }
        let (tx, rx) = placed.ok_or_else(|| {
            DsaError::config(
                "scenario.link_distance_m",
                format!("could not fit SU {l}'s link inside the arena"),
            )
        })?;
        su_tx.push(tx);
        su_rx.push(rx);
    }

    let matrices = (0..spec.n_channels)
        .map(|_| {
            let p11 = uniform_in(rng, spec.p11_range);
            let p00 = uniform_in(rng, spec.p00_range);
            TransitionMatrix::new(p11, p00)
        })
        .collect::<Result<Vec<_>>>()?;

    let sc = Scenario {
        seed,
        geometry: Geometry { su_tx, su_rx, pu_tx, pu_rx },
        matrices,
        sensing_error,
    };
    sc.validate()?;
    Ok(sc)
}

/// Order of events inside a slot relative to the PU state transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardTiming {
    /// Sense, act, PU states transition, then the transmission meets the new
    /// state. The myopic expected-reward model assumes this ordering.
    #[default]
    PostTransition,
    /// Sense, act, transmission meets the sensed-slot state, then transition.
    ActionTime,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    Markov(Vec<TransitionMatrix>),
    Deterministic(DeterministicSchedule),
}

/// Single-writer environment driver.
#[derive(Debug, Clone)]
pub struct Environment {
    pub scenario: Scenario,
    pub dynamics: Dynamics,
    pub params: PropagationParams,
    pub powers: TransmitPowers,
    pub penalty: f64,
    pub timing: RewardTiming,
    fading: FadingField,
    markov_rng: SimRng,
    sensing_rngs: Vec<SimRng>,
    occupancy: ChannelOccupancy,
    slot: u64,
}

pub struct EnvironmentParts {
    pub scenario: Scenario,
    pub schedule: Option<DeterministicSchedule>,
    pub params: PropagationParams,
    pub powers: TransmitPowers,
    pub penalty: f64,
    pub timing: RewardTiming,
    pub fading: FadingField,
    pub markov_rng: SimRng,
    pub sensing_rngs: Vec<SimRng>,
}

impl Environment {
    pub fn new(parts: EnvironmentParts) -> Result<Self> {
        let EnvironmentParts {
            scenario,
            schedule,
            params,
            powers,
            penalty,
            timing,
            fading,
            mut markov_rng,
            sensing_rngs,
        } = parts;
        scenario.validate()?;
        if sensing_rngs.len() != scenario.n_sus() {
            return Err(DsaError::Contract("need one sensing stream per SU".into()));
        }
        let (dynamics, occupancy) = match schedule {
            Some(s) => {
                s.validate()?;
                if s.patterns.len() != scenario.n_channels() {
                    return Err(DsaError::config("scenario.schedule", "need one pattern per channel"));
                }
                let occ = step_deterministic(&s, 0);
                (Dynamics::Deterministic(s), occ)
            }
            None => {
                // Start each chain from its stationary law.
                let occ = ChannelOccupancy(
                    scenario
                        .matrices
                        .iter()
                        .map(|m| {
                            if markov_rng.random::<f64>() < m.stationary_inactive() {
                                ChannelState::Inactive
                            } else {
                                ChannelState::Active
                            }
                        })
                        .collect(),
                );
                (Dynamics::Markov(scenario.matrices.clone()), occ)
            }
        };
        Ok(Self {
            scenario,
            dynamics,
            params,
            powers,
            penalty,
            timing,
            fading,
            markov_rng,
            sensing_rngs,
            occupancy,
            slot: 0,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.scenario.n_channels()
    }

    pub fn n_sus(&self) -> usize {
        self.scenario.n_sus()
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn occupancy(&self) -> &ChannelOccupancy {
        &self.occupancy
    }

    /// Each SU senses the current slot's occupancy through its own noisy sensor.
    pub fn observe(&mut self) -> Result<Vec<SensedState>> {
        let occ = &self.occupancy;
        self.sensing_rngs
            .iter_mut()
            .enumerate()
            .map(|(l, rng)| sense_one(occ, self.scenario.sensing_error.for_su(l), rng))
            .collect()
    }

    fn advance(&mut self) -> Result<()> {
        self.occupancy = match &self.dynamics {
            Dynamics::Markov(m) => step_markov(&self.occupancy, m, &mut self.markov_rng)?,
            Dynamics::Deterministic(s) => step_deterministic(s, self.slot + 1),
        };
        self.slot += 1;
        Ok(())
    }

    /// Applies one slot of actions and moves to the next slot.
    pub fn step(&mut self, actions: &[Action]) -> Result<Vec<StepOutcome>> {
        let slot = self.slot;
        let resolve = |env: &Self| {
            resolve_actions(
                &env.occupancy,
                actions,
                &env.scenario.geometry,
                &env.params,
                &env.powers,
                env.penalty,
                &env.fading,
                slot,
            )
        };
        match self.timing {
            RewardTiming::ActionTime => {
                let out = resolve(self)?;
                self.advance()?;
                Ok(out)
            }
            RewardTiming::PostTransition => {
                self.advance()?;
                resolve(self)
            }
        }
    }
}
