use crate::channel::{self, PropagationParams};
use crate::environment::{Action, Geometry, SensedState, TransitionMatrix, TransmitPowers};
use crate::error::{DsaError, Result};

/// Probability the channel is Inactive given the sensed bit and the sensor's
/// error rate: G = s·(1 − E) + (1 − s)·E.
pub fn myopic_belief(sensed_bit: u8, error: f64) -> f64 {
    let s = f64::from(sensed_bit);
    s * (1.0 - error) + (1.0 - s) * error
}

/// Expected reward of transmitting next slot, given belief `g` that the
/// channel is Inactive now.
pub fn myopic_expected_reward(g: f64, m: &TransitionMatrix, rate: f64, penalty: f64) -> f64 {
    g * (m.p10 * -penalty + m.p11 * rate) + (1.0 - g) * (m.p00 * -penalty + m.p01 * rate)
}

/// Channel with the largest expected immediate reward; lowest index wins ties.
/// With `allow_idle`, stays idle unless the best expectation is positive.
pub fn myopic_act(
    sensed: &SensedState,
    matrices: &[TransitionMatrix],
    errors: &[f64],
    rates: &[f64],
    penalty: f64,
    allow_idle: bool,
) -> Result<Action> {
    let n = sensed.len();
    if matrices.len() != n || errors.len() != n || rates.len() != n {
        return Err(DsaError::Contract(format!(
            "myopic inputs disagree on the channel count ({n}, {}, {}, {})",
            matrices.len(),
            errors.len(),
            rates.len()
        )));
    }
    let mut best: Option<(usize, f64)> = None;
    for c in 0..n {
        let g = myopic_belief(sensed.0[c], errors[c]);
        let r = myopic_expected_reward(g, &matrices[c], rates[c], penalty);
        if best.is_none_or(|(_, b)| r > b) {
            best = Some((c, r));
        }
    }
    Ok(match best {
        Some((_, r)) if allow_idle && r <= 0.0 => Action::IDLE,
        Some((c, _)) => Action(c + 1),
        None => Action::IDLE,
    })
}

/// Statistics-aware baseline. Knows the transition matrices and its own
/// sensing error rates; assumes an interference-free link at mean gain.
#[derive(Debug, Clone)]
pub struct MyopicAgent {
    pub matrices: Vec<TransitionMatrix>,
    pub errors: Vec<f64>,
    pub rates: Vec<f64>,
    pub penalty: f64,
    pub allow_idle: bool,
}

impl MyopicAgent {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        su: usize,
        geometry: &Geometry,
        matrices: Vec<TransitionMatrix>,
        errors: Vec<f64>,
        params: &PropagationParams,
        powers: &TransmitPowers,
        penalty: f64,
        allow_idle: bool,
    ) -> Result<Self> {
        let s2 = channel::sigma_squared(geometry.su_link_distance(su, su), params)?;
        let snr = powers.su_mw * s2 / params.noise_power_mw();
        let rate = channel::achievable_rate(snr, params)?;
        Ok(Self {
            rates: vec![rate; matrices.len()],
            matrices,
            errors,
            penalty,
            allow_idle,
        })
    }

    pub fn act(&self, sensed: &SensedState) -> Action {
        myopic_act(
            sensed,
            &self.matrices,
            &self.errors,
            &self.rates,
            self.penalty,
            self.allow_idle,
        )
        .expect("myopic agent built for this scenario")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn belief_values() {
        assert_eq!(myopic_belief(1, 0.0), 1.0);
        assert_relative_eq!(myopic_belief(0, 0.1), 0.1);
        assert_eq!(myopic_belief(1, 0.5), 0.5);
    }

    #[test]
    fn expected_reward_values() {
        let stay = TransitionMatrix::new(1.0, 0.0).unwrap();
        assert_eq!(myopic_expected_reward(1.0, &stay, 4.2, 2.0), 4.2);
        let m = TransitionMatrix::new(0.8, 0.5).unwrap();
        assert_relative_eq!(myopic_expected_reward(1.0, &m, 3.0, 2.0), 2.0, epsilon = 1e-12);
        let busy = TransitionMatrix::new(0.5, 1.0).unwrap();
        assert_eq!(myopic_expected_reward(0.0, &busy, 3.0, 2.0), -2.0);
    }

    #[test]
    fn idles_when_everything_loses() {
        let busy = TransitionMatrix::new(0.5, 1.0).unwrap();
        let a = myopic_act(&SensedState(vec![0, 0]), &[busy, busy], &[0.0, 0.0], &[3.0, 3.0], 2.0, true).unwrap();
        assert_eq!(a, Action::IDLE);
        let forced = myopic_act(&SensedState(vec![0, 0]), &[busy, busy], &[0.0, 0.0], &[3.0, 3.0], 2.0, false).unwrap();
        assert_eq!(forced, Action(1));
    }

    #[test]
    fn picks_the_only_positive_channel() {
        let busy = TransitionMatrix::new(0.5, 1.0).unwrap();
        let free = TransitionMatrix::new(1.0, 0.0).unwrap();
        let a = myopic_act(&SensedState(vec![0, 1, 0]), &[busy, free, busy], &[0.0; 3], &[3.0; 3], 2.0, true).unwrap();
        assert_eq!(a, Action(2));
    }
}
