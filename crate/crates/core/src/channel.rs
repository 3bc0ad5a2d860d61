//! Radio propagation: WINNER II path loss, Rician block fading, SINR and
//! normalized achievable rate.
//!
//! Everything here is linear-scale except [`path_loss_db`]; dB only appears at
//! the path-loss boundary.

use std::f64::consts::PI;

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{DsaError, Result};
use crate::rng::{derive_seed, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagationParams {
    pub carrier_freq_ghz: f64,
    /// Path loss at the reference distance, dB.
    pub pl_ref_db: f64,
    pub pl_exponent: f64,
    /// Frequency-dependence coefficient of the path loss.
    pub pl_freq_dep: f64,
    /// Rician K-factor (LOS power over scattered power).
    pub k_factor: f64,
    pub bandwidth_hz: f64,
    pub noise_density_mw_per_hz: f64,
    /// Gap between capacity and the practical MCS; 1.0 means Shannon capacity.
    pub sinr_gap: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        Self {
            carrier_freq_ghz: 5.0,
            pl_ref_db: 41.0,
            pl_exponent: 22.7,
            pl_freq_dep: 20.0,
            k_factor: 8.0,
            bandwidth_hz: 1.0e6,
            noise_density_mw_per_hz: 10f64.powf(-14.7),
            sinr_gap: 1.0,
        }
    }
}

impl PropagationParams {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(DsaError::config(format!("propagation.{field}"), msg))
            }
        };
        check(
            self.carrier_freq_ghz > 0.0,
            "carrier_freq_ghz",
            "must be positive",
        )?;
        check(self.bandwidth_hz > 0.0, "bandwidth_hz", "must be positive")?;
        check(
            self.noise_density_mw_per_hz > 0.0,
            "noise_density_mw_per_hz",
            "must be positive",
        )?;
        check(self.k_factor >= 0.0, "k_factor", "must be non-negative")?;
        check(self.sinr_gap >= 1.0, "sinr_gap", "must be at least 1")?;
        check(
            self.pl_ref_db.is_finite() && self.pl_exponent.is_finite() && self.pl_freq_dep.is_finite(),
            "pl_ref_db",
            "path-loss coefficients must be finite",
        )
    }

    /// Thermal noise power B·N₀ in mW.
    pub fn noise_power_mw(&self) -> f64 {
        self.bandwidth_hz * self.noise_density_mw_per_hz
    }
}

pub fn path_loss_db(distance_m: f64, params: &PropagationParams) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(DsaError::Domain(format!(
            "path loss needs a positive distance, got {distance_m}"
        )));
    }
    Ok(params.pl_ref_db
        + params.pl_exponent * distance_m.log10()
        + params.pl_freq_dep * (params.carrier_freq_ghz / 5.0).log10())
}

/// Mean channel power gain σ² implied by the path loss.
pub fn sigma_squared(distance_m: f64, params: &PropagationParams) -> Result<f64> {
    Ok(10f64.powf(-path_loss_db(distance_m, params)? / 10.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingDraw {
    pub h: Complex<f64>,
}

impl FadingDraw {
    /// Power gain |h|².
    pub fn gain(&self) -> f64 {
        self.h.norm_sqr()
    }
}

/// One Rician draw. The LOS phase is uniform over a full turn.
pub fn draw_rician<R: Rng + ?Sized>(
    distance_m: f64,
    params: &PropagationParams,
    rng: &mut R,
) -> Result<FadingDraw> {
    let s2 = sigma_squared(distance_m, params)?;
    Ok(rician_from_sigma2(s2, params.k_factor, rng))
}

pub(crate) fn rician_from_sigma2<R: Rng + ?Sized>(s2: f64, k: f64, rng: &mut R) -> FadingDraw {
    let sigma = s2.sqrt();
    let theta = 2.0 * PI * rng.random::<f64>();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    // CN(0, σ²): each quadrature has variance σ²/2.
    let scatter = Complex::new(re, im) * (sigma * std::f64::consts::FRAC_1_SQRT_2);
    let h = if k.is_infinite() {
        Complex::from_polar(sigma, theta)
    } else {
        Complex::from_polar(sigma, theta) * (k / (k + 1.0)).sqrt() + scatter * (1.0 / (k + 1.0)).sqrt()
    };
    FadingDraw { h }
}

pub fn sinr(
    desired_power_mw: f64,
    desired_gain: f64,
    interferer_powers_mw: &[f64],
    interferer_gains: &[f64],
    params: &PropagationParams,
) -> Result<f64> {
    if interferer_powers_mw.len() != interferer_gains.len() {
        return Err(DsaError::Contract(format!(
            "{} interferer powers but {} gains",
            interferer_powers_mw.len(),
            interferer_gains.len()
        )));
    }
    let interference: f64 = interferer_powers_mw
        .iter()
        .zip(interferer_gains)
        .map(|(p, g)| p * g)
        .sum();
    Ok(desired_power_mw * desired_gain / (interference + params.noise_power_mw()))
}

/// Normalized rate log₂(1 + SINR/Γ) in bit/s/Hz. This is the reward scale;
/// the bandwidth factor is left out on purpose.
pub fn achievable_rate(sinr_linear: f64, params: &PropagationParams) -> Result<f64> {
    if !(sinr_linear >= 0.0) {
        return Err(DsaError::Domain(format!(
            "SINR must be non-negative, got {sinr_linear}"
        )));
    }
    Ok((sinr_linear / params.sinr_gap).ln_1p() / std::f64::consts::LN_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FadingMode {
    /// Fresh i.i.d. draw per link per slot.
    #[default]
    Block,
    /// One draw per link for the whole run.
    Static,
}

/// Keyed fading source: the draw for a (slot, tx, rx) link depends only on
/// that key, never on which other links were evaluated in the same slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FadingField {
    pub seed: u64,
    pub mode: FadingMode,
}

impl FadingField {
    pub fn new(seed: u64, mode: FadingMode) -> Self {
        Self { seed, mode }
    }

    pub fn draw(
        &self,
        slot: u64,
        tx_key: u64,
        rx_key: u64,
        distance_m: f64,
        params: &PropagationParams,
    ) -> Result<FadingDraw> {
        let slot = match self.mode {
            FadingMode::Block => slot,
            FadingMode::Static => 0,
        };
        let mut rng = SimRng::seed_from_u64(derive_seed(&[self.seed, slot, tx_key, rx_key]));
        draw_rician(distance_m, params, &mut rng)
    }
}
