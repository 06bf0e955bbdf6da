//! Blow-up calculus for prescribed-time gains.
//!
//! Every time argument here is relative to the initialization time
//! (`t_rel = t - t0`) except where a [`HorizonClock`] is passed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the filter bounds `mu_2` near the terminal time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Saturation {
    /// `min{mu_2, mu_max}`, with every derivative dropped once clipped.
    Hard,
    /// Identity up to `mu_max / 2`, then a smooth monotone approach to
    /// `mu_max` whose derivatives are carried exactly.
    #[default]
    Smooth,
}

/// Time base shared by every time-varying gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonClock {
    pub t0: f64,
    /// Horizon length `T`; the terminal time is `t0 + T`.
    pub horizon: f64,
    /// Gain ceiling.
    pub mu_max: f64,
    pub saturation: Saturation,
}

impl HorizonClock {
    pub fn new(t0: f64, horizon: f64, mu_max: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Domain(format!(
                "horizon T must be positive, got {horizon}"
            )));
        }
        if !(mu_max >= 1.0) {
            return Err(Error::Domain(format!("mu_max must be >= 1, got {mu_max}")));
        }
        if !t0.is_finite() {
            return Err(Error::Domain(format!("t0 must be finite, got {t0}")));
        }
        Ok(Self {
            t0,
            horizon,
            mu_max,
            saturation: Saturation::default(),
        })
    }

    pub fn with_saturation(self, saturation: Saturation) -> Self {
        Self { saturation, ..self }
    }

    pub fn terminal_time(&self) -> f64 {
        self.t0 + self.horizon
    }

    pub fn elapsed(&self, t: f64) -> Result<f64> {
        if t < self.t0 {
            return Err(Error::Domain(format!("t = {t} precedes t0 = {}", self.t0)));
        }
        Ok(t - self.t0)
    }

    pub fn with_mu_max(self, mu_max: f64) -> Result<Self> {
        Ok(Self::new(self.t0, self.horizon, mu_max)?.with_saturation(self.saturation))
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if horizon > 0.0 && horizon.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "horizon T must be positive, got {horizon}"
        )))
    }
}

fn check_open(t_rel: f64, horizon: f64) -> Result<()> {
    check_horizon(horizon)?;
    if t_rel >= 0.0 && t_rel < horizon {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "t_rel = {t_rel} outside [0, {horizon})"
        )))
    }
}

/// Linear decay `(T - t_rel) / T` on `[0, T]`.
pub fn nu(t_rel: f64, horizon: f64) -> Result<f64> {
    check_horizon(horizon)?;
    if !(t_rel >= 0.0 && t_rel <= horizon) {
        return Err(Error::Domain(format!(
            "t_rel = {t_rel} outside [0, {horizon}]"
        )));
    }
    Ok((horizon - t_rel) / horizon)
}

/// Blow-up function `mu_m = 1 / nu^m`, defined on `[0, T)`.
pub fn mu(m: u32, t_rel: f64, horizon: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::Domain("mu requires m >= 1".into()));
    }
    check_open(t_rel, horizon)?;
    let v = (horizon - t_rel) / horizon;
    Ok(1.0 / v.powi(m as i32))
}

/// `min{mu_m, mu_max}`; returns `mu_max` at and beyond the terminal time.
pub fn mu_clipped(m: u32, t_rel: f64, horizon: f64, mu_max: f64) -> f64 {
    debug_assert!(t_rel >= 0.0);
    if t_rel >= horizon {
        return mu_max;
    }
    let v = (horizon - t_rel) / horizon;
    let value = 1.0 / v.powi(m as i32);
    if value.is_finite() && value < mu_max {
        value
    } else {
        mu_max
    }
}

/// Rising factorial `m (m+1) ... (m+k-1)`, with the empty product for `k = 0`.
pub fn rising_factorial(m: u64, k: u64) -> u64 {
    (0..k).map(|j| m + j).product()
}

/// `i`-th time derivative of `mu_m`: `(m^(rising i) / T^i) mu_{m+i}`.
pub fn mu_derivative(m: u32, i: u32, t_rel: f64, horizon: f64) -> Result<f64> {
    let base = mu(m + i, t_rel, horizon)?;
    let coeff = rising_factorial(m as u64, i as u64) as f64;
    Ok(coeff / horizon.powi(i as i32) * base)
}

/// Checks `mu_m(t, T) = mu_m(t_mid, T) mu_m(t - t_mid, T - t_mid)` to relative `tol`.
pub fn check_mu_commutativity(m: u32, t_mid: f64, t: f64, horizon: f64, tol: f64) -> Result<bool> {
    if !(0.0 <= t_mid && t_mid <= t && t < horizon) {
        return Err(Error::Domain(format!(
            "need 0 <= t_mid <= t < T, got t_mid = {t_mid}, t = {t}, T = {horizon}"
        )));
    }
    let whole = mu(m, t, horizon)?;
    let split = mu(m, t_mid, horizon)? * mu(m, t - t_mid, horizon - t_mid)?;
    Ok((whole - split).abs() <= tol * whole)
}

/// Soft-landing envelope `exp(-c T (mu_1 - 1))`.
pub fn xi(c: f64, t_rel: f64, horizon: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::Domain(format!("xi requires c > 0, got {c}")));
    }
    let mu1 = mu(1, t_rel, horizon)?;
    Ok((-c * horizon * (mu1 - 1.0)).exp())
}
