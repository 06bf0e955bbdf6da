//! Pointwise safety filters.
//!
//! The prescribed-time filter applies `min{u_nom, alpha_n}` on `[t0, t0 + T)`
//! and hands control back through a ramp afterwards. The exponential baseline
//! is the time-invariant double-integrator filter with poles `{-rho, -2 rho}`.
//! Both are the closed-form solution of the one-constraint QP
//! `argmin |v - u_nom|^2 s.t. v <= bound`.

use serde::{Deserialize, Serialize};

use crate::backstepping::{barrier_stack, GainVector};
use crate::error::{Error, Result};
use crate::kernel::{HorizonClock, Saturation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Ramp exponent `m`.
    pub ramp_m: u32,
    /// Ramp duration `T_bar`.
    pub ramp_t: f64,
    /// `|x_1(t0 + T)| <= terminal_eps` counts as landing on the barrier.
    pub terminal_eps: f64,
    pub mu_max: f64,
    pub saturation: Saturation,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            ramp_m: 2,
            ramp_t: 0.5,
            terminal_eps: 1e-3,
            mu_max: 1000.0,
            saturation: Saturation::Smooth,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ramp_m < 1 {
            return Err(Error::Precondition("ramp_m must be >= 1".into()));
        }
        if !(self.ramp_t > 0.0) {
            return Err(Error::Precondition(format!(
                "ramp_T must be positive, got {}",
                self.ramp_t
            )));
        }
        if !(self.terminal_eps > 0.0) {
            return Err(Error::Precondition(format!(
                "terminal_eps must be positive, got {}",
                self.terminal_eps
            )));
        }
        if !(self.mu_max >= 1.0) {
            return Err(Error::Precondition(format!(
                "mu_max must be >= 1, got {}",
                self.mu_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterDecision {
    pub u: f64,
    pub override_active: bool,
    /// The safe upper bound (`alpha_n` or the ESf feedback).
    pub safe_bound: f64,
    pub u_nom: f64,
}

/// One-constraint QP `argmin |v - u_nom|^2 s.t. v <= bound`.
pub fn min_norm_override(u_nom: f64, bound: f64) -> FilterDecision {
    let override_active = u_nom > bound;
    FilterDecision {
        u: if override_active { bound } else { u_nom },
        override_active,
        safe_bound: bound,
        u_nom,
    }
}

/// Prescribed-time filter. After the terminal time `x1_at_t` must carry the
/// value of `x_1` captured there.
pub fn ptsf_control(
    u_nom: f64,
    x: &[f64],
    t: f64,
    clock: &HorizonClock,
    gains: &GainVector,
    config: &FilterConfig,
    x1_at_t: Option<f64>,
) -> Result<FilterDecision> {
    let clock = clock
        .with_mu_max(config.mu_max)?
        .with_saturation(config.saturation);
    let alpha_n = barrier_stack(x, t, &clock, gains)?.alpha_n();
    if t < clock.terminal_time() {
        return Ok(min_norm_override(u_nom, alpha_n));
    }
    let x1 = x1_at_t.ok_or(Error::MissingTerminalCapture { t })?;
    Ok(FilterDecision {
        u: u_nom * ramp_g(t, x1, &clock, config),
        override_active: false,
        safe_bound: alpha_n,
        u_nom,
    })
}

/// Post-terminal hand-off ramp `1 - nu^m(t - t0 - T, T_bar)` after a landing, else 1.
pub fn ramp_g(t: f64, x1_at_t: f64, clock: &HorizonClock, config: &FilterConfig) -> f64 {
    let since = t - clock.terminal_time();
    debug_assert!(since >= 0.0);
    if x1_at_t.abs() <= config.terminal_eps && since <= config.ramp_t {
        let v = (config.ramp_t - since.max(0.0)) / config.ramp_t;
        1.0 - v.powi(config.ramp_m as i32)
    } else {
        1.0
    }
}

fn check_order_two(x: &[f64]) -> Result<()> {
    if x.len() == 2 {
        Ok(())
    } else {
        Err(Error::UnsupportedOrder {
            n: x.len(),
            what: "the exponential baseline is defined for n = 2",
        })
    }
}

/// Time-invariant baseline `min{u_nom, -(2 rho^2 x_1 + 3 rho x_2)}`.
pub fn esf_control(u_nom: f64, x: &[f64], rho: f64) -> Result<FilterDecision> {
    check_order_two(x)?;
    let bound = -(2.0 * rho * rho * x[0] + 3.0 * rho * x[1]);
    Ok(min_norm_override(u_nom, bound))
}

/// Smallest admissible baseline rate `max{0, -x_2(t0) / x_1(t0)}`.
pub fn esf_min_rho(x0: &[f64]) -> Result<f64> {
    check_order_two(x0)?;
    if !(x0[0] < 0.0) {
        return Err(Error::InitiallyUnsafe { x1: x0[0] });
    }
    Ok((-x0[1] / x0[0]).max(0.0))
}

/// State `dt` after the baseline starts overriding at `x_switch`:
/// `e^{-rho dt} M(dt) x_switch` with closed-loop poles `{-rho, -2 rho}`.
pub fn esf_closed_form(x_switch: &[f64], rho: f64, dt: f64) -> Result<[f64; 2]> {
    check_order_two(x_switch)?;
    if !(dt >= 0.0) {
        return Err(Error::Domain(format!(
            "elapsed time must be non-negative, got {dt}"
        )));
    }
    let e = (-rho * dt).exp();
    let m = [
        [2.0 - e, (1.0 - e) / rho],
        [2.0 * rho * (e - 1.0), 2.0 * e - 1.0],
    ];
    Ok([
        e * (m[0][0] * x_switch[0] + m[0][1] * x_switch[1]),
        e * (m[1][0] * x_switch[0] + m[1][1] * x_switch[1]),
    ])
}
