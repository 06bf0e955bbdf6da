//! Time-varying backstepping barrier stack and initial gain selection.
//!
//! With `alpha_0 = 0`, stage `i` (1-based) defines
//!
//! ```text
//! h_i     = -x_i + alpha_{i-1}
//! alpha_i = c_i mu_2 h_i + d/dt alpha_{i-1}
//! ```
//!
//! The total derivative `d/dt alpha_{i-1}` is carried by a [`DerivativeJet`]
//! of order `n - i + 1`. A state lift of `x_i` to order `n - i` only touches
//! `x_i..x_n`, so `alpha_n` never needs the input and is a function of
//! `(x, t)` alone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::DerivativeJet;
use crate::kernel::{mu, mu_clipped, mu_derivative, HorizonClock, Saturation};

/// Below this magnitude an initial barrier value counts as sitting on the barrier.
pub const DEGENERATE_BARRIER_TOL: f64 = 1e-12;

/// Gains `c_1..c_n`, stored 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GainVector(pub Vec<f64>);

impl GainVector {
    pub fn new(c: Vec<f64>) -> Self {
        Self(c)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }
}

/// Barrier values and virtual controls at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierStack {
    pub h: Vec<f64>,
    pub alpha: Vec<f64>,
    /// `alpha_jets[i]` carries `alpha_{i+1}` to order `n - i - 1`.
    pub alpha_jets: Vec<DerivativeJet>,
    /// Whether `mu_2` is clipped (hard mode) or past the knee (smooth mode).
    pub mu_clipped: bool,
}

impl BarrierStack {
    /// The safe upper bound `alpha_n` on the input.
    pub fn alpha_n(&self) -> f64 {
        *self.alpha.last().expect("stack has at least one stage")
    }
}

/// Jet of `x_index` (1-based) along `x_i' = x_{i+1}`: `coeffs[k] = x_{index+k}`.
pub fn jet_lift_state(x: &[f64], index: usize, order: usize) -> Result<DerivativeJet> {
    let n = x.len();
    if index == 0 || index + order > n {
        return Err(Error::Depth { index, order, n });
    }
    Ok(DerivativeJet::new(x[index - 1..index + order].to_vec()))
}

/// Jet of `mu_m` at `t_rel`. A clipped `mu_m` is treated as locally constant.
pub fn jet_of_mu(m: u32, t_rel: f64, horizon: f64, order: usize, mu_max: f64) -> DerivativeJet {
    let value = mu_clipped(m, t_rel, horizon, mu_max);
    if is_clipped(m, t_rel, horizon, mu_max) {
        return DerivativeJet::constant(value, order);
    }
    let coeffs = (0..=order)
        .map(|k| mu_derivative(m, k as u32, t_rel, horizon).expect("t_rel < T when unclipped"))
        .collect();
    DerivativeJet::new(coeffs)
}

fn is_clipped(m: u32, t_rel: f64, horizon: f64, mu_max: f64) -> bool {
    t_rel >= horizon || mu_clipped(m, t_rel, horizon, mu_max) >= mu_max
}

/// Knee of the smooth saturation as a fraction of `mu_max`.
pub const SMOOTH_KNEE: f64 = 0.5;

fn smooth_exponent(order: usize) -> i32 {
    (order as i32 + 1).max(8)
}

/// Scalar smooth saturation: identity up to the knee `a`, then
/// `a + (M - a) S((z - a) / (M - a))` with `S(s) = s / (1 + s^p)^(1/p)`.
/// `S(s) - s = O(s^(p+1))`, so the joint is `C^p`.
pub fn smooth_saturate(z: f64, mu_max: f64, p: i32) -> f64 {
    let knee = SMOOTH_KNEE * mu_max;
    if z <= knee {
        return z;
    }
    let span = mu_max - knee;
    let s = (z - knee) / span;
    knee + span * s / (1.0 + s.powi(p)).powf(1.0 / p as f64)
}

/// Jet of the smoothly saturated `mu_m`. Past the terminal time it holds `mu_max`.
pub fn jet_of_saturated_mu(
    m: u32,
    t_rel: f64,
    horizon: f64,
    order: usize,
    mu_max: f64,
) -> DerivativeJet {
    let knee = SMOOTH_KNEE * mu_max;
    if t_rel >= horizon {
        return DerivativeJet::constant(mu_max, order);
    }
    let raw_value = mu(m, t_rel, horizon).expect("t_rel < T");
    if !raw_value.is_finite() {
        return DerivativeJet::constant(mu_max, order);
    }
    let raw = DerivativeJet::new(
        (0..=order)
            .map(|k| mu_derivative(m, k as u32, t_rel, horizon).expect("t_rel < T"))
            .collect(),
    );
    if raw_value <= knee {
        return raw;
    }
    let p = smooth_exponent(order);
    let span = mu_max - knee;
    let s = raw.offset(-knee).scale(1.0 / span);
    let denom = s
        .powi(p as u32)
        .offset(1.0)
        .powf(-1.0 / p as f64)
        .expect("1 + s^p > 0");
    let sat = (&s * &denom).scale(span).offset(knee);
    if sat.coeffs().iter().all(|c| c.is_finite()) {
        sat
    } else {
        DerivativeJet::constant(mu_max, order)
    }
}

/// `mu_2` jet under the clock's saturation mode, and whether it is saturated.
fn mu2_jet(t_rel: f64, clock: &HorizonClock, order: usize) -> (DerivativeJet, bool) {
    match clock.saturation {
        Saturation::Hard => (
            jet_of_mu(2, t_rel, clock.horizon, order, clock.mu_max),
            is_clipped(2, t_rel, clock.horizon, clock.mu_max),
        ),
        Saturation::Smooth => (
            jet_of_saturated_mu(2, t_rel, clock.horizon, order, clock.mu_max),
            t_rel >= clock.horizon
                || mu_clipped(2, t_rel, clock.horizon, f64::INFINITY) > SMOOTH_KNEE * clock.mu_max,
        ),
    }
}

/// Value of the `mu_2` gain actually applied at `t_rel`.
pub fn applied_mu2(t_rel: f64, clock: &HorizonClock) -> f64 {
    match clock.saturation {
        Saturation::Hard => mu_clipped(2, t_rel, clock.horizon, clock.mu_max),
        Saturation::Smooth => {
            if t_rel >= clock.horizon {
                clock.mu_max
            } else {
                let raw = mu_clipped(2, t_rel, clock.horizon, f64::INFINITY);
                if raw.is_finite() {
                    smooth_saturate(raw, clock.mu_max, smooth_exponent(1))
                } else {
                    clock.mu_max
                }
            }
        }
    }
}

/// Stage-by-stage evaluation of the recursion at a fixed `(x, t)`.
struct Recursion<'a> {
    x: &'a [f64],
    mu2: DerivativeJet,
    saturated: bool,
    alpha_prev: DerivativeJet,
    stage: usize,
}

impl<'a> Recursion<'a> {
    fn new(x: &'a [f64], t_rel: f64, clock: &HorizonClock) -> Self {
        let n = x.len();
        let (mu2, saturated) = mu2_jet(t_rel, clock, n.saturating_sub(1));
        Self {
            x,
            mu2,
            saturated,
            alpha_prev: DerivativeJet::zero(n),
            stage: 1,
        }
    }

    /// `h_i` for the upcoming stage.
    fn h_next(&self) -> f64 {
        self.alpha_prev.value() - self.x[self.stage - 1]
    }

    /// `d/dt alpha_{i-1}` for the upcoming stage.
    fn alpha_prev_rate(&self) -> f64 {
        self.alpha_prev.derivative_coeff(1)
    }

    /// Fixes `c_i` and advances; returns `(h_i jet value, alpha_i jet)`.
    fn advance(&mut self, c: f64) -> Result<(f64, DerivativeJet)> {
        let n = self.x.len();
        let order = n - self.stage;
        let x_jet = jet_lift_state(self.x, self.stage, order)?;
        let h_jet = &self.alpha_prev.truncate(order) - &x_jet;
        let feedback = (&self.mu2.truncate(order) * &h_jet).scale(c);
        let carried = self
            .alpha_prev
            .differentiate()
            .expect("alpha_{i-1} carries order >= 1")
            .truncate(order);
        let alpha = &feedback + &carried;
        self.alpha_prev = alpha.clone();
        self.stage += 1;
        Ok((h_jet.value(), alpha))
    }
}

/// Evaluates `h_1..h_n` and `alpha_1..alpha_n` at `(x, t)` with clipped `mu_2`.
pub fn barrier_stack(
    x: &[f64],
    t: f64,
    clock: &HorizonClock,
    gains: &GainVector,
) -> Result<BarrierStack> {
    let n = x.len();
    if n == 0 {
        return Err(Error::Precondition(
            "state must have at least one component".into(),
        ));
    }
    if gains.len() != n {
        return Err(Error::Precondition(format!(
            "gain vector has {} entries, state has {n}",
            gains.len()
        )));
    }
    let t_rel = clock.elapsed(t)?;
    let mut rec = Recursion::new(x, t_rel, clock);
    let mut h = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    let mut alpha_jets = Vec::with_capacity(n);
    for &c in gains.as_slice() {
        let (hi, jet) = rec.advance(c)?;
        h.push(hi);
        alpha.push(jet.value());
        alpha_jets.push(jet);
    }
    Ok(BarrierStack {
        h,
        alpha,
        alpha_jets,
        mu_clipped: rec.saturated,
    })
}

/// Row `k(t)` with `alpha_n(x, t) = k(t) . x` for a state of length `n`.
///
/// Every stage is linear in the state (`alpha_0 = 0`, `mu_2` depends on `t`
/// only), so one pass over linear forms replaces a full stack evaluation
/// whenever several states share a time.
pub fn alpha_n_row(n: usize, t: f64, clock: &HorizonClock, gains: &GainVector) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Precondition(
            "state must have at least one component".into(),
        ));
    }
    if gains.len() != n {
        return Err(Error::Precondition(format!(
            "gain vector has {} entries, state has {n}",
            gains.len()
        )));
    }
    let t_rel = clock.elapsed(t)?;
    let (mu2, _) = mu2_jet(t_rel, clock, n - 1);
    let mu2 = mu2.coeffs();
    // alpha[k * n + j]: k-th derivative of alpha_{i-1}, coefficient on x_{j+1}
    let mut alpha = vec![0.0; (n + 1) * n];
    let mut h = vec![0.0; n * n];
    for (stage, &c) in gains.as_slice().iter().enumerate() {
        let order = n - 1 - stage;
        h[..(order + 1) * n].copy_from_slice(&alpha[..(order + 1) * n]);
        for k in 0..=order {
            h[k * n + stage + k] -= 1.0;
        }
        // alpha_i^(k) = alpha_{i-1}^(k+1) + c sum_j C(k, j) mu_2^(j) h_i^(k-j)
        for k in 0..=order {
            alpha.copy_within((k + 1) * n..(k + 2) * n, k * n);
            let mut binom = 1.0;
            for j in 0..=k {
                let w = c * binom * mu2[j];
                let src = &h[(k - j) * n..(k - j + 1) * n];
                for (a, hv) in alpha[k * n..(k + 1) * n].iter_mut().zip(src) {
                    *a += w * hv;
                }
                binom = binom * (k - j) as f64 / (j + 1) as f64;
            }
        }
    }
    alpha.truncate(n);
    Ok(alpha)
}

fn check_initially_safe(x0: &[f64]) -> Result<()> {
    match x0.first() {
        None => Err(Error::Precondition(
            "state must have at least one component".into(),
        )),
        Some(&x1) if x1 < 0.0 => Ok(()),
        Some(&x1) => Err(Error::InitiallyUnsafe { x1 }),
    }
}

/// Lower bound `c_lower_i` for stage `i = chosen.len() + 1`, given the gains
/// already fixed for stages `1..i`.
pub fn minimal_gain(x0: &[f64], clock: &HorizonClock, chosen: &[f64]) -> Result<f64> {
    check_initially_safe(x0)?;
    let n = x0.len();
    let stage = chosen.len() + 1;
    if stage >= n {
        return Err(Error::Precondition(format!(
            "stage {stage} has no lower bound for order {n} (only stages 1..{})",
            n - 1
        )));
    }
    let mut rec = Recursion::new(x0, 0.0, clock);
    for &c in chosen {
        rec.advance(c)?;
    }
    bound_at(&rec)
}

fn bound_at(rec: &Recursion<'_>) -> Result<f64> {
    let stage = rec.stage;
    let denominator = rec.h_next();
    if denominator <= DEGENERATE_BARRIER_TOL {
        return Err(Error::DegenerateBarrier {
            stage,
            value: denominator,
        });
    }
    let numerator = rec.x[stage] - rec.alpha_prev_rate();
    Ok(numerator / denominator)
}

/// Lower bounds for stages `1..n-1`. `policy(stage, bound)` fixes each gain
/// before the next bound is evaluated; returns `(bounds, chosen gains)`.
pub fn minimal_gains<F>(
    x0: &[f64],
    clock: &HorizonClock,
    mut policy: F,
) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: FnMut(usize, f64) -> f64,
{
    check_initially_safe(x0)?;
    let n = x0.len();
    let mut rec = Recursion::new(x0, 0.0, clock);
    let mut bounds = Vec::with_capacity(n.saturating_sub(1));
    let mut chosen = Vec::with_capacity(n.saturating_sub(1));
    for stage in 1..n {
        let bound = bound_at(&rec)?;
        let c = policy(stage, bound);
        rec.advance(c)?;
        bounds.push(bound);
        chosen.push(c);
    }
    Ok((bounds, chosen))
}

/// `c_i = max{0, c_lower_i} + margin` for `i < n`, and `c_n` as given.
pub fn select_gains(x0: &[f64], clock: &HorizonClock, margin: f64, c_n: f64) -> Result<GainVector> {
    if !(margin > 0.0) {
        return Err(Error::Precondition(format!(
            "gain margin must be positive, got {margin}"
        )));
    }
    if !(c_n >= 0.0) {
        return Err(Error::Precondition(format!(
            "c_n must be non-negative, got {c_n}"
        )));
    }
    let (_, mut gains) = minimal_gains(x0, clock, |_, bound| bound.max(0.0) + margin)?;
    gains.push(c_n);
    Ok(GainVector(gains))
}

/// Strict initial-gain condition: `c_i > max{0, c_lower_i}` for `i < n`, `c_n >= 0`.
pub fn validate_gains(gains: &GainVector, x0: &[f64], clock: &HorizonClock) -> Result<bool> {
    check_initially_safe(x0)?;
    let n = x0.len();
    if gains.len() != n {
        return Err(Error::Precondition(format!(
            "gain vector has {} entries, state has {n}",
            gains.len()
        )));
    }
    if !(gains.0[n - 1] >= 0.0) {
        return Ok(false);
    }
    let mut rec = Recursion::new(x0, 0.0, clock);
    for &c in &gains.0[..n - 1] {
        let bound = bound_at(&rec)?;
        if !(c > bound.max(0.0)) {
            return Ok(false);
        }
        rec.advance(c)?;
    }
    Ok(true)
}
