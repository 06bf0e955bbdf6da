//! Fixed-grid simulation of the integrator chain under a safety filter.

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::backstepping::{
    alpha_n_row, applied_mu2, barrier_stack, select_gains, validate_gains, GainVector,
};
use crate::error::{Error, Result};
use crate::filter::{esf_control, min_norm_override, ramp_g, FilterConfig, FilterDecision};
use crate::kernel::HorizonClock;

/// Target `stiffness * dt` for one RK4 substep.
pub const FINE_STIFF_STEP: f64 = 0.01;
/// Hard ceiling on `stiffness * dt`, inside the RK4 stability interval
/// `[-2.78, 0]`; the RK4 amplification factor stays positive there.
pub const MAX_STIFF_STEP: f64 = 2.0;
/// Substeps per grid step beyond which only the stability ceiling is enforced.
pub const SUBSTEP_BUDGET: usize = 100;
/// Default cap on substeps per grid step.
pub const DEFAULT_MAX_SUBSTEPS: usize = 4096;

/// Grid points within this fraction of `dt` of the terminal time count as reaching it.
const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum GainPolicy {
    /// `c_i = max{0, c_lower_i} + margin` for `i < n`, last gain `c_n`.
    Auto {
        margin: f64,
        c_n: f64,
    },
    Manual(GainVector),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterChoice {
    Ptsf(FilterConfig),
    Esf { rho: f64 },
    None,
}

impl FilterChoice {
    pub fn label(&self) -> String {
        match self {
            FilterChoice::Ptsf(_) => "ptsf".to_string(),
            FilterChoice::Esf { rho } => format!("esf_rho{rho}"),
            FilterChoice::None => "none".to_string(),
        }
    }

    fn is_enabled(&self) -> bool {
        !matches!(self, FilterChoice::None)
    }
}

pub type NominalFn = dyn Fn(&[f64], f64) -> f64 + Send + Sync;

/// Caller-supplied nominal law `(x, t) -> u`.
#[derive(Clone)]
pub struct ExternalNominal(pub Arc<NominalFn>);

impl fmt::Debug for ExternalNominal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ExternalNominal(..)")
    }
}

impl PartialEq for ExternalNominal {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NominalSpec {
    /// `-k1 (x_1 + A sin(w t) + b) - k2 (x_2 + A w cos(w t))`; double integrator only.
    TrackingSine {
        k1: f64,
        k2: f64,
        amplitude: f64,
        offset: f64,
        omega: f64,
    },
    Constant {
        value: f64,
    },
    /// `-sum_i k_i (x_i - s_i)`.
    PdSetpoint {
        gains: Vec<f64>,
        setpoint: Vec<f64>,
    },
    External(ExternalNominal),
}

impl NominalSpec {
    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        match self {
            NominalSpec::TrackingSine {
                k1,
                k2,
                amplitude,
                offset,
                omega,
            } => {
                -k1 * (x[0] + amplitude * (omega * t).sin() + offset)
                    - k2 * (x[1] + amplitude * omega * (omega * t).cos())
            }
            NominalSpec::Constant { value } => *value,
            NominalSpec::PdSetpoint { gains, setpoint } => -gains
                .iter()
                .zip(setpoint)
                .zip(x)
                .map(|((k, s), xi)| k * (xi - s))
                .sum::<f64>(),
            NominalSpec::External(f) => (f.0)(x, t),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            NominalSpec::TrackingSine { .. } if n != 2 => Err(Error::UnsupportedOrder {
                n,
                what: "tracking_sine nominal is defined for n = 2",
            }),
            NominalSpec::PdSetpoint { gains, setpoint }
                if gains.len() != n || setpoint.len() != n =>
            {
                Err(Error::Precondition(format!(
                    "pd_setpoint needs {n} gains and {n} setpoint entries, got {} and {}",
                    gains.len(),
                    setpoint.len()
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: Option<String>,
    pub description: Option<String>,
    pub x0: Vec<f64>,
    pub t0: f64,
    pub horizon: f64,
    pub gain_policy: GainPolicy,
    pub filter: FilterChoice,
    pub nominal: NominalSpec,
    pub dt: f64,
    pub t_end: f64,
    /// Cap on RK4 substeps per grid step; a stiffer closed loop is an error.
    pub max_substeps: usize,
}

impl Scenario {
    /// Double integrator from `(-4, 2)` with `T = 4`, gains `(0.6, 0.6)`,
    /// the tracking-sine nominal and default filter settings.
    pub fn reference_double_integrator() -> Self {
        let horizon = 4.0;
        Scenario {
            name: Some("double_integrator".into()),
            description: None,
            x0: vec![-4.0, 2.0],
            t0: 0.0,
            horizon,
            gain_policy: GainPolicy::Auto {
                margin: 0.1,
                c_n: 0.6,
            },
            filter: FilterChoice::Ptsf(FilterConfig::default()),
            nominal: NominalSpec::TrackingSine {
                k1: 4.0,
                k2: 4.0,
                amplitude: 1.0,
                offset: 0.8,
                omega: 2.0 * std::f64::consts::PI / horizon,
            },
            dt: 1e-3,
            t_end: 6.0,
            max_substeps: DEFAULT_MAX_SUBSTEPS,
        }
    }

    pub fn order(&self) -> usize {
        self.x0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.order();
        if n == 0 {
            return Err(Error::Precondition("x0 must be non-empty".into()));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("x0 must be finite".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Precondition(format!(
                "T must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Precondition(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.max_substeps == 0 {
            return Err(Error::Precondition("max_substeps must be >= 1".into()));
        }
        if !(self.t_end >= self.t0 + self.horizon) {
            return Err(Error::Precondition(format!(
                "t_end = {} precedes the terminal time {}",
                self.t_end,
                self.t0 + self.horizon
            )));
        }
        if self.filter.is_enabled() && !(self.x0[0] < 0.0) {
            return Err(Error::InitiallyUnsafe { x1: self.x0[0] });
        }
        match &self.filter {
            FilterChoice::Ptsf(config) => config.validate()?,
            FilterChoice::Esf { rho } => {
                if n != 2 {
                    return Err(Error::UnsupportedOrder {
                        n,
                        what: "the exponential baseline is defined for n = 2",
                    });
                }
                if !(*rho > 0.0) {
                    return Err(Error::Precondition(format!(
                        "rho must be positive, got {rho}"
                    )));
                }
            }
            FilterChoice::None => {}
        }
        if let GainPolicy::Manual(g) = &self.gain_policy {
            if g.len() != n {
                return Err(Error::Precondition(format!(
                    "{} gains given for order {n}",
                    g.len()
                )));
            }
        }
        self.nominal.validate(n)
    }

    pub fn filter_config(&self) -> FilterConfig {
        match self.filter {
            FilterChoice::Ptsf(config) => config,
            _ => FilterConfig::default(),
        }
    }

    pub fn clock(&self) -> Result<HorizonClock> {
        let config = self.filter_config();
        Ok(HorizonClock::new(self.t0, self.horizon, config.mu_max)?
            .with_saturation(config.saturation))
    }

    /// Gains after applying the policy. Manual gains must satisfy the strict
    /// initial bound when the prescribed-time filter is active.
    pub fn resolve_gains(&self) -> Result<GainVector> {
        let clock = self.clock()?;
        let resolved = match &self.gain_policy {
            GainPolicy::Auto { margin, c_n } => select_gains(&self.x0, &clock, *margin, *c_n),
            GainPolicy::Manual(g) => {
                if matches!(self.filter, FilterChoice::Ptsf(_))
                    && !validate_gains(g, &self.x0, &clock)?
                {
                    return Err(Error::Precondition(format!(
                        "gains {:?} violate the initial bound c_i > max(0, c_lower_i), c_n >= 0",
                        g.as_slice()
                    )));
                }
                Ok(g.clone())
            }
        };
        match (resolved, &self.filter, &self.gain_policy) {
            // Unfiltered runs only record barriers, so fall back to flat gains.
            (Err(_), FilterChoice::None, GainPolicy::Auto { margin, .. }) => {
                Ok(GainVector(vec![*margin; self.order()]))
            }
            (r, _, _) => r,
        }
    }

    fn grid(&self) -> (usize, usize) {
        let span = (self.t_end - self.t0) / self.dt;
        let steps = if (span - span.round()).abs() <= GRID_TOL * span.max(1.0) {
            span.round() as usize
        } else {
            span.ceil() as usize
        };
        let to_terminal = self.horizon / self.dt;
        let terminal =
            if (to_terminal - to_terminal.round()).abs() <= GRID_TOL * to_terminal.max(1.0) {
                to_terminal.round() as usize
            } else {
                to_terminal.ceil() as usize
            };
        (steps, terminal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: f64,
    pub u_nom: f64,
    /// `alpha_n` for the prescribed-time filter, the linear bound for ESf.
    pub safe_bound: f64,
    pub h: Vec<f64>,
    pub override_active: bool,
    pub mu_clipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub t0: f64,
    pub horizon: f64,
    pub dt: f64,
    pub gains: GainVector,
    pub filter: FilterChoice,
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Index of the first sample at or after the terminal time.
    pub fn terminal_index(&self) -> Option<usize> {
        let tt = self.t0 + self.horizon - GRID_TOL * self.dt;
        self.samples.iter().position(|s| s.t >= tt)
    }

    /// Samples on `[t0, t0 + T)`.
    pub fn pre_terminal(&self) -> &[Sample] {
        let end = self.terminal_index().unwrap_or(self.samples.len());
        &self.samples[..end]
    }
}

/// `(x_2, ..., x_n, u)`.
pub fn chain_rhs(x: &[f64], u: f64) -> Vec<f64> {
    x.iter()
        .skip(1)
        .copied()
        .chain(std::iter::once(u))
        .collect()
}

fn axpy(x: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect()
}

/// One classical RK4 step of the chain; the control law is evaluated at every stage.
pub fn step_rk4<F>(x: &[f64], t: f64, dt: f64, mut control: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], f64) -> Result<f64>,
{
    if !(dt > 0.0) {
        return Err(Error::Precondition(format!(
            "step size must be positive, got {dt}"
        )));
    }
    let mut eval = |x: &[f64], t: f64| -> Result<Vec<f64>> {
        let u = control(x, t)?;
        if !u.is_finite() {
            return Err(Error::Numeric { t, x: x.to_vec() });
        }
        Ok(chain_rhs(x, u))
    };
    let k1 = eval(x, t)?;
    let k2 = eval(&axpy(x, dt / 2.0, &k1), t + dt / 2.0)?;
    let k3 = eval(&axpy(x, dt / 2.0, &k2), t + dt / 2.0)?;
    let k4 = eval(&axpy(x, dt, &k3), t + dt)?;
    let next: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, xi)| xi + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric { t: t + dt, x: next });
    }
    Ok(next)
}

/// Pre-terminal laws apply the filter bound; post-terminal laws ramp the nominal back in.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Regime {
    PreTerminal,
    PostTerminal { x1_at_t: f64 },
}

/// Gain rows for the most recent distinct times; RK4 stages and consecutive
/// substeps share their time points.
const ROW_CACHE: usize = 3;

struct ControlLaw<'a> {
    scenario: &'a Scenario,
    clock: HorizonClock,
    gains: &'a GainVector,
    rows: RefCell<Vec<(f64, Vec<f64>)>>,
}

impl<'a> ControlLaw<'a> {
    fn new(scenario: &'a Scenario, clock: HorizonClock, gains: &'a GainVector) -> Self {
        Self {
            scenario,
            clock,
            gains,
            rows: RefCell::new(Vec::with_capacity(ROW_CACHE)),
        }
    }

    fn alpha_n(&self, x: &[f64], t: f64) -> Result<f64> {
        let mut rows = self.rows.borrow_mut();
        let slot = match rows.iter().position(|(tc, _)| *tc == t) {
            Some(slot) => slot,
            None => {
                let row = alpha_n_row(x.len(), t, &self.clock, self.gains)?;
                if rows.len() == ROW_CACHE {
                    rows.remove(0);
                }
                rows.push((t, row));
                rows.len() - 1
            }
        };
        Ok(rows[slot].1.iter().zip(x).map(|(k, xi)| k * xi).sum())
    }

    fn decide(&self, x: &[f64], t: f64, regime: Regime) -> Result<FilterDecision> {
        let u_nom = self.scenario.nominal.eval(x, t);
        match (&self.scenario.filter, regime) {
            (FilterChoice::Ptsf(_), Regime::PreTerminal) => {
                Ok(min_norm_override(u_nom, self.alpha_n(x, t)?))
            }
            (FilterChoice::Ptsf(config), Regime::PostTerminal { x1_at_t }) => Ok(FilterDecision {
                u: u_nom
                    * ramp_g(
                        t.max(self.clock.terminal_time()),
                        x1_at_t,
                        &self.clock,
                        config,
                    ),
                override_active: false,
                safe_bound: f64::NAN,
                u_nom,
            }),
            (FilterChoice::Esf { rho }, _) => esf_control(u_nom, x, *rho),
            (FilterChoice::None, _) => Ok(FilterDecision {
                u: u_nom,
                override_active: false,
                safe_bound: f64::NAN,
                u_nom,
            }),
        }
    }

    fn stiffness(&self, t: f64, regime: Regime) -> f64 {
        match (&self.scenario.filter, regime) {
            (FilterChoice::Ptsf(_), Regime::PreTerminal) => {
                let t_rel = (t - self.clock.t0).max(0.0);
                self.gains.max() * applied_mu2(t_rel, &self.clock)
            }
            (FilterChoice::Esf { rho }, _) => 2.0 * rho,
            _ => 0.0,
        }
    }

    fn record(&self, x: &[f64], t: f64, regime: Regime) -> Result<Sample> {
        let decision = self.decide(x, t, regime)?;
        if !decision.u.is_finite() {
            return Err(Error::Numeric { t, x: x.to_vec() });
        }
        let (h, safe_bound, mu_clip) = match self.scenario.filter {
            FilterChoice::Esf { rho } => {
                (vec![-x[0], -x[1] - rho * x[0]], decision.safe_bound, false)
            }
            _ => {
                let stack = barrier_stack(x, t, &self.clock, self.gains)?;
                let bound = stack.alpha_n();
                (stack.h, bound, stack.mu_clipped)
            }
        };
        Ok(Sample {
            t,
            x: x.to_vec(),
            u: decision.u,
            u_nom: decision.u_nom,
            safe_bound,
            h,
            override_active: decision.override_active,
            mu_clipped: mu_clip,
        })
    }
}

/// Integrates the scenario from `t0` to `t_end` on the uniform grid `t0 + k dt`.
///
/// Each grid step is split into equal RK4 substeps. With `k` the closed-loop
/// stiffness (`max c_i * mu_2` as applied, for the prescribed-time filter),
/// substeps target `k h <= FINE_STIFF_STEP` up to [`SUBSTEP_BUDGET`] per grid
/// step and never exceed `k h = MAX_STIFF_STEP`. A step that would need more
/// than `max_substeps` fails with [`Error::TooStiff`].
pub fn simulate(scenario: &Scenario) -> Result<Trajectory> {
    scenario.validate()?;
    let gains = scenario.resolve_gains()?;
    let clock = scenario.clock()?;
    let law = ControlLaw::new(scenario, clock, &gains);
    let (steps, terminal) = scenario.grid();
    let dt = scenario.dt;

    // stiffness depends on time only, so an infeasible grid step is known up front
    for k in 0..steps.min(terminal) {
        let t = scenario.t0 + k as f64 * dt;
        let required = substep_count(law.stiffness(t + dt, Regime::PreTerminal) * dt);
        if required > scenario.max_substeps {
            return Err(Error::TooStiff {
                t,
                required,
                max: scenario.max_substeps,
            });
        }
    }

    let mut samples = Vec::with_capacity(steps + 1);
    let mut x = scenario.x0.clone();
    let mut regime = Regime::PreTerminal;
    for k in 0..=steps {
        let t = scenario.t0 + k as f64 * dt;
        if k == terminal {
            regime = Regime::PostTerminal { x1_at_t: x[0] };
        }
        samples.push(law.record(&x, t, regime)?);
        if k == steps {
            break;
        }
        let required = substep_count(law.stiffness(t + dt, regime) * dt);
        if required > scenario.max_substeps {
            return Err(Error::TooStiff {
                t,
                required,
                max: scenario.max_substeps,
            });
        }
        let h = dt / required as f64;
        let mut ts = t;
        for _ in 0..required {
            x = step_rk4(&x, ts, h, |xs, ts| law.decide(xs, ts, regime).map(|d| d.u))?;
            // the next substep starts at this substep's last stage time
            ts += h;
        }
    }
    Ok(Trajectory {
        n: scenario.order(),
        t0: scenario.t0,
        horizon: scenario.horizon,
        dt,
        gains,
        filter: scenario.filter,
        samples,
    })
}

fn substep_count(stiff_dt: f64) -> usize {
    let fine = (stiff_dt / FINE_STIFF_STEP).ceil() as usize;
    let stable = (stiff_dt / MAX_STIFF_STEP).ceil() as usize;
    fine.min(SUBSTEP_BUDGET).max(stable).max(1)
}

/// Maximal runs of overridden samples as `[t_start, t_end)` in sample time.
pub fn detect_overrides(traj: &Trajectory) -> Vec<(f64, f64)> {
    override_runs(traj)
        .into_iter()
        .map(|(s, e)| {
            let end = traj
                .samples
                .get(e)
                .map_or_else(|| traj.samples[e - 1].t + traj.dt, |s| s.t);
            (traj.samples[s].t, end)
        })
        .collect()
}

fn override_runs(traj: &Trajectory) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, s) in traj.samples.iter().enumerate() {
        match (s.override_active, start) {
            (true, None) => start = Some(i),
            (false, Some(b)) => {
                runs.push((b, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(b) = start {
        runs.push((b, traj.samples.len()));
    }
    runs
}

/// Largest `|du/dt|` over override intervals, by central differences inside
/// each interval and one-sided differences at its ends. Double integrator only.
pub fn jerk_on_override(traj: &Trajectory) -> Result<f64> {
    if traj.n != 2 {
        return Err(Error::UnsupportedOrder {
            n: traj.n,
            what: "jerk is du/dt only for n = 2",
        });
    }
    let u: Vec<f64> = traj.samples.iter().map(|s| s.u).collect();
    let dt = traj.dt;
    let mut worst: f64 = 0.0;
    for (s, e) in override_runs(traj) {
        if e - s < 2 {
            continue;
        }
        for i in s..e {
            let d = if i == s {
                (u[i + 1] - u[i]) / dt
            } else if i == e - 1 {
                (u[i] - u[i - 1]) / dt
            } else {
                (u[i + 1] - u[i - 1]) / (2.0 * dt)
            };
            worst = worst.max(d.abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    /// `min h_1 = min(-x_1)` on `[t0, t0 + T)`.
    pub min_h1: f64,
    /// `max y = max x_1` on `[t0, t0 + T)`; negative means safe.
    pub min_y_margin: f64,
    pub max_abs_u: f64,
    /// `None` unless `n = 2`.
    pub max_abs_jerk_on_override: Option<f64>,
    /// `x_1` at the first grid point at or after the terminal time.
    pub x1_at_t: Option<f64>,
    pub override_intervals: Vec<(f64, f64)>,
}

pub fn compute_metrics(traj: &Trajectory, clock: &HorizonClock) -> Result<Metrics> {
    if traj.is_empty() {
        return Err(Error::Precondition("trajectory is empty".into()));
    }
    if clock.t0 != traj.t0 || clock.horizon != traj.horizon {
        return Err(Error::Precondition(
            "clock does not match the trajectory horizon".into(),
        ));
    }
    let pre = traj.pre_terminal();
    let min_h1 = pre.iter().map(|s| -s.x[0]).fold(f64::INFINITY, f64::min);
    let min_y_margin = pre.iter().map(|s| s.x[0]).fold(f64::NEG_INFINITY, f64::max);
    let max_abs_u = pre.iter().map(|s| s.u.abs()).fold(0.0, f64::max);
    Ok(Metrics {
        min_h1,
        min_y_margin,
        max_abs_u,
        max_abs_jerk_on_override: if traj.n == 2 {
            Some(jerk_on_override(traj)?)
        } else {
            None
        },
        x1_at_t: traj.terminal_index().map(|i| traj.samples[i].x[0]),
        override_intervals: detect_overrides(traj),
    })
}

#[derive(Debug, Clone)]
pub struct VariantResult {
    pub label: String,
    pub scenario: Scenario,
    pub trajectory: Trajectory,
    pub metrics: Metrics,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub variants: Vec<VariantResult>,
}

impl ComparisonReport {
    pub fn get(&self, label: &str) -> Option<&VariantResult> {
        self.variants.iter().find(|v| v.label == label)
    }
}

/// Runs `base` once per filter choice.
pub fn compare_filters(base: &Scenario, variants: &[FilterChoice]) -> Result<ComparisonReport> {
    let scenarios: Vec<Scenario> = variants
        .iter()
        .map(|f| Scenario {
            filter: *f,
            ..base.clone()
        })
        .collect();
    compare_scenarios(&scenarios)
}

/// Runs scenarios that share order, initial state, nominal law and step size.
pub fn compare_scenarios(scenarios: &[Scenario]) -> Result<ComparisonReport> {
    let Some(first) = scenarios.first() else {
        return Err(Error::Precondition("no variants to compare".into()));
    };
    for s in &scenarios[1..] {
        if s.x0 != first.x0 || s.nominal != first.nominal || s.dt != first.dt {
            return Err(Error::Precondition(
                "compared variants must share x0, nominal controller and dt".into(),
            ));
        }
    }
    let mut variants = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        let trajectory = simulate(s)?;
        let metrics = compute_metrics(&trajectory, &s.clock()?)?;
        let mut label = s.filter.label();
        if variants.iter().any(|v: &VariantResult| v.label == label) {
            label = format!("{label}_{}", variants.len());
        }
        variants.push(VariantResult {
            label,
            scenario: s.clone(),
            trajectory,
            metrics,
        });
    }
    Ok(ComparisonReport { variants })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn free_motion() -> Scenario {
        Scenario {
            filter: FilterChoice::None,
            nominal: NominalSpec::Constant { value: 0.0 },
            ..Scenario::reference_double_integrator()
        }
    }

    #[test]
    fn rhs_examples() {
        assert_eq!(chain_rhs(&[-4.0, 2.0], 0.24), vec![2.0, 0.24]);
        assert_eq!(chain_rhs(&[0.0, 0.0, 0.0], 1.0), vec![0.0, 0.0, 1.0]);
        assert_eq!(chain_rhs(&[1.0, 2.0, 3.0], -1.0), vec![2.0, 3.0, -1.0]);
    }

    #[test]
    fn rk4_is_exact_on_polynomial_flows() {
        let x = step_rk4(&[0.0, 1.0], 0.0, 0.1, |_, _| Ok(0.0)).unwrap();
        assert_relative_eq!(x[0], 0.1, epsilon = 1e-15);
        assert_eq!(x[1], 1.0);
        let x = step_rk4(&[0.0, 0.0], 0.0, 0.1, |_, _| Ok(1.0)).unwrap();
        assert_relative_eq!(x[0], 0.005, epsilon = 1e-15);
        assert_relative_eq!(x[1], 0.1, epsilon = 1e-15);
        assert!(step_rk4(&[0.0], 0.0, 0.0, |_, _| Ok(0.0)).is_err());
        let err = step_rk4(&[0.0, 1.0], 0.5, 0.1, |_, _| Ok(f64::NAN)).unwrap_err();
        assert!(matches!(err, Error::Numeric { t, .. } if t == 0.5));
    }

    #[test]
    fn free_motion_crosses_at_two() {
        let traj = simulate(&free_motion()).unwrap();
        assert_eq!(traj.len(), 6001);
        let at = |t: f64| &traj.samples[(t / 1e-3).round() as usize];
        assert_relative_eq!(at(2.0).x[0], 0.0, epsilon = 1e-9);
        assert_relative_eq!(at(1.0).x[0], -2.0, epsilon = 1e-9);
        assert!(detect_overrides(&traj).is_empty());
        let m = compute_metrics(&traj, &free_motion().clock().unwrap()).unwrap();
        assert_eq!(m.max_abs_jerk_on_override, Some(0.0));
        assert!(m.override_intervals.is_empty());
        assert!(m.min_y_margin > 0.0 && m.min_h1 < 0.0);
    }

    #[test]
    fn forced_override_starts_at_t0() {
        let s = Scenario {
            nominal: NominalSpec::Constant { value: 10.0 },
            ..Scenario::reference_double_integrator()
        };
        let traj = simulate(&s).unwrap();
        assert!(traj.samples[0].override_active);
        for sample in traj.pre_terminal() {
            assert!(sample.h.iter().all(|h| *h > 0.0), "t = {}", sample.t);
        }
        let intervals = detect_overrides(&traj);
        assert_eq!(intervals[0].0, 0.0);
    }

    fn synthetic(flags: &[bool], u: &[f64]) -> Trajectory {
        Trajectory {
            n: 2,
            t0: 0.0,
            horizon: 1.0,
            dt: 1e-3,
            gains: GainVector(vec![1.0, 1.0]),
            filter: FilterChoice::None,
            samples: flags
                .iter()
                .zip(u)
                .enumerate()
                .map(|(i, (f, u))| Sample {
                    t: i as f64 * 1e-3,
                    x: vec![-1.0, 0.0],
                    u: *u,
                    u_nom: *u,
                    safe_bound: 0.0,
                    h: vec![1.0, 0.0],
                    override_active: *f,
                    mu_clipped: false,
                })
                .collect(),
        }
    }

    #[test]
    fn override_interval_index_arithmetic() {
        let flags: Vec<bool> = (0..3000).map(|i| (1000..2000).contains(&i)).collect();
        let traj = synthetic(&flags, &vec![0.5; 3000]);
        let iv = detect_overrides(&traj);
        assert_eq!(iv.len(), 1);
        assert_relative_eq!(iv[0].0, 1.0, epsilon = 1e-12);
        assert_relative_eq!(iv[0].1, 2.0, epsilon = 1e-12);
        assert_eq!(jerk_on_override(&traj).unwrap(), 0.0);

        let traj = synthetic(&[false; 5], &[0.0; 5]);
        assert!(detect_overrides(&traj).is_empty());

        let traj = synthetic(&[false, true, true], &[0.0, 1.0, 1.5]);
        let iv = detect_overrides(&traj);
        assert_relative_eq!(iv[0].1, 3e-3, epsilon = 1e-15);
        assert_relative_eq!(jerk_on_override(&traj).unwrap(), 500.0, epsilon = 1e-9);
    }

    #[test]
    fn jerk_requires_double_integrator() {
        let mut traj = synthetic(&[true, true], &[0.0, 1.0]);
        traj.n = 3;
        assert!(matches!(
            jerk_on_override(&traj),
            Err(Error::UnsupportedOrder { n: 3, .. })
        ));
    }

    #[test]
    fn validation_errors() {
        let mut s = Scenario::reference_double_integrator();
        s.x0 = vec![1.0, 0.0];
        assert!(matches!(simulate(&s), Err(Error::InitiallyUnsafe { .. })));
        let mut s = Scenario::reference_double_integrator();
        s.t_end = 3.0;
        assert!(matches!(simulate(&s), Err(Error::Precondition(_))));
        let mut s = Scenario::reference_double_integrator();
        s.gain_policy = GainPolicy::Manual(GainVector(vec![0.4, 0.6]));
        assert!(matches!(simulate(&s), Err(Error::Precondition(_))));
        let mut s = Scenario::reference_double_integrator();
        s.x0 = vec![-1.0, 0.0, 0.0];
        assert!(matches!(simulate(&s), Err(Error::UnsupportedOrder { .. })));
    }

    #[test]
    fn compare_rejects_mismatched_variants() {
        let a = Scenario::reference_double_integrator();
        let b = Scenario {
            x0: vec![-3.0, 2.0],
            ..a.clone()
        };
        assert!(matches!(
            compare_scenarios(&[a.clone(), b]),
            Err(Error::Precondition(_))
        ));
        let report = compare_filters(&a, &[FilterChoice::Esf { rho: 0.6 }]).unwrap();
        assert_eq!(report.variants.len(), 1);
        assert_eq!(report.variants[0].label, "esf_rho0.6");
    }

    #[test]
    fn runs_are_deterministic() {
        let s = Scenario::reference_double_integrator();
        assert_eq!(simulate(&s).unwrap(), simulate(&s).unwrap());
    }
}
