//! Seeded self-checks of the kernel, the barrier stack and the closed-form
//! oracles, runnable from the CLI as a regression gate.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backstepping::{applied_mu2, barrier_stack, validate_gains, GainVector};
use crate::error::{Error, Result};
use crate::filter::{esf_closed_form, min_norm_override, FilterConfig};
use crate::kernel::{check_mu_commutativity, mu, mu_derivative, xi, HorizonClock};
use crate::sim::{simulate, FilterChoice, GainPolicy, NominalSpec, Scenario, Trajectory};

/// Seed shared by every randomized check.
pub const VERIFY_SEED: u64 = 0x5eed_2024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Kernel,
    Backstepping,
    Oracles,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kernel" => Ok(Suite::Kernel),
            "backstepping" => Ok(Suite::Backstepping),
            "oracles" => Ok(Suite::Oracles),
            "all" => Ok(Suite::All),
            other => Err(Error::Precondition(format!(
                "unknown suite {other:?}; expected kernel, backstepping, oracles or all"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub suite: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerificationReport {
    pub checks: Vec<CheckOutcome>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{verdict} {}/{}: {}", c.suite, c.name, c.detail)?;
        }
        let failed = self.failures().count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

type Check = (&'static str, fn(&mut ChaCha8Rng) -> Result<(bool, String)>);

const KERNEL: &[Check] = &[
    ("mu_bounded_below_and_nondecreasing", mu_monotone),
    ("commutativity", commutativity),
    ("derivative_identity", derivative_identity),
    ("soft_landing_products", soft_landing_products),
];

const BACKSTEPPING: &[Check] = &[
    ("gain_condition_equivalence", gain_equivalence),
    ("jet_consistency", jet_consistency),
    ("linearity", linearity),
    ("closed_loop_identity", closed_loop_identity),
];

const ORACLES: &[Check] = &[
    ("qp_minimality", qp_minimality),
    ("esf_closed_form", esf_oracle),
    ("explicit_h_n", explicit_h_n),
    ("infinitely_soft_landing", infinitely_soft_landing),
    ("terminal_continuity", terminal_continuity),
];

/// Runs the selected checks with [`VERIFY_SEED`]; each suite reseeds, so
/// results do not depend on which other suites run.
pub fn run_verification_suite(suite: Suite) -> VerificationReport {
    let groups: &[(&'static str, &[Check])] = match suite {
        Suite::Kernel => &[("kernel", KERNEL)],
        Suite::Backstepping => &[("backstepping", BACKSTEPPING)],
        Suite::Oracles => &[("oracles", ORACLES)],
        Suite::All => &[
            ("kernel", KERNEL),
            ("backstepping", BACKSTEPPING),
            ("oracles", ORACLES),
        ],
    };
    let mut report = VerificationReport::default();
    for (suite_name, checks) in groups {
        let mut rng = ChaCha8Rng::seed_from_u64(VERIFY_SEED);
        for (name, check) in checks.iter() {
            let (passed, detail) =
                check(&mut rng).unwrap_or_else(|e| (false, format!("error: {e}")));
            report.checks.push(CheckOutcome {
                suite: suite_name,
                name,
                passed,
                detail,
            });
        }
    }
    report
}

/// Double integrator from `(-4, 2)`, `T = 4`, gains `(0.6, 0.6)`, with a
/// constant nominal `+10` that keeps the filter overriding from `t = 0`.
pub fn forced_override_scenario(mu_max: f64) -> Scenario {
    Scenario {
        name: Some("forced_override".into()),
        nominal: NominalSpec::Constant { value: 10.0 },
        filter: FilterChoice::Ptsf(FilterConfig {
            mu_max,
            ..FilterConfig::default()
        }),
        gain_policy: GainPolicy::Manual(GainVector(vec![0.6, 0.6])),
        t_end: 5.0,
        ..Scenario::reference_double_integrator()
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn mu_monotone(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst = f64::INFINITY;
    for _ in 0..50 {
        let m = rng.gen_range(1..=6);
        let horizon = rng.gen_range(0.1..10.0);
        let mut last = 0.0;
        for k in 0..1000 {
            let value = mu(m, horizon * k as f64 / 1000.0, horizon)?;
            if value < 1.0 || value < last {
                return Ok((
                    false,
                    format!("mu_{m} decreased or fell below 1 at step {k} (T = {horizon})"),
                ));
            }
            worst = worst.min(value);
            last = value;
        }
    }
    Ok((true, format!("50 grids of 1000 points, min value {worst}")))
}

fn commutativity(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    for i in 0..1000 {
        let m = rng.gen_range(2..=6);
        let horizon = rng.gen_range(0.1..10.0);
        let t = rng.gen_range(0.0..horizon);
        let t_mid = rng.gen_range(0.0..=t);
        if !check_mu_commutativity(m, t_mid, t, horizon, 1e-10)? {
            return Ok((
                false,
                format!("instance {i}: m = {m}, T = {horizon}, t_mid = {t_mid}, t = {t}"),
            ));
        }
    }
    Ok((true, "1000 instances at relative 1e-10".into()))
}

fn derivative_identity(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = rng.gen_range(1..=6);
        let horizon = rng.gen_range(0.1..10.0);
        let t = rng.gen_range(0.0..0.9 * horizon);
        let step = 1e-6 * horizon;
        for order in 1..=3 {
            let lower = |s: f64| mu_derivative(m, order - 1, s, horizon);
            let fd =
                (lower(t + step)? - lower((t - step).max(0.0))?) / (t + step - (t - step).max(0.0));
            worst = worst.max(rel_err(fd, mu_derivative(m, order, t, horizon)?));
        }
    }
    Ok((
        worst <= 1e-6,
        format!("100 instances, orders 1-3, worst relative error {worst:.2e}"),
    ))
}

fn soft_landing_products(_: &mut ChaCha8Rng) -> Result<(bool, String)> {
    for horizon in [1.0, 4.0, 10.0] {
        for c in [0.5, 1.0, 3.0] {
            for k in 0..=6 {
                let mut last = f64::INFINITY;
                for j in 1..=6 {
                    let t = horizon * (1.0 - 10f64.powi(-j));
                    let value = mu(1, t, horizon)?.powi(k) * xi(c, t, horizon)?;
                    if value > last {
                        return Ok((
                            false,
                            format!("mu_1^{k} xi increased at j = {j} (c = {c}, T = {horizon})"),
                        ));
                    }
                    last = value;
                }
                if last > 1e-12 {
                    return Ok((
                        false,
                        format!("mu_1^{k} xi = {last:e} at j = 6 (c = {c}, T = {horizon})"),
                    ));
                }
            }
        }
    }
    Ok((true, "c in {0.5, 1, 3}, k <= 6, T in {1, 4, 10}".into()))
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut x = vec![rng.gen_range(-10.0..-0.1)];
    x.extend((1..n).map(|_| rng.gen_range(-5.0..5.0)));
    x
}

fn gain_equivalence(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut count = 0;
    for _ in 0..400 {
        let n = rng.gen_range(2..=5);
        let x0 = random_state(rng, n);
        let clock = HorizonClock::new(0.0, rng.gen_range(1.0..5.0), 1000.0)?;
        let gains = GainVector((0..n).map(|_| rng.gen_range(0.01..20.0)).collect());
        let stack = barrier_stack(&x0, 0.0, &clock, &gains)?;
        // skip states numerically on a stage barrier, where both sides are ill-posed
        if stack.h.iter().any(|h| h.abs() < 1e-9) {
            continue;
        }
        let all_positive = stack.h.iter().all(|h| *h > 0.0);
        let valid = match validate_gains(&gains, &x0, &clock) {
            Ok(v) => v,
            Err(Error::DegenerateBarrier { .. }) => false,
            Err(e) => return Err(e),
        };
        if valid != all_positive {
            return Ok((
                false,
                format!(
                    "x0 = {x0:?}, gains = {:?}: valid = {valid}, h = {:?}",
                    gains.0, stack.h
                ),
            ));
        }
        count += 1;
    }
    Ok((
        true,
        format!("{count} random (x0, gains) pairs, n in 2..=5"),
    ))
}

/// State after `dt` of free motion `x_j' = x_{j+1}`, `x_n' = 0`.
fn free_flow(x: &[f64], dt: f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let mut term = 1.0;
            let mut acc = 0.0;
            for (k, xk) in x[j..].iter().enumerate() {
                if k > 0 {
                    term *= dt / k as f64;
                }
                acc += term * xk;
            }
            acc
        })
        .collect()
}

fn jet_consistency(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(2..=5);
        let x = random_state(rng, n);
        let horizon = rng.gen_range(1.0..5.0);
        let clock = HorizonClock::new(0.0, horizon, 1000.0)?;
        let gains = GainVector((0..n).map(|_| rng.gen_range(0.1..3.0)).collect());
        let t = rng.gen_range(0.0..0.8 * horizon);
        let step = 1e-5 * horizon;
        let stack = barrier_stack(&x, t, &clock, &gains)?;
        let ahead = barrier_stack(&free_flow(&x, step), t + step, &clock, &gains)?;
        let behind = barrier_stack(&free_flow(&x, -step), t - step.min(t), &clock, &gains)?;
        let span = step + step.min(t);
        for i in 0..n - 1 {
            let fd = (ahead.alpha[i] - behind.alpha[i]) / span;
            let jet = stack.alpha_jets[i].derivative_coeff(1);
            let scale = jet.abs().max(fd.abs()).max(1.0);
            worst = worst.max((fd - jet).abs() / scale);
        }
    }
    Ok((
        worst <= 1e-5,
        format!("200 random states, worst relative error {worst:.2e}"),
    ))
}

fn linearity(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(1..=5);
        let x = random_state(rng, n);
        let a = rng.gen_range(-3.0..3.0);
        let clock = HorizonClock::new(0.0, 2.0, 1000.0)?;
        let gains = GainVector((0..n).map(|_| rng.gen_range(0.1..3.0)).collect());
        let t = rng.gen_range(0.0..2.5);
        let base = barrier_stack(&x, t, &clock, &gains)?;
        let scaled_x: Vec<f64> = x.iter().map(|v| a * v).collect();
        let scaled = barrier_stack(&scaled_x, t, &clock, &gains)?;
        for (p, q) in base
            .h
            .iter()
            .chain(&base.alpha)
            .zip(scaled.h.iter().chain(&scaled.alpha))
        {
            worst = worst.max((a * p - q).abs() / (a * p).abs().max(1.0));
        }
    }
    Ok((
        worst <= 1e-12,
        format!("200 random (x, a, t), worst relative error {worst:.2e}"),
    ))
}

fn closed_loop_residual(traj: &Trajectory, clock: &HorizonClock) -> Result<f64> {
    let dt = traj.dt;
    let mut worst: f64 = 0.0;
    let n = traj.n;
    for k in 1..traj.len() - 1 {
        let s = &traj.samples[k];
        let t_rel = s.t - clock.t0;
        if t_rel > 0.9 * clock.horizon {
            break;
        }
        if !(traj.samples[k - 1].override_active
            && s.override_active
            && traj.samples[k + 1].override_active)
        {
            continue;
        }
        let mu2 = applied_mu2(t_rel, clock);
        for i in 0..n {
            let rate = (traj.samples[k + 1].h[i] - traj.samples[k - 1].h[i]) / (2.0 * dt);
            let decay = traj.gains.0[i] * mu2 * s.h[i];
            let next = if i + 1 < n { s.h[i + 1] } else { 0.0 };
            let scale = rate.abs().max(decay.abs()).max(next.abs()).max(1.0);
            worst = worst.max((rate + decay - next).abs() / scale);
        }
    }
    Ok(worst)
}

fn closed_loop_identity(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut runs = vec![forced_override_scenario(1000.0)];
    for n in [3, 4] {
        let x0 = random_state(rng, n);
        let horizon = rng.gen_range(1.0..5.0);
        let mut s = Scenario {
            name: None,
            x0,
            horizon,
            gain_policy: GainPolicy::Auto {
                margin: 0.1,
                c_n: 0.5,
            },
            nominal: NominalSpec::Constant { value: 10.0 },
            dt: horizon / 4000.0,
            t_end: horizon,
            ..forced_override_scenario(1000.0)
        };
        // keep the stack moderate so the finite differences resolve it
        if s.resolve_gains()?.max() > 50.0 {
            s.gain_policy = GainPolicy::Manual(GainVector(vec![1.0; n]));
            s.x0 = (0..n).map(|i| if i == 0 { -1.0 } else { 0.0 }).collect();
        }
        runs.push(s);
    }
    for s in &runs {
        let traj = simulate(s)?;
        worst = worst.max(closed_loop_residual(&traj, &s.clock()?)?);
    }
    Ok((
        worst <= 1e-4,
        format!(
            "{} forced-override runs, worst scaled residual {worst:.2e}",
            runs.len()
        ),
    ))
}

fn qp_minimality(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    for _ in 0..10_000 {
        let u_nom = rng.gen_range(-100.0..100.0);
        let bound = rng.gen_range(-100.0..100.0);
        let d = min_norm_override(u_nom, bound);
        let expected = if u_nom <= bound { u_nom } else { bound };
        if d.u > bound || d.u != expected || d.override_active != (u_nom > bound) {
            return Ok((
                false,
                format!("u_nom = {u_nom}, bound = {bound} gave u = {}", d.u),
            ));
        }
    }
    Ok((true, "10000 random (u_nom, bound) pairs".into()))
}

fn esf_oracle(_: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for rho in [0.6, 3.2] {
        for x0 in [[-1.0, 0.0], [-4.0, 2.0], [-0.5, 3.0]] {
            let s = Scenario {
                name: None,
                x0: x0.to_vec(),
                horizon: 5.0,
                filter: FilterChoice::Esf { rho },
                nominal: NominalSpec::Constant { value: 1e3 },
                dt: 1e-3,
                t_end: 5.0,
                ..Scenario::reference_double_integrator()
            };
            let traj = simulate(&s)?;
            for sample in &traj.samples {
                if !sample.override_active {
                    return Ok((
                        false,
                        format!("override released at t = {} (rho = {rho})", sample.t),
                    ));
                }
                let exact = esf_closed_form(&x0, rho, sample.t)?;
                for (a, b) in sample.x.iter().zip(exact) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    Ok((
        worst <= 1e-6,
        format!("rho in {{0.6, 3.2}}, delta in [0, 5], max state error {worst:.2e}"),
    ))
}

fn explicit_h_n(_: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let s = forced_override_scenario(1000.0);
    let traj = simulate(&s)?;
    let c_n = *traj.gains.0.last().expect("non-empty gains");
    let h0 = *traj.samples[0].h.last().expect("non-empty stack");
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for sample in traj.pre_terminal() {
        if sample.mu_clipped {
            break;
        }
        let exact = (-c_n * s.horizon * (mu(1, sample.t - s.t0, s.horizon)? - 1.0)).exp() * h0;
        worst = worst.max(rel_err(*sample.h.last().expect("non-empty stack"), exact));
        compared += 1;
    }
    Ok((
        worst <= 1e-4,
        format!("{compared} unsaturated samples, worst relative error {worst:.2e}"),
    ))
}

fn sample_index(traj: &Trajectory, t: f64) -> usize {
    ((t - traj.t0) / traj.dt).round() as usize
}

fn infinitely_soft_landing(_: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let s = forced_override_scenario(1e6);
    let traj = simulate(&s)?;
    let k = sample_index(&traj, s.t0 + s.horizon - 0.01);
    let h: Vec<f64> = (k - 2..=k + 2)
        .map(|j| *traj.samples[j].h.last().expect("stack"))
        .collect();
    let dt = traj.dt;
    let d1 = (h[3] - h[1]) / (2.0 * dt);
    let d2 = (h[3] - 2.0 * h[2] + h[1]) / (dt * dt);
    let d3 = (h[4] - 2.0 * h[3] + 2.0 * h[1] - h[0]) / (2.0 * dt.powi(3));
    let worst = [h[2], d1, d2, d3]
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    Ok((
        worst <= 1e-3,
        format!("max |h_n|, |h_n'|, |h_n''|, |h_n'''| at T - 0.01: {worst:.2e}"),
    ))
}

fn terminal_continuity(_: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let s = forced_override_scenario(1e6);
    let traj = simulate(&s)?;
    let terminal = traj.terminal_index().ok_or(Error::MissingTerminalCapture {
        t: s.t0 + s.horizon,
    })?;
    let before = traj.samples[terminal - 1].u;
    let at = traj.samples[terminal].u;
    let passed = before.abs() <= 1e-2 && at == 0.0;
    Ok((passed, format!("u(T - dt) = {before:.2e}, u(T) = {at:e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        assert_eq!("kernel".parse::<Suite>().unwrap(), Suite::Kernel);
        assert_eq!("all".parse::<Suite>().unwrap(), Suite::All);
        assert!("everything".parse::<Suite>().is_err());
    }

    #[test]
    fn free_flow_is_exact_for_polynomials() {
        // x = (t^2 / 2, t, 1) at t = 0 advanced by 2
        assert_eq!(free_flow(&[0.0, 0.0, 1.0], 2.0), vec![2.0, 2.0, 1.0]);
    }

    #[test]
    fn kernel_suite_passes() {
        let report = run_verification_suite(Suite::Kernel);
        assert!(report.passed(), "{report}");
        assert_eq!(report.checks.len(), KERNEL.len());
    }
}
