use proptest::prelude::*;

use ptcbf_core::*;

/// Jet of `t -> t^k` at `t`, with every derivative written out by hand.
fn monomial_jet(k: u32, t: f64, order: usize) -> DerivativeJet {
    let coeffs = (0..=order)
        .map(|d| {
            if d as u32 > k {
                0.0
            } else {
                let falling: f64 = (0..d as u32).map(|j| (k - j) as f64).product();
                falling * t.powi((k - d as u32) as i32)
            }
        })
        .collect();
    DerivativeJet::new(coeffs)
}

fn state(n: usize) -> impl Strategy<Value = Vec<f64>> {
    (-8.0..-0.2f64, prop::collection::vec(-3.0..3.0f64, n - 1)).prop_map(|(x1, rest)| {
        let mut x = vec![x1];
        x.extend(rest);
        x
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn mu_is_at_least_one_and_nondecreasing(m in 1u32..=6, horizon in 0.1..10.0f64, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (m_lo, m_hi) = (mu(m, lo * horizon * 0.999, horizon).unwrap(), mu(m, hi * horizon * 0.999, horizon).unwrap());
        prop_assert!(m_lo >= 1.0);
        prop_assert!(m_hi >= m_lo);
    }

    #[test]
    fn mu_rejects_the_terminal_time(m in 1u32..=6, horizon in 0.1..10.0f64, extra in 0.0..5.0f64) {
        prop_assert!(matches!(mu(m, horizon + extra, horizon), Err(Error::Domain(_))));
        prop_assert!(mu_clipped(m, horizon + extra, horizon, 1000.0) == 1000.0);
    }

    #[test]
    fn commutativity_holds(m in 2u32..=6, horizon in 0.1..10.0f64, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let t = a.max(b) * horizon * 0.99;
        let t_mid = a.min(b) * horizon * 0.99;
        prop_assert!(check_mu_commutativity(m, t_mid, t, horizon, 1e-10).unwrap());
    }

    #[test]
    fn jet_products_follow_leibniz(j in 0u32..5, k in 0u32..5, t in -2.0..2.0f64) {
        let order = 4;
        let product = &monomial_jet(j, t, order) * &monomial_jet(k, t, order);
        let expected = monomial_jet(j + k, t, order);
        for d in 0..=order {
            let (got, want) = (product.derivative_coeff(d), expected.derivative_coeff(d));
            prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "d = {d}: {got} vs {want}");
        }
        let power = monomial_jet(1, t, order).powi(j + k);
        for d in 0..=order {
            let want = expected.derivative_coeff(d);
            prop_assert!((power.derivative_coeff(d) - want).abs() <= 1e-9 * want.abs().max(1.0));
        }
    }

    #[test]
    fn mu_jet_matches_the_derivative_identity(m in 1u32..=4, horizon in 0.5..5.0f64, frac in 0.0..0.9f64) {
        let t_rel = frac * horizon;
        let jet = jet_of_mu(m, t_rel, horizon, 3, f64::INFINITY);
        for i in 0..=3u32 {
            let want = mu_derivative(m, i, t_rel, horizon).unwrap();
            prop_assert!((jet.derivative_coeff(i as usize) - want).abs() <= 1e-12 * want);
        }
    }

    #[test]
    fn override_is_the_minimum_norm_correction(u_nom in -50.0..50.0f64, bound in -50.0..50.0f64) {
        let d = min_norm_override(u_nom, bound);
        prop_assert!(d.u <= bound);
        // any other admissible input is at least as far from the nominal one
        let other = bound - 1.0;
        prop_assert!((d.u - u_nom).abs() <= (other - u_nom).abs());
        prop_assert_eq!(d.override_active, u_nom > bound);
        prop_assert_eq!(d.u, u_nom.min(bound));
    }

    #[test]
    fn esf_closed_form_solves_the_closed_loop(x in state(2), rho in 0.1..5.0f64, delta in 0.0..5.0f64) {
        let step = 1e-5;
        let at = esf_closed_form(&x, rho, delta).unwrap();
        let ahead = esf_closed_form(&x, rho, delta + step).unwrap();
        let behind = esf_closed_form(&x, rho, (delta - step).max(0.0)).unwrap();
        let span = delta + step - (delta - step).max(0.0);
        let rate = [(ahead[0] - behind[0]) / span, (ahead[1] - behind[1]) / span];
        let field = [at[1], -2.0 * rho * rho * at[0] - 3.0 * rho * at[1]];
        let scale = field[0].abs().max(field[1].abs()).max(1.0);
        prop_assert!((rate[0] - field[0]).abs() <= 1e-4 * scale);
        prop_assert!((rate[1] - field[1]).abs() <= 1e-4 * scale);
        prop_assert_eq!(esf_closed_form(&x, rho, 0.0).unwrap(), [x[0], x[1]]);
    }

    #[test]
    fn stack_is_linear_in_the_state(n in 1usize..=5, a in -3.0..3.0f64, t in 0.0..3.9f64, seed in state(5)) {
        let x = &seed[..n];
        let clock = HorizonClock::new(0.0, 4.0, 1000.0).unwrap();
        let gains = GainVector(vec![0.7; n]);
        let row = alpha_n_row(n, t, &clock, &gains).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| a * v).collect();
        let alpha = barrier_stack(&scaled, t, &clock, &gains).unwrap().alpha_n();
        let dot: f64 = row.iter().zip(&scaled).map(|(k, v)| k * v).sum();
        prop_assert!((alpha - dot).abs() <= 1e-10 * alpha.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulation_is_deterministic(x in state(3), horizon in 1.0..3.0f64, value in -10.0..10.0f64) {
        let s = Scenario {
            x0: x,
            horizon,
            gain_policy: GainPolicy::Auto { margin: 0.2, c_n: 0.5 },
            nominal: NominalSpec::Constant { value },
            dt: horizon / 1000.0,
            t_end: horizon + 1.0,
            ..Scenario::reference_double_integrator()
        };
        match (simulate(&s), simulate(&s)) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.len(), b.len());
                for (p, q) in a.samples.iter().zip(&b.samples) {
                    prop_assert!(p.x.iter().zip(&q.x).all(|(u, v)| u.to_bits() == v.to_bits()));
                    prop_assert_eq!(p.u.to_bits(), q.u.to_bits());
                }
            }
            (Err(a), Err(b)) => prop_assert_eq!(a, b),
            _ => prop_assert!(false, "runs disagree"),
        }
    }

    #[test]
    fn control_stays_bounded_and_safe(x in state(2), value in -10.0..10.0f64, amplitude in 0.0..2.0f64) {
        let s = Scenario {
            x0: x.clone(),
            nominal: NominalSpec::TrackingSine { k1: 4.0, k2: 4.0, amplitude, offset: 0.8, omega: std::f64::consts::FRAC_PI_2 },
            ..Scenario::reference_double_integrator()
        };
        let s = Scenario { gain_policy: GainPolicy::Auto { margin: 0.1, c_n: 0.6 }, ..s };
        let constant = Scenario { nominal: NominalSpec::Constant { value }, ..s.clone() };
        for s in [s, constant] {
            let traj = simulate(&s).unwrap();
            let clock = s.clock().unwrap();
            let alpha0 = barrier_stack(&s.x0, s.t0, &clock, &traj.gains).unwrap().alpha_n();
            let pre = traj.pre_terminal();
            let nominal_max = pre.iter().map(|p| p.u_nom.abs()).fold(0.0, f64::max);
            let u_max = pre.iter().map(|p| p.u.abs()).fold(0.0, f64::max);
            prop_assert!(u_max.is_finite());
            prop_assert!(u_max <= 10.0 * (nominal_max + alpha0.abs()), "{u_max} vs {nominal_max}, {alpha0}");
            prop_assert!(pre.iter().all(|p| p.x[0] < 0.0));
        }
    }
}
