use ptcbf_core::verify::forced_override_scenario;
use ptcbf_core::*;

#[test]
fn landed_runs_ramp_the_nominal_input_back_in() {
    let s = forced_override_scenario(1000.0);
    let traj = simulate(&s).unwrap();
    let k = traj.terminal_index().unwrap();
    assert!(traj.samples[k].x[0].abs() <= s.filter_config().terminal_eps);
    let ramp_end = s.horizon + s.filter_config().ramp_t;
    let mut last = 0.0;
    for p in &traj.samples[k..] {
        assert!(!p.override_active);
        // g = 1 - (1 - tau / T_bar)^2 grows monotonically to one
        assert!(p.u >= last - 1e-12, "ramp decreased at t = {}", p.t);
        last = p.u;
        if p.t >= ramp_end + 1e-9 {
            assert_eq!(p.u, p.u_nom);
        }
    }
    let mid = traj
        .samples
        .iter()
        .find(|p| (p.t - (s.horizon + 0.25)).abs() < 1e-9)
        .unwrap();
    assert!((mid.u - 10.0 * 0.75).abs() < 1e-9, "{}", mid.u);
}

#[test]
fn unlanded_runs_hand_back_immediately() {
    let s = Scenario::reference_double_integrator();
    let traj = simulate(&s).unwrap();
    let k = traj.terminal_index().unwrap();
    assert!(traj.samples[k].x[0].abs() > s.filter_config().terminal_eps);
    assert!(traj.samples[k..].iter().all(|p| p.u == p.u_nom));
}

#[test]
fn exponential_baseline_keeps_filtering_after_the_horizon() {
    let s = Scenario {
        filter: FilterChoice::Esf { rho: 3.2 },
        ..forced_override_scenario(1000.0)
    };
    let traj = simulate(&s).unwrap();
    let last = traj.samples.last().unwrap();
    assert!(last.t > s.horizon && last.override_active);
    assert!(traj.samples.iter().all(|p| p.x[0] < 0.0));
}

#[test]
fn higher_order_chains_stay_safe_under_adversarial_input() {
    for x0 in [vec![-1.0, 0.5, -0.2], vec![-2.0, 1.0, 0.0, 0.3]] {
        let s = Scenario {
            x0,
            horizon: 2.0,
            gain_policy: GainPolicy::Auto {
                margin: 0.5,
                c_n: 1.0,
            },
            dt: 5e-4,
            t_end: 3.0,
            ..forced_override_scenario(1000.0)
        };
        let traj = simulate(&s).unwrap();
        let pre = traj.pre_terminal();
        for p in pre {
            assert!(p.h[0] > 0.0, "unsafe at t = {}", p.t);
            // once the state has collapsed to ~1e-12 the inner barriers are
            // differences of equal terms and sit at rounding level
            let scale = p.x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(
                p.h.iter().all(|h| *h > -1e-9 * scale),
                "n = {}, t = {}, h = {:?}",
                s.order(),
                p.t,
                p.h
            );
        }
        let metrics = compute_metrics(&traj, &s.clock().unwrap()).unwrap();
        assert!(metrics.min_y_margin < 0.0);
        assert!(metrics.max_abs_jerk_on_override.is_none());
        assert_eq!(metrics.override_intervals.first().map(|iv| iv.0), Some(0.0));
    }
}

#[test]
fn substep_cap_reports_stiff_runs_before_integrating() {
    let s = Scenario {
        max_substeps: 1,
        ..forced_override_scenario(1000.0)
    };
    match simulate(&s) {
        Err(Error::TooStiff {
            required, max: 1, ..
        }) => assert!(required > 1),
        other => panic!("expected TooStiff, got {other:?}"),
    }
}

#[test]
fn unsafe_or_ill_posed_scenarios_are_rejected() {
    let unsafe_start = Scenario {
        x0: vec![0.5, 0.0],
        ..Scenario::reference_double_integrator()
    };
    assert!(matches!(
        simulate(&unsafe_start),
        Err(Error::InitiallyUnsafe { .. })
    ));
    let short = Scenario {
        t_end: 3.0,
        ..Scenario::reference_double_integrator()
    };
    assert!(simulate(&short).is_err());
    let bad_gains = Scenario {
        gain_policy: GainPolicy::Manual(GainVector(vec![0.4, 0.6])),
        ..Scenario::reference_double_integrator()
    };
    assert!(matches!(simulate(&bad_gains), Err(Error::Precondition(_))));
}

#[test]
fn comparison_reproduces_the_peaking_trend() {
    let report = compare_filters(
        &Scenario::reference_double_integrator(),
        &[
            FilterChoice::Ptsf(FilterConfig::default()),
            FilterChoice::Esf { rho: 3.2 },
        ],
    )
    .unwrap();
    let ptsf = report.get("ptsf").unwrap();
    let esf = report
        .variants
        .iter()
        .find(|v| v.label.starts_with("esf"))
        .unwrap();
    assert!(ptsf.metrics.min_y_margin < 0.0 && esf.metrics.min_y_margin < 0.0);
    let (j_ptsf, j_esf) = (
        ptsf.metrics.max_abs_jerk_on_override.unwrap(),
        esf.metrics.max_abs_jerk_on_override.unwrap(),
    );
    assert!(j_esf > 2.0 * j_ptsf, "{j_esf} vs {j_ptsf}");
}
