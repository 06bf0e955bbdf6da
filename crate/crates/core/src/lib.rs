//! Prescribed-time safety filters for chains of integrators.
//!
//! The filter keeps `y = x_1` negative on a user-chosen horizon `[t0, t0 + T)`
//! by clamping a nominal input to the backstepping bound `alpha_n`, whose
//! gains grow like `1 / (1 - (t - t0) / T)^2`. After the horizon the nominal
//! input is ramped back in.
//!
//! - [`kernel`]: blow-up gains and their derivatives.
//! - [`jet`], [`backstepping`]: the barrier stack and initial gain selection.
//! - [`filter`]: the prescribed-time filter, hand-off ramp, and the
//!   exponential baseline.
//! - [`sim`]: fixed-grid RK4 simulation, override detection and metrics.
//! - [`io`]: scenario files, trajectory CSV and plot data.
//! - [`verify`]: seeded property checks behind `ptcbf verify`.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backstepping;
pub mod error;
pub mod filter;
pub mod io;
pub mod jet;
pub mod kernel;
pub mod sim;
pub mod verify;

pub use backstepping::{
    alpha_n_row, applied_mu2, barrier_stack, jet_lift_state, jet_of_mu, jet_of_saturated_mu,
    minimal_gain, minimal_gains, select_gains, smooth_saturate, validate_gains, BarrierStack,
    GainVector,
};
pub use error::{Error, Result};
pub use filter::{
    esf_closed_form, esf_control, esf_min_rho, min_norm_override, ptsf_control, ramp_g,
    FilterConfig, FilterDecision,
};
pub use io::{
    emit_plot_data, format_float, parse_scenario, parse_scenarios, read_scenarios,
    scenario_to_json, scenarios_to_json, write_run, write_trajectory_csv,
    write_trajectory_csv_file,
};
pub use jet::DerivativeJet;
pub use kernel::{
    check_mu_commutativity, mu, mu_clipped, mu_derivative, nu, rising_factorial, xi, HorizonClock,
    Saturation,
};
pub use sim::{
    chain_rhs, compare_filters, compare_scenarios, compute_metrics, detect_overrides,
    jerk_on_override, simulate, step_rk4, ComparisonReport, ExternalNominal, FilterChoice,
    GainPolicy, Metrics, NominalFn, NominalSpec, Sample, Scenario, Trajectory, VariantResult,
    DEFAULT_MAX_SUBSTEPS,
};
