use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ptcbf_core::verify::{run_verification_suite, Suite};
use ptcbf_core::*;

#[derive(Parser)]
#[command(
    name = "ptcbf",
    version,
    about = "Prescribed-time safety filters for chains of integrators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every scenario in a file and write trajectory.csv and metrics.json.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a scenario under several filters and write plot data.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated list: ptsf, esf:<rho>, none.
        #[arg(long, value_delimiter = ',', default_value = "ptsf,esf:0.6,esf:3.2")]
        filters: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the lower gain bounds and the selected gains.
    Gains {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run the seeded self-checks.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Kernel,
    Backstepping,
    Oracles,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Kernel => Suite::Kernel,
            SuiteArg::Backstepping => Suite::Backstepping,
            SuiteArg::Oracles => Suite::Oracles,
            SuiteArg::All => Suite::All,
        }
    }
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_VERIFICATION: u8 = 3;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parse { .. }
        | Error::Precondition(_)
        | Error::InitiallyUnsafe { .. }
        | Error::DegenerateBarrier { .. }
        | Error::Domain(_)
        | Error::Depth { .. }
        | Error::UnsupportedOrder { .. } => EXIT_VALIDATION,
        Error::Numeric { .. }
        | Error::TooStiff { .. }
        | Error::MissingTerminalCapture { .. }
        | Error::Io { .. } => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate { scenario, out } => simulate_cmd(&scenario, &out),
        Command::Compare {
            scenario,
            filters,
            out,
        } => compare_cmd(&scenario, &filters, &out),
        Command::Gains { scenario } => gains_cmd(&scenario),
        Command::Verify { suite } => {
            let report = run_verification_suite(suite.into());
            println!("{report}");
            return if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFICATION)
            };
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn display_name(s: &Scenario, index: usize) -> String {
    s.name
        .clone()
        .unwrap_or_else(|| format!("scenario_{index}"))
}

/// A single scenario writes straight into `out`; a list gets one
/// subdirectory per scenario, named after it.
fn output_dirs(scenarios: &[Scenario], out: &Path) -> Result<Vec<PathBuf>> {
    if scenarios.len() == 1 {
        return Ok(vec![out.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = Vec::with_capacity(scenarios.len());
    for (i, s) in scenarios.iter().enumerate() {
        let name = display_name(s, i);
        if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
            return Err(Error::Parse {
                path: format!("scenarios[{i}].name"),
                message: format!("{name:?} cannot be used as a directory name"),
            });
        }
        let dir = out.join(&name);
        if dirs.contains(&dir) {
            return Err(Error::Parse {
                path: format!("scenarios[{i}].name"),
                message: format!("duplicate scenario name {name:?}"),
            });
        }
        dirs.push(dir);
    }
    Ok(dirs)
}

fn format_intervals(intervals: &[(f64, f64)]) -> String {
    if intervals.is_empty() {
        return "none".into();
    }
    intervals
        .iter()
        .map(|(a, b)| format!("[{a:.3}, {b:.3})"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn print_metrics(label: &str, gains: &GainVector, m: &Metrics) {
    println!("{label}");
    println!("  gains            {:?}", gains.as_slice());
    println!("  max x1 on [t0,T) {:.6e}", m.min_y_margin);
    println!("  max |u|          {:.6}", m.max_abs_u);
    if let Some(x1) = m.x1_at_t {
        println!("  x1(t0 + T)       {x1:.6}");
    }
    if let Some(jerk) = m.max_abs_jerk_on_override {
        println!("  max |u'| (ovr)   {jerk:.6}");
    }
    println!(
        "  overrides        {}",
        format_intervals(&m.override_intervals)
    );
}

fn simulate_cmd(path: &Path, out: &Path) -> Result<()> {
    let scenarios = read_scenarios(path)?;
    let dirs = output_dirs(&scenarios, out)?;
    for (i, (s, dir)) in scenarios.iter().zip(&dirs).enumerate() {
        let traj = simulate(s)?;
        let metrics = compute_metrics(&traj, &s.clock()?)?;
        write_run(s, &traj, &metrics, dir)?;
        print_metrics(
            &format!("{} [{}]", display_name(s, i), traj.filter.label()),
            &traj.gains,
            &metrics,
        );
        println!("  wrote            {}", dir.display());
    }
    Ok(())
}

fn parse_filter(spec: &str, base: &Scenario) -> Result<FilterChoice> {
    let bad = |message: String| Error::Parse {
        path: "--filters".into(),
        message,
    };
    match spec.trim().split_once(':') {
        None if spec.trim() == "ptsf" => Ok(match base.filter {
            FilterChoice::Ptsf(config) => FilterChoice::Ptsf(config),
            _ => FilterChoice::Ptsf(FilterConfig::default()),
        }),
        None if spec.trim() == "none" => Ok(FilterChoice::None),
        Some(("esf", rho)) => {
            let rho: f64 = rho
                .parse()
                .map_err(|_| bad(format!("invalid esf rate {rho:?}")))?;
            if !rho.is_finite() || rho <= 0.0 {
                return Err(bad(format!("esf rate must be positive, got {rho}")));
            }
            Ok(FilterChoice::Esf { rho })
        }
        _ => Err(bad(format!(
            "unknown filter {spec:?}; expected ptsf, esf:<rho> or none"
        ))),
    }
}

fn compare_cmd(path: &Path, filters: &[String], out: &Path) -> Result<()> {
    let scenarios = read_scenarios(path)?;
    let dirs = output_dirs(&scenarios, out)?;
    for (s, dir) in scenarios.iter().zip(&dirs) {
        let choices = filters
            .iter()
            .map(|f| parse_filter(f, s))
            .collect::<Result<Vec<_>>>()?;
        let report = compare_filters(s, &choices)?;
        emit_plot_data(&report, dir)?;
        for v in &report.variants {
            print_metrics(&v.label, &v.trajectory.gains, &v.metrics);
        }
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn gains_cmd(path: &Path) -> Result<()> {
    let scenarios = read_scenarios(path)?;
    for (i, s) in scenarios.iter().enumerate() {
        let selected = s.resolve_gains()?;
        let (bounds, _) = minimal_gains(&s.x0, &s.clock()?, |stage, _| selected.0[stage - 1])?;
        println!("{}", display_name(s, i));
        println!("  stage  lower_bound            gain");
        for (stage, c) in selected.as_slice().iter().enumerate() {
            let bound = bounds
                .get(stage)
                .map_or("-".to_string(), |b| format!("{b:.6e}"));
            println!("  {:<5}  {bound:<21}  {c:.6e}", stage + 1);
        }
    }
    Ok(())
}
