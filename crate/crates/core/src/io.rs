//! Scenario documents, trajectory CSV and plot-data export.
//!
//! A scenario document is JSON with a strict schema: unknown keys are
//! rejected and every error names the offending key path.
//!
//! ```json
//! {
//!   "name": "double_integrator",
//!   "n": 2,
//!   "x0": [-4, 2],
//!   "T": 4,
//!   "gains": { "margin": 0.1, "c_n": 0.6 },
//!   "filter": "ptsf",
//!   "nominal": "tracking_sine"
//! }
//! ```
//!
//! `gains` is either an auto policy object or an explicit array. `filter` is
//! `"ptsf"`, `"none"` or an object `{"kind": "ptsf" | "esf" | "none", ...}`;
//! `nominal` is `"tracking_sine"` or an object whose `kind` is
//! `tracking_sine`, `constant` or `pd_setpoint`. A file may also hold several
//! scenarios as `{"scenarios": [...]}`.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer, MapAccess, SeqAccess, Visitor};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backstepping::GainVector;
use crate::error::{Error, Result};
use crate::filter::FilterConfig;
use crate::kernel::Saturation;
use crate::sim::{
    ComparisonReport, FilterChoice, GainPolicy, Metrics, NominalSpec, Scenario, Trajectory,
    DEFAULT_MAX_SUBSTEPS,
};

const DEFAULT_MARGIN: f64 = 0.1;
const DEFAULT_STEPS_PER_HORIZON: f64 = 4000.0;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    #[serde(default)]
    n: Option<usize>,
    x0: Vec<f64>,
    #[serde(rename = "T")]
    horizon: f64,
    #[serde(default)]
    t0: f64,
    #[serde(default)]
    gains: Option<GainsDoc>,
    #[serde(default)]
    filter: FilterDoc,
    nominal: NominalDoc,
    #[serde(default)]
    dt: Option<f64>,
    #[serde(default)]
    t_end: Option<f64>,
    #[serde(default)]
    max_substeps: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioListDoc {
    scenarios: Vec<ScenarioDoc>,
}

#[derive(Debug, Serialize)]
struct ScenarioListOut<'a> {
    scenarios: Vec<&'a ScenarioDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AutoGains {
    #[serde(default)]
    margin: Option<f64>,
    #[serde(default)]
    c_n: Option<f64>,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum GainsDoc {
    Manual(Vec<f64>),
    Auto(AutoGains),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum FilterSpec {
    Ptsf {
        #[serde(default)]
        ramp_m: Option<u32>,
        #[serde(default, rename = "ramp_T")]
        ramp_t: Option<f64>,
        #[serde(default)]
        terminal_eps: Option<f64>,
        #[serde(default)]
        mu_max: Option<f64>,
        #[serde(default)]
        saturation: Option<Saturation>,
    },
    Esf {
        rho: f64,
    },
    None {},
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum NominalSpecDoc {
    TrackingSine {
        #[serde(default)]
        k1: Option<f64>,
        #[serde(default)]
        k2: Option<f64>,
        #[serde(default)]
        amplitude: Option<f64>,
        #[serde(default)]
        offset: Option<f64>,
        #[serde(default)]
        omega: Option<f64>,
    },
    Constant {
        value: f64,
    },
    PdSetpoint {
        gains: Vec<f64>,
        #[serde(default)]
        setpoint: Option<Vec<f64>>,
    },
}

/// A filter given as a bare kind name or as a tagged object.
#[derive(Debug, Serialize)]
#[serde(transparent)]
struct FilterDoc(FilterSpec);

impl Default for FilterDoc {
    fn default() -> Self {
        FilterDoc(FilterSpec::Ptsf {
            ramp_m: None,
            ramp_t: None,
            terminal_eps: None,
            mu_max: None,
            saturation: None,
        })
    }
}

#[derive(Debug, Serialize)]
#[serde(transparent)]
struct NominalDoc(NominalSpecDoc);

struct TaggedOrName<T>(&'static str, PhantomData<T>);

impl<'de, T: Deserialize<'de>> Visitor<'de> for TaggedOrName<T> {
    type Value = T;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0)
    }

    fn visit_str<E: de::Error>(self, kind: &str) -> std::result::Result<T, E> {
        let mut object = serde_json::Map::new();
        object.insert("kind".into(), Value::String(kind.to_string()));
        T::deserialize(Value::Object(object)).map_err(E::custom)
    }

    fn visit_map<A: MapAccess<'de>>(self, map: A) -> std::result::Result<T, A::Error> {
        T::deserialize(de::value::MapAccessDeserializer::new(map))
    }
}

impl<'de> Deserialize<'de> for FilterDoc {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        deserializer
            .deserialize_any(TaggedOrName(
                "\"ptsf\", \"none\" or a filter object",
                PhantomData,
            ))
            .map(FilterDoc)
    }
}

impl<'de> Deserialize<'de> for NominalDoc {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        deserializer
            .deserialize_any(TaggedOrName(
                "\"tracking_sine\" or a nominal object",
                PhantomData,
            ))
            .map(NominalDoc)
    }
}

impl<'de> Deserialize<'de> for GainsDoc {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct GainsVisitor;

        impl<'de> Visitor<'de> for GainsVisitor {
            type Value = GainsDoc;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an array of gains or {\"margin\": .., \"c_n\": ..}")
            }

            fn visit_seq<A: SeqAccess<'de>>(
                self,
                seq: A,
            ) -> std::result::Result<GainsDoc, A::Error> {
                Vec::deserialize(de::value::SeqAccessDeserializer::new(seq)).map(GainsDoc::Manual)
            }

            fn visit_map<A: MapAccess<'de>>(
                self,
                map: A,
            ) -> std::result::Result<GainsDoc, A::Error> {
                AutoGains::deserialize(de::value::MapAccessDeserializer::new(map))
                    .map(GainsDoc::Auto)
            }
        }

        deserializer.deserialize_any(GainsVisitor)
    }
}

fn parse_error(path: impl Into<String>, message: impl fmt::Display) -> Error {
    Error::Parse {
        path: path.into(),
        message: message.to_string(),
    }
}

fn join(prefix: &str, key: &str) -> String {
    match (prefix.is_empty(), key.starts_with('[')) {
        (true, _) => key.to_string(),
        (false, true) => format!("{prefix}{key}"),
        (false, false) => format!("{prefix}.{key}"),
    }
}

fn deserialize_at<T: for<'de> Deserialize<'de>>(value: &Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|err| {
        let inner = err.path().to_string();
        let path = if inner == "." {
            prefix.to_string()
        } else {
            join(prefix, &inner)
        };
        parse_error(path, err.into_inner())
    })
}

fn positive(value: f64, path: String, what: &str) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(parse_error(
            path,
            format!("{what} must be positive and finite, got {value}"),
        ))
    }
}

impl ScenarioDoc {
    fn into_scenario(self, prefix: &str) -> Result<Scenario> {
        let at = |key: &str| join(prefix, key);
        let n = self.x0.len();
        if n == 0 {
            return Err(parse_error(at("x0"), "x0 must have at least one entry"));
        }
        if let Some(declared) = self.n {
            if declared != n {
                return Err(parse_error(
                    at("n"),
                    format!("n = {declared} but x0 has {n} entries"),
                ));
            }
        }
        if let Some(i) = self.x0.iter().position(|v| !v.is_finite()) {
            return Err(parse_error(
                at(&format!("x0[{i}]")),
                "initial state must be finite",
            ));
        }
        let horizon = positive(self.horizon, at("T"), "T")?;
        if !self.t0.is_finite() {
            return Err(parse_error(at("t0"), "t0 must be finite"));
        }

        let filter = match self.filter.0 {
            FilterSpec::Ptsf {
                ramp_m,
                ramp_t,
                terminal_eps,
                mu_max,
                saturation,
            } => {
                let defaults = FilterConfig::default();
                let config = FilterConfig {
                    ramp_m: ramp_m.unwrap_or(defaults.ramp_m),
                    ramp_t: ramp_t.unwrap_or(defaults.ramp_t),
                    terminal_eps: terminal_eps.unwrap_or(defaults.terminal_eps),
                    mu_max: mu_max.unwrap_or(defaults.mu_max),
                    saturation: saturation.unwrap_or(defaults.saturation),
                };
                if config.ramp_m < 1 {
                    return Err(parse_error(at("filter.ramp_m"), "ramp_m must be >= 1"));
                }
                positive(config.ramp_t, at("filter.ramp_T"), "ramp_T")?;
                positive(
                    config.terminal_eps,
                    at("filter.terminal_eps"),
                    "terminal_eps",
                )?;
                if !(config.mu_max >= 1.0) {
                    return Err(parse_error(
                        at("filter.mu_max"),
                        format!("mu_max must be >= 1, got {}", config.mu_max),
                    ));
                }
                FilterChoice::Ptsf(config)
            }
            FilterSpec::Esf { rho } => {
                if n != 2 {
                    return Err(parse_error(
                        at("filter"),
                        "the exponential baseline is defined for n = 2",
                    ));
                }
                FilterChoice::Esf {
                    rho: positive(rho, at("filter.rho"), "rho")?,
                }
            }
            FilterSpec::None {} => FilterChoice::None,
        };
        if !matches!(filter, FilterChoice::None) && !(self.x0[0] < 0.0) {
            return Err(parse_error(
                at("x0[0]"),
                Error::InitiallyUnsafe { x1: self.x0[0] },
            ));
        }

        let nominal = match self.nominal.0 {
            NominalSpecDoc::TrackingSine {
                k1,
                k2,
                amplitude,
                offset,
                omega,
            } => {
                if n != 2 {
                    return Err(parse_error(
                        at("nominal"),
                        "tracking_sine nominal is defined for n = 2",
                    ));
                }
                NominalSpec::TrackingSine {
                    k1: k1.unwrap_or(4.0),
                    k2: k2.unwrap_or(4.0),
                    amplitude: amplitude.unwrap_or(1.0),
                    offset: offset.unwrap_or(0.8),
                    omega: omega.unwrap_or(2.0 * std::f64::consts::PI / horizon),
                }
            }
            NominalSpecDoc::Constant { value } => NominalSpec::Constant { value },
            NominalSpecDoc::PdSetpoint { gains, setpoint } => {
                if gains.len() != n {
                    return Err(parse_error(
                        at("nominal.gains"),
                        format!("expected {n} gains, got {}", gains.len()),
                    ));
                }
                let setpoint = setpoint.unwrap_or_else(|| vec![0.0; n]);
                if setpoint.len() != n {
                    return Err(parse_error(
                        at("nominal.setpoint"),
                        format!("expected {n} entries, got {}", setpoint.len()),
                    ));
                }
                NominalSpec::PdSetpoint { gains, setpoint }
            }
        };

        let gain_policy = match self.gains {
            None => GainPolicy::Auto {
                margin: DEFAULT_MARGIN,
                c_n: DEFAULT_MARGIN,
            },
            Some(GainsDoc::Auto(AutoGains { margin, c_n })) => {
                let margin = positive(
                    margin.unwrap_or(DEFAULT_MARGIN),
                    at("gains.margin"),
                    "margin",
                )?;
                let c_n = c_n.unwrap_or(margin);
                if !(c_n >= 0.0 && c_n.is_finite()) {
                    return Err(parse_error(
                        at("gains.c_n"),
                        format!("c_n must be non-negative, got {c_n}"),
                    ));
                }
                GainPolicy::Auto { margin, c_n }
            }
            Some(GainsDoc::Manual(g)) => {
                if g.len() != n {
                    return Err(parse_error(
                        at("gains"),
                        format!("expected {n} gains, got {}", g.len()),
                    ));
                }
                GainPolicy::Manual(GainVector(g))
            }
        };

        let dt = positive(
            self.dt.unwrap_or(horizon / DEFAULT_STEPS_PER_HORIZON),
            at("dt"),
            "dt",
        )?;
        let ramp_t = match filter {
            FilterChoice::Ptsf(config) => config.ramp_t,
            _ => FilterConfig::default().ramp_t,
        };
        let t_end = self.t_end.unwrap_or(self.t0 + horizon + ramp_t + 1.0);
        if !(t_end >= self.t0 + horizon) {
            return Err(parse_error(
                at("t_end"),
                format!("t_end = {t_end} precedes t0 + T = {}", self.t0 + horizon),
            ));
        }
        let max_substeps = self.max_substeps.unwrap_or(DEFAULT_MAX_SUBSTEPS);
        if max_substeps == 0 {
            return Err(parse_error(at("max_substeps"), "max_substeps must be >= 1"));
        }

        let scenario = Scenario {
            name: self.name,
            description: self.description,
            x0: self.x0,
            t0: self.t0,
            horizon,
            gain_policy,
            filter,
            nominal,
            dt,
            t_end,
            max_substeps,
        };
        let root = if prefix.is_empty() {
            "scenario"
        } else {
            prefix
        };
        scenario.validate().map_err(|e| parse_error(root, e))?;
        if matches!(scenario.filter, FilterChoice::Ptsf(_)) {
            scenario
                .resolve_gains()
                .map_err(|e| parse_error(at("gains"), e))?;
        }
        Ok(scenario)
    }

    fn from_scenario(s: &Scenario) -> Result<Self> {
        let gains = match &s.gain_policy {
            GainPolicy::Auto { margin, c_n } => GainsDoc::Auto(AutoGains {
                margin: Some(*margin),
                c_n: Some(*c_n),
            }),
            GainPolicy::Manual(g) => GainsDoc::Manual(g.0.clone()),
        };
        let filter = match s.filter {
            FilterChoice::Ptsf(c) => FilterSpec::Ptsf {
                ramp_m: Some(c.ramp_m),
                ramp_t: Some(c.ramp_t),
                terminal_eps: Some(c.terminal_eps),
                mu_max: Some(c.mu_max),
                saturation: Some(c.saturation),
            },
            FilterChoice::Esf { rho } => FilterSpec::Esf { rho },
            FilterChoice::None => FilterSpec::None {},
        };
        let nominal = match &s.nominal {
            NominalSpec::TrackingSine {
                k1,
                k2,
                amplitude,
                offset,
                omega,
            } => NominalSpecDoc::TrackingSine {
                k1: Some(*k1),
                k2: Some(*k2),
                amplitude: Some(*amplitude),
                offset: Some(*offset),
                omega: Some(*omega),
            },
            NominalSpec::Constant { value } => NominalSpecDoc::Constant { value: *value },
            NominalSpec::PdSetpoint { gains, setpoint } => NominalSpecDoc::PdSetpoint {
                gains: gains.clone(),
                setpoint: Some(setpoint.clone()),
            },
            NominalSpec::External(_) => {
                return Err(Error::Precondition(
                    "an external nominal law cannot be written to a document".into(),
                ))
            }
        };
        Ok(Self {
            name: s.name.clone(),
            description: s.description.clone(),
            n: Some(s.order()),
            x0: s.x0.clone(),
            horizon: s.horizon,
            t0: s.t0,
            gains: Some(gains),
            filter: FilterDoc(filter),
            nominal: NominalDoc(nominal),
            dt: Some(s.dt),
            t_end: Some(s.t_end),
            max_substeps: Some(s.max_substeps),
        })
    }
}

fn parse_value(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| parse_error("", format!("syntax error: {e}")))
}

fn is_list(value: &Value) -> bool {
    value
        .as_object()
        .is_some_and(|o| o.contains_key("scenarios"))
}

/// Parses a single-scenario document, applying defaults and validating it.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let value = parse_value(text)?;
    if is_list(&value) {
        return Err(parse_error(
            "scenarios",
            "expected a single scenario; this document holds a list",
        ));
    }
    deserialize_at::<ScenarioDoc>(&value, "")?.into_scenario("")
}

/// Parses either a single scenario or a `{"scenarios": [...]}` list.
pub fn parse_scenarios(text: &str) -> Result<Vec<Scenario>> {
    let value = parse_value(text)?;
    if !is_list(&value) {
        return Ok(vec![
            deserialize_at::<ScenarioDoc>(&value, "")?.into_scenario("")?
        ]);
    }
    let list: ScenarioListDoc = deserialize_at(&value, "")?;
    if list.scenarios.is_empty() {
        return Err(parse_error("scenarios", "the scenario list is empty"));
    }
    list.scenarios
        .into_iter()
        .enumerate()
        .map(|(i, doc)| doc.into_scenario(&format!("scenarios[{i}]")))
        .collect()
}

pub fn read_scenarios(path: &Path) -> Result<Vec<Scenario>> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_scenarios(&text)
}

/// Serializes a scenario with every default written out.
pub fn scenario_to_json(scenario: &Scenario) -> Result<String> {
    let doc = ScenarioDoc::from_scenario(scenario)?;
    Ok(serde_json::to_string_pretty(&doc).expect("scenario documents serialize"))
}

pub fn scenarios_to_json(scenarios: &[Scenario]) -> Result<String> {
    let docs = scenarios
        .iter()
        .map(ScenarioDoc::from_scenario)
        .collect::<Result<Vec<_>>>()?;
    let out = ScenarioListOut {
        scenarios: docs.iter().collect(),
    };
    Ok(serde_json::to_string_pretty(&out).expect("scenario documents serialize"))
}

fn io_error(path: &Path, err: impl fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: err.to_string(),
    }
}

/// Shortest decimal form that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    let magnitude = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-5..1e16).contains(&magnitude) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn csv_header(n: usize) -> Vec<String> {
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend(["u", "u_nom", "safe_bound"].map(String::from));
    header.extend((1..=n).map(|i| format!("h{i}")));
    header.extend(["override", "mu_clipped"].map(String::from));
    header
}

/// Writes one header row and one row per sample.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, writer: W) -> Result<()> {
    if traj.is_empty() {
        return Err(Error::Precondition(
            "cannot write an empty trajectory".into(),
        ));
    }
    let fail = |e: csv::Error| Error::Io {
        path: "trajectory csv".into(),
        message: e.to_string(),
    };
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(csv_header(traj.n)).map_err(fail)?;
    let flag = |b: bool| if b { "1".to_string() } else { "0".to_string() };
    for s in &traj.samples {
        let mut row = vec![format_float(s.t)];
        row.extend(s.x.iter().map(|v| format_float(*v)));
        row.extend([s.u, s.u_nom, s.safe_bound].map(format_float));
        row.extend(s.h.iter().map(|v| format_float(*v)));
        row.push(flag(s.override_active));
        row.push(flag(s.mu_clipped));
        out.write_record(&row).map_err(fail)?;
    }
    out.flush().map_err(|e| Error::Io {
        path: "trajectory csv".into(),
        message: e.to_string(),
    })
}

pub fn write_trajectory_csv_file(traj: &Trajectory, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
    write_trajectory_csv(traj, std::io::BufWriter::new(file)).map_err(|e| match e {
        Error::Io { message, .. } => io_error(path, message),
        other => other,
    })
}

#[derive(Serialize)]
struct RunSummary<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<&'a str>,
    filter: String,
    gains: &'a [f64],
    samples: usize,
    metrics: &'a Metrics,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("summaries serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

/// Writes `trajectory.csv` and `metrics.json` into `dir`, creating it if needed.
pub fn write_run(
    scenario: &Scenario,
    traj: &Trajectory,
    metrics: &Metrics,
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    write_trajectory_csv_file(traj, &dir.join("trajectory.csv"))?;
    let summary = RunSummary {
        name: scenario.name.as_deref(),
        filter: traj.filter.label(),
        gains: traj.gains.as_slice(),
        samples: traj.len(),
        metrics,
    };
    write_json(&dir.join("metrics.json"), &summary)
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    label: &'a str,
    file: String,
    n: usize,
    gains: &'a [f64],
    metrics: &'a Metrics,
    /// The variant's scenario document, absent for external nominal laws.
    scenario: Option<Value>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    variants: Vec<ManifestEntry<'a>>,
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes one CSV per variant and a `manifest.json` with labels, files and
/// metric summaries; returns the paths written.
pub fn emit_plot_data(report: &ComparisonReport, dir: &Path) -> Result<Vec<PathBuf>> {
    if report.variants.is_empty() {
        return Err(Error::Precondition(
            "comparison report has no variants".into(),
        ));
    }
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut used = HashSet::new();
    let mut written = Vec::with_capacity(report.variants.len() + 1);
    let mut entries = Vec::with_capacity(report.variants.len());
    for (i, v) in report.variants.iter().enumerate() {
        let mut stem = file_stem(&v.label);
        if !used.insert(stem.clone()) {
            stem = format!("{stem}_{i}");
            used.insert(stem.clone());
        }
        let file = format!("{stem}.csv");
        let path = dir.join(&file);
        write_trajectory_csv_file(&v.trajectory, &path)?;
        written.push(path);
        let scenario = ScenarioDoc::from_scenario(&v.scenario)
            .ok()
            .map(|doc| serde_json::to_value(doc).expect("scenario documents serialize"));
        entries.push(ManifestEntry {
            label: &v.label,
            file,
            n: v.trajectory.n,
            gains: v.trajectory.gains.as_slice(),
            metrics: &v.metrics,
            scenario,
        });
    }
    let manifest = dir.join("manifest.json");
    write_json(&manifest, &Manifest { variants: entries })?;
    written.push(manifest);
    Ok(written)
}
