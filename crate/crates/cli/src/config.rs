//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use idsa_core::diagnostics::StationaryMethod;
use idsa_core::original::experiments::log_spaced;
use idsa_core::original::{SigmaMode, SolverConfig, StreamingSource};
use idsa_core::reformed::Variant;
use idsa_core::ProblemSpec;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Oracle,
    SolveIdsa,
    SolveOld,
    SolveNew,
    Spurious,
    Instability,
    Convergence,
    Err0,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Oracle,
        Experiment::SolveIdsa,
        Experiment::SolveOld,
        Experiment::SolveNew,
        Experiment::Spurious,
        Experiment::Instability,
        Experiment::Convergence,
        Experiment::Err0,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Oracle => "oracle",
            Experiment::SolveIdsa => "solve-idsa",
            Experiment::SolveOld => "solve-old",
            Experiment::SolveNew => "solve-new",
            Experiment::Spurious => "spurious",
            Experiment::Instability => "instability",
            Experiment::Convergence => "convergence",
            Experiment::Err0 => "err0",
        }
    }
}

/// A configuration key: its name, default (`None` = required) and help line.
pub struct KeyInfo {
    pub name: &'static str,
    pub default: Option<&'static str>,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> KeyInfo {
    KeyInfo {
        name,
        default: Some(default),
        help,
    }
}

pub const KEYS: &[KeyInfo] = &[
    KeyInfo {
        name: "experiment",
        default: None,
        help: "oracle | solve-idsa | solve-old | solve-new | spurious | instability | convergence | err0",
    },
    key("output_dir", "out", "directory receiving the CSV files and the manifest"),
    key("B", "1", "equilibrium intensity"),
    key("R", "6", "sphere radius"),
    key("kappa", "1", "absorption opacity inside the sphere"),
    key("kappa_outside", "0", "absorption opacity outside the sphere"),
    key("kappa_s", "0", "scattering opacity"),
    key("r_max", "18", "outer radius of the grid"),
    key("n_cells", "2000", "number of grid cells"),
    key("dt", "0.1", "time step"),
    key("t_end", "1000", "final time of a march"),
    key("stationarity_tol", "1e-10", "a march stops once the relative change per step is below this"),
    key("sigma", "auto", "lagged | implicit | auto (implicit for spurious, lagged otherwise)"),
    key("max_iter", "10000", "Newton iterations per step for sigma = implicit"),
    key("streaming_source", "trapped", "trapped | fresh: source of the streaming solve with lagged sigma"),
    key("kappa_floor", "1e-30", "lower bound for face opacities in the diffusion operator"),
    key("snapshot_times", "", "times at which profiles are written (solve-*, instability)"),
    key("oracle_tol", "1e-10", "relative tolerance of the angular quadrature"),
    key("variant", "new", "new | old: reformed scheme of the convergence sweep"),
    key("stationary_method", "direct", "direct | marched: stationary states of the convergence sweep"),
    key("kappa_list", "1, 2, 5, 10, 20, 50, 100", "opacities of the convergence sweep"),
    key("eps_list", "", "envelope opacities of the spurious experiment; empty means eps_min..eps_max"),
    key("eps_min", "1e-4", "smallest log-spaced envelope opacity"),
    key("eps_max", "1e-1", "largest log-spaced envelope opacity"),
    key("eps_count", "16", "number of log-spaced envelope opacities"),
    key("exclude_largest", "5", "largest eps values left out of the takeover fit"),
    key("horizon", "1e6", "spurious runs without takeover are censored at this time"),
    key("trapped_fraction", "0.5", "takeover needs Jt/(Jt+Js) above this everywhere outside R"),
    key("takeover_tol", "1e-8", "takeover needs the relative change per step below this"),
    key("record_every", "1", "interval between instability records"),
    key("boundary_threshold", "0.9", "Jt above this times B marks the virtual boundary"),
    key("monotone_tol", "1e-9", "increase of Jt (in units of B) that flags non-monotonicity"),
    key("bound_slack", "1e-6", "sup(Jt+Js) above (1 + bound_slack) B fails the instability run"),
    key("kappa_r_min", "0.1", "smallest log-spaced kappa R of the err0 curve"),
    key("kappa_r_max", "1000", "largest log-spaced kappa R of the err0 curve"),
    key("kappa_r_count", "200", "number of points of the err0 curve"),
];

/// `--help` text: every key with its default.
pub fn keys_help() -> String {
    let width = KEYS.iter().map(|k| k.name.len()).max().unwrap_or(0);
    let mut s = String::from("Configuration keys (`key = value`, `#` starts a comment):\n");
    for k in KEYS {
        let default = match k.default {
            None => "(required)".to_string(),
            Some("") => "(empty)".to_string(),
            Some(d) => d.to_string(),
        };
        s.push_str(&format!("  {:width$}  {}  [default: {}]\n", k.name, k.help, default));
    }
    s
}

/// A resolved parameter as recorded in the manifest and the CSV headers.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Int(usize),
    Text(String),
    List(Vec<f64>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{x:?}"),
            Value::Int(n) => write!(f, "{n}"),
            Value::Text(s) => f.write_str(s),
            Value::List(xs) => {
                let parts: Vec<String> = xs.iter().map(|x| format!("{x:?}")).collect();
                f.write_str(&parts.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub output_dir: PathBuf,
    pub spec: ProblemSpec,
    pub r_max: f64,
    pub n_cells: usize,
    pub solver: SolverConfig,
    pub snapshot_times: Vec<f64>,
    pub oracle_tol: f64,
    pub variant: Variant,
    pub stationary_method: StationaryMethod,
    pub kappa_list: Vec<f64>,
    pub eps_list: Vec<f64>,
    pub exclude_largest: usize,
    pub horizon: f64,
    pub trapped_fraction: f64,
    pub takeover_tol: f64,
    pub record_every: f64,
    pub boundary_threshold: f64,
    pub monotone_tol: f64,
    pub bound_slack: f64,
    pub kappa_r_list: Vec<f64>,
    /// Every key with its resolved value, in key order.
    pub resolved: BTreeMap<&'static str, Value>,
}

fn config_error(key: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        key: Some(key.to_string()),
        message: message.into(),
    }
}

/// Splits configuration text into `(key, value, line)` triples.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String, usize)>, CliError> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Config {
                key: None,
                message: format!("line {}: expected `key = value`, got `{}`", no + 1, raw.trim()),
            });
        };
        out.push((k.trim().to_string(), v.trim().to_string(), no + 1));
    }
    Ok(out)
}

/// Parses a configuration file and applies `overrides` (`key=value`) on top.
pub fn parse_config_with(text: &str, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut raw: BTreeMap<String, String> = BTreeMap::new();
    for (k, v, line) in parse_pairs(text)? {
        if raw.insert(k.clone(), v).is_some() {
            return Err(config_error(&k, format!("line {line}: `{k}` is set twice")));
        }
    }
    for o in overrides {
        let Some((k, v)) = o.split_once('=') else {
            return Err(CliError::Config {
                key: None,
                message: format!("--set expects key=value, got `{o}`"),
            });
        };
        raw.insert(k.trim().to_string(), v.trim().to_string());
    }
    if let Some(k) = raw.keys().find(|k| !KEYS.iter().any(|info| info.name == k.as_str())) {
        return Err(config_error(k, format!("unknown key `{k}`")));
    }
    Resolver { raw, resolved: BTreeMap::new() }.finish()
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    parse_config_with(text, &[])
}

struct Resolver {
    raw: BTreeMap<String, String>,
    resolved: BTreeMap<&'static str, Value>,
}

impl Resolver {
    fn text(&self, name: &'static str) -> Result<String, CliError> {
        let info = KEYS.iter().find(|k| k.name == name).expect("registered key");
        match (self.raw.get(name), info.default) {
            (Some(v), _) => Ok(v.clone()),
            (None, Some(d)) => Ok(d.to_string()),
            (None, None) => Err(config_error(name, format!("missing required key `{name}`"))),
        }
    }

    fn float(&mut self, name: &'static str, ok: fn(f64) -> bool, what: &str) -> Result<f64, CliError> {
        let s = self.text(name)?;
        let x: f64 = s
            .parse()
            .map_err(|_| config_error(name, format!("`{name}` is not a number: `{s}`")))?;
        if !ok(x) {
            return Err(config_error(name, format!("`{name}` must be {what}, got {s}")));
        }
        self.resolved.insert(name, Value::Num(x));
        Ok(x)
    }

    fn positive(&mut self, name: &'static str) -> Result<f64, CliError> {
        self.float(name, |x| x.is_finite() && x > 0.0, "positive and finite")
    }

    fn non_negative(&mut self, name: &'static str) -> Result<f64, CliError> {
        self.float(name, |x| x.is_finite() && x >= 0.0, "non-negative and finite")
    }

    fn fraction(&mut self, name: &'static str) -> Result<f64, CliError> {
        self.float(name, |x| x > 0.0 && x < 1.0, "in (0, 1)")
    }

    /// Accepts `2000` as well as `2e3`.
    fn count(&mut self, name: &'static str, min: usize) -> Result<usize, CliError> {
        let s = self.text(name)?;
        let n = s
            .parse::<usize>()
            .ok()
            .or_else(|| {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.fract() == 0.0 && *x >= 0.0 && *x < 1e15)
                    .map(|x| x as usize)
            })
            .ok_or_else(|| config_error(name, format!("`{name}` is not a whole number: `{s}`")))?;
        if n < min {
            return Err(config_error(name, format!("`{name}` must be at least {min}, got {n}")));
        }
        self.resolved.insert(name, Value::Int(n));
        Ok(n)
    }

    fn choice(&mut self, name: &'static str, options: &[&str]) -> Result<String, CliError> {
        let s = self.text(name)?;
        if !options.contains(&s.as_str()) {
            return Err(config_error(
                name,
                format!("`{name}` must be one of {}, got `{s}`", options.join(", ")),
            ));
        }
        self.resolved.insert(name, Value::Text(s.clone()));
        Ok(s)
    }

    /// Comma-separated numbers, optionally in brackets.
    fn list(&mut self, name: &'static str, ok: fn(f64) -> bool, what: &str) -> Result<Vec<f64>, CliError> {
        let s = self.text(name)?;
        let inner = s.trim().trim_start_matches('[').trim_end_matches(']').trim();
        let mut xs = Vec::new();
        if !inner.is_empty() {
            for part in inner.split(',') {
                let p = part.trim();
                let x: f64 = p
                    .parse()
                    .map_err(|_| config_error(name, format!("`{name}`: `{p}` is not a number")))?;
                if !ok(x) {
                    return Err(config_error(name, format!("`{name}`: entries must be {what}, got {p}")));
                }
                xs.push(x);
            }
        }
        self.resolved.insert(name, Value::List(xs.clone()));
        Ok(xs)
    }

    fn finish(mut self) -> Result<RunConfig, CliError> {
        let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
        let exp_name = self.choice("experiment", &names)?;
        let experiment = *Experiment::ALL.iter().find(|e| e.name() == exp_name).expect("checked");

        let out = self.text("output_dir")?;
        if out.is_empty() {
            return Err(config_error("output_dir", "`output_dir` is empty"));
        }
        self.resolved.insert("output_dir", Value::Text(out.clone()));

        let b = self.non_negative("B")?;
        let radius = self.positive("R")?;
        let kappa = self.positive("kappa")?;
        let kappa_outside = self.non_negative("kappa_outside")?;
        let kappa_s = self.non_negative("kappa_s")?;
        let spec = ProblemSpec::new(b, radius, kappa, kappa_outside, kappa_s)
            .map_err(|e| CliError::Config { key: None, message: e.to_string() })?;
        let r_max = self.positive("r_max")?;
        let n_cells = self.count("n_cells", 1)?;

        let dt = self.positive("dt")?;
        let t_end = self.non_negative("t_end")?;
        let stationarity_tol = self.positive("stationarity_tol")?;
        let max_iter = self.count("max_iter", 1)?;
        let sigma_name = self.choice("sigma", &["auto", "lagged", "implicit"])?;
        let implicit = match sigma_name.as_str() {
            "auto" => experiment == Experiment::Spurious,
            s => s == "implicit",
        };
        let sigma = if implicit {
            SigmaMode::Implicit { max_iter }
        } else {
            SigmaMode::Lagged
        };
        self.resolved.insert("sigma", Value::Text(sigma.name().to_string()));
        let streaming_source = match self.choice("streaming_source", &["trapped", "fresh"])?.as_str() {
            "trapped" => StreamingSource::Trapped,
            _ => StreamingSource::Fresh,
        };
        let kappa_floor = self.positive("kappa_floor")?;
        let solver = SolverConfig {
            dt,
            t_end,
            stationarity_tol,
            sigma,
            streaming_source,
            kappa_floor,
        };

        let mut snapshot_times = self.list("snapshot_times", |x| x.is_finite() && x >= 0.0, "non-negative")?;
        snapshot_times.sort_by(f64::total_cmp);
        snapshot_times.dedup();
        self.resolved.insert("snapshot_times", Value::List(snapshot_times.clone()));
        let oracle_tol = self.positive("oracle_tol")?;
        let variant = match self.choice("variant", &["new", "old"])?.as_str() {
            "new" => Variant::New,
            _ => Variant::Old,
        };
        let stationary_method = match self.choice("stationary_method", &["direct", "marched"])?.as_str() {
            "direct" => StationaryMethod::Direct,
            _ => StationaryMethod::Marched,
        };
        let kappa_list = self.list("kappa_list", |x| x.is_finite() && x > 0.0, "positive")?;
        if experiment == Experiment::Convergence && kappa_list.is_empty() {
            return Err(config_error("kappa_list", "`kappa_list` is empty"));
        }

        let explicit_eps = self.list("eps_list", |x| x.is_finite() && x >= 0.0, "non-negative")?;
        let eps_min = self.positive("eps_min")?;
        let eps_max = self.positive("eps_max")?;
        let eps_count = self.count("eps_count", 2)?;
        let eps_list = if explicit_eps.is_empty() {
            if eps_max <= eps_min {
                return Err(config_error("eps_max", "`eps_max` must exceed `eps_min`"));
            }
            log_spaced(eps_max, eps_min, eps_count).expect("validated bounds")
        } else {
            explicit_eps
        };
        self.resolved.insert("eps_list", Value::List(eps_list.clone()));
        let exclude_largest = self.count("exclude_largest", 0)?;
        let horizon = self.positive("horizon")?;
        let trapped_fraction = self.fraction("trapped_fraction")?;
        let takeover_tol = self.positive("takeover_tol")?;

        let record_every = self.positive("record_every")?;
        let boundary_threshold = self.fraction("boundary_threshold")?;
        let monotone_tol = self.non_negative("monotone_tol")?;
        let bound_slack = self.non_negative("bound_slack")?;

        let kr_min = self.positive("kappa_r_min")?;
        let kr_max = self.positive("kappa_r_max")?;
        let kr_count = self.count("kappa_r_count", 2)?;
        if kr_max <= kr_min {
            return Err(config_error("kappa_r_max", "`kappa_r_max` must exceed `kappa_r_min`"));
        }
        let kappa_r_list = log_spaced(kr_min, kr_max, kr_count).expect("validated bounds");

        Ok(RunConfig {
            experiment,
            output_dir: PathBuf::from(out),
            spec,
            r_max,
            n_cells,
            solver,
            snapshot_times,
            oracle_tol,
            variant,
            stationary_method,
            kappa_list,
            eps_list,
            exclude_largest,
            horizon,
            trapped_fraction,
            takeover_tol,
            record_every,
            boundary_threshold,
            monotone_tol,
            bound_slack,
            kappa_r_list,
            resolved: self.resolved,
        })
    }
}
