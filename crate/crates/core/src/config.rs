//! The run configuration: a flat `key = value` file with `[section]` headers.
//!
//! ```text
//! [model]
//! name = ou
//!
//! [spectrum]
//! lambda = k^2
//! M = 8
//! eps = 0.25
//!
//! [scheme]
//! N = 20000
//! seed = 42
//!
//! [run]
//! T = 1
//! ```
//!
//! Parsing never stops at the first problem: every unknown key, type
//! mismatch, duplicate and missing required key is reported with its line.

use std::collections::BTreeMap;
use std::fmt;

use crate::dynamics::{InitialLaw, SchemeConfig};
use crate::girsanov::{CouplingConfig, TestFunction};
use crate::model::{build_model, ModelParams, ModelSpec, MODEL_NAMES};
use crate::spectral::OperatorSpectrum;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

const KEYS: &[(&str, &[&str])] = &[
    ("model", &["name", "sigma", "a", "theta", "radius", "modulus_k", "modulus_delta", "modulus_c"]),
    ("spectrum", &["lambda", "M", "eps", "tail"]),
    ("scheme", &["n", "L", "N", "N_w", "seed", "exact_convolution"]),
    (
        "run",
        &[
            "T", "p", "lambda_weight", "tol", "max_iter", "f", "y", "mu0", "nu0", "mode", "samples",
            "histogram_cells", "out",
        ],
    ),
];

/// How the eigenvalues are given.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumRule {
    /// `λ_k = c k^p` for `k = 1..=M`.
    Power { c: f64, p: f64, modes: usize },
    /// Explicit eigenvalues, optionally with a declared tail exponent.
    List { eigenvalues: Vec<f64>, tail: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftModes {
    Log,
    Power,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: String,
    pub params: ModelParams,
    pub spectrum: SpectrumRule,
    pub eps: f64,
    pub scheme: SchemeConfig,
    pub horizon: f64,
    pub p: Vec<f64>,
    pub lambda_weight: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub test_functions: Vec<TestFunction>,
    pub y: Vec<f64>,
    pub mu0: InitialLaw,
    pub nu0: InitialLaw,
    pub shift_modes: ShiftModes,
    pub samples: usize,
    pub histogram_cells: usize,
    pub out: Option<String>,
    /// `(section.key, value)` as written, in file order.
    pub echo: Vec<(String, String)>,
}

impl RunConfig {
    pub fn build_spectrum(&self) -> Result<OperatorSpectrum> {
        match &self.spectrum {
            SpectrumRule::Power { c, p, modes } => OperatorSpectrum::power_law(*c, *p, *modes, self.eps),
            SpectrumRule::List { eigenvalues, tail } => {
                OperatorSpectrum::from_eigenvalues(eigenvalues.clone(), self.eps, *tail)
            }
        }
    }

    pub fn build_model(&self) -> Result<ModelSpec> {
        build_model(&self.model, &self.params, self.build_spectrum()?, self.horizon)
    }

    pub fn coupling(&self) -> CouplingConfig {
        CouplingConfig {
            scheme: self.scheme.clone(),
            lambda_weight: self.lambda_weight,
            tol: self.tol,
            max_iter: self.max_iter,
            histogram_cells: self.histogram_cells,
        }
    }
}

struct Entry {
    value: String,
    line: usize,
}

struct Parser {
    entries: BTreeMap<(String, String), Entry>,
    errors: Vec<ConfigError>,
}

impl Parser {
    fn err(&mut self, line: Option<usize>, message: impl Into<String>) {
        self.errors.push(ConfigError { line, message: message.into() });
    }

    fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        self.entries.get(&(section.to_string(), key.to_string())).map(|e| e.line)
    }

    /// Typed value of `[section] key`, or `default` when absent. Pushes an
    /// error and returns `None` on a parse failure or a missing required key.
    fn get<T>(
        &mut self,
        section: &str,
        key: &str,
        default: Option<T>,
        parse: impl Fn(&str) -> std::result::Result<T, String>,
    ) -> Option<T> {
        match self.entries.get(&(section.to_string(), key.to_string())) {
            Some(e) => match parse(&e.value) {
                Ok(v) => Some(v),
                Err(msg) => {
                    let line = e.line;
                    self.err(Some(line), format!("[{section}] {key}: {msg}"));
                    None
                }
            },
            None => {
                if default.is_none() {
                    self.err(None, format!("missing required key [{section}] {key}"));
                }
                default
            }
        }
    }
}

fn real(s: &str) -> std::result::Result<f64, String> {
    s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| format!("expected a number, got '{s}'"))
}

fn count(s: &str) -> std::result::Result<usize, String> {
    s.parse::<usize>().map_err(|_| format!("expected a nonnegative integer, got '{s}'"))
}

fn unsigned(s: &str) -> std::result::Result<u64, String> {
    s.parse::<u64>().map_err(|_| format!("expected an unsigned 64-bit integer, got '{s}'"))
}

fn boolean(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got '{s}'")),
    }
}

fn reals(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',').map(|t| real(t.trim())).collect()
}

/// `k^2`, `0.5*k^2`, `k`, or a comma-separated list.
fn lambda_rule(s: &str) -> std::result::Result<(Option<(f64, f64)>, Vec<f64>), String> {
    let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if !compact.contains('k') {
        return reals(&compact).map(|v| (None, v));
    }
    let (c, rest) = match compact.split_once('*') {
        Some((c, rest)) => (real(c)?, rest),
        None => (1.0, compact.as_str()),
    };
    let p = match rest.strip_prefix('k') {
        Some("") => 1.0,
        Some(pow) => real(pow.strip_prefix('^').ok_or_else(|| format!("cannot read eigenvalue rule '{s}'"))?)?,
        None => return Err(format!("cannot read eigenvalue rule '{s}'")),
    };
    Ok((Some((c, p)), Vec::new()))
}

/// `point 0.2,0`, `gaussian mean=0,0 std=1`, `twopoint a=1 b=-1 w=0.5`.
pub fn parse_law(s: &str) -> std::result::Result<InitialLaw, String> {
    let mut words = s.split_whitespace();
    let kind = words.next().ok_or("empty law")?;
    let rest: Vec<&str> = words.collect();
    let named = |name: &str| -> std::result::Result<Option<Vec<f64>>, String> {
        rest.iter()
            .find_map(|w| w.strip_prefix(name).and_then(|v| v.strip_prefix('=')))
            .map(reals)
            .transpose()
    };
    let law = match kind {
        "point" => InitialLaw::Point(reals(&rest.join("")).map_err(|e| format!("point: {e}"))?),
        "gaussian" => InitialLaw::Gaussian {
            mean: named("mean")?.unwrap_or_else(|| vec![0.0]),
            std: named("std")?.unwrap_or_else(|| vec![1.0]),
        },
        "twopoint" => {
            let w = named("w")?.unwrap_or_else(|| vec![0.5]);
            InitialLaw::TwoPoint {
                a: named("a")?.ok_or("twopoint needs a=...")?,
                b: named("b")?.ok_or("twopoint needs b=...")?,
                weight: *w.first().ok_or("twopoint weight")?,
            }
        }
        other => return Err(format!("unknown law '{other}' (point, gaussian, twopoint)")),
    };
    Ok(law)
}

pub fn parse_config(text: &str) -> std::result::Result<RunConfig, Vec<ConfigError>> {
    let mut p = Parser { entries: BTreeMap::new(), errors: Vec::new() };
    let mut echo = Vec::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let name = name.trim();
            if KEYS.iter().any(|(s, _)| *s == name) {
                section = Some(name.to_string());
            } else {
                p.err(Some(line), format!("unknown section [{name}]"));
                section = None;
            }
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            p.err(Some(line), format!("expected 'key = value', got '{content}'"));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(sec) = section.clone() else {
            p.err(Some(line), format!("key '{key}' outside a known section"));
            continue;
        };
        let known = KEYS.iter().find(|(s, _)| *s == sec).is_some_and(|(_, keys)| keys.contains(&key));
        if !known {
            p.err(Some(line), format!("unknown key '{key}' in [{sec}]"));
            continue;
        }
        let slot = (sec.clone(), key.to_string());
        if let Some(first) = p.entries.get(&slot) {
            let first = first.line;
            p.err(Some(line), format!("duplicate key [{sec}] {key} (lines {first} and {line})"));
            continue;
        }
        echo.push((format!("{sec}.{key}"), value.to_string()));
        p.entries.insert(slot, Entry { value: value.to_string(), line });
    }

    let d = ModelParams::default();
    let s = SchemeConfig::default();
    let model = p.get("model", "name", None, |v| Ok(v.to_string()));
    let params = ModelParams {
        sigma: p.get("model", "sigma", Some(d.sigma), real).unwrap_or(d.sigma),
        a: p.get("model", "a", Some(d.a), real).unwrap_or(d.a),
        theta: p.get("model", "theta", Some(d.theta), real).unwrap_or(d.theta),
        radius: p.get("model", "radius", Some(d.radius), real).unwrap_or(d.radius),
        modulus_k: p.get("model", "modulus_k", Some(d.modulus_k), real).unwrap_or(d.modulus_k),
        modulus_delta: p.get("model", "modulus_delta", Some(d.modulus_delta), real).unwrap_or(d.modulus_delta),
        modulus_c: p.get("model", "modulus_c", Some(d.modulus_c), real).unwrap_or(d.modulus_c),
    };
    let rule = p.get("spectrum", "lambda", None, lambda_rule);
    let modes = p.get("spectrum", "M", rule.as_ref().and_then(|(r, v)| r.is_none().then_some(v.len())), count);
    let eps = p.get("spectrum", "eps", None, real);
    let tail = p.get("spectrum", "tail", Some(None), |v| real(v).map(Some)).flatten();
    let scheme = SchemeConfig {
        steps: p.get("scheme", "n", Some(s.steps), count).unwrap_or(s.steps),
        output_points: p.get("scheme", "L", Some(s.output_points), count).unwrap_or(s.output_points),
        particles: p.get("scheme", "N", Some(s.particles), count).unwrap_or(s.particles),
        w2_particles: p.get("scheme", "N_w", Some(s.w2_particles), count).unwrap_or(s.w2_particles),
        seed: p.get("scheme", "seed", Some(s.seed), unsigned).unwrap_or(s.seed),
        replicate: 0,
        exact_convolution: p
            .get("scheme", "exact_convolution", Some(s.exact_convolution), boolean)
            .unwrap_or(s.exact_convolution),
    };
    let horizon = p.get("run", "T", None, real);
    let pows = p.get("run", "p", Some(vec![2.0, 4.0]), reals).unwrap_or_default();
    let lambda_weight = p.get("run", "lambda_weight", Some(1.0), real).unwrap_or(1.0);
    let tol = p.get("run", "tol", Some(1e-6), real).unwrap_or(1e-6);
    let max_iter = p.get("run", "max_iter", Some(20), count).unwrap_or(20);
    let test_functions = p
        .get("run", "f", Some(TestFunction::all()), |v| {
            v.split(',').map(|id| TestFunction::from_id(id.trim()).map_err(|e| e.to_string())).collect()
        })
        .unwrap_or_default();
    let y = p.get("run", "y", Some(vec![0.3]), reals).unwrap_or_default();
    let mu0 = p.get("run", "mu0", Some(InitialLaw::point(vec![0.0])), parse_law);
    let nu0 = p.get("run", "nu0", Some(InitialLaw::point(vec![0.2])), parse_law);
    let shift_modes = p
        .get("run", "mode", Some(ShiftModes::Both), |v| match v {
            "log" => Ok(ShiftModes::Log),
            "power" => Ok(ShiftModes::Power),
            "both" => Ok(ShiftModes::Both),
            other => Err(format!("expected log, power or both, got '{other}'")),
        })
        .unwrap_or(ShiftModes::Both);
    let samples = p.get("run", "samples", Some(1000), count).unwrap_or(1000);
    let histogram_cells = p.get("run", "histogram_cells", Some(8), count).unwrap_or(8);
    let out = p.get("run", "out", Some(None), |v| Ok(Some(v.to_string()))).flatten();

    // semantic checks; each names the offending line
    let line = |p: &Parser, s: &str, k: &str| p.line_of(s, k);
    if let Some(name) = &model {
        if !MODEL_NAMES.contains(&name.as_str()) {
            let l = line(&p, "model", "name");
            p.err(l, format!("unknown model '{name}' (known: {})", MODEL_NAMES.join(", ")));
        }
    }
    if let Some(e) = eps {
        if !(e > 0.0 && e < 1.0) {
            let l = line(&p, "spectrum", "eps");
            p.err(l, "trace_exponent out of (0,1)");
        }
    }
    if let Some(t) = horizon {
        if !(t > 0.0) {
            let l = line(&p, "run", "T");
            p.err(l, format!("horizon T = {t} must be positive"));
        }
    }
    if let Err(e) = scheme.validate() {
        let l = line(&p, "scheme", "N_w").or(line(&p, "scheme", "L"));
        p.err(l, e.to_string());
    }
    if let Some(bad) = pows.iter().find(|v| !(**v > 1.0)) {
        let l = line(&p, "run", "p");
        p.err(l, format!("Harnack power p = {bad} must exceed 1"));
    }
    if !(lambda_weight > 0.0) {
        let l = line(&p, "run", "lambda_weight");
        p.err(l, "lambda_weight must be positive");
    }
    for (key, v, min) in [("max_iter", max_iter, 1), ("samples", samples, 1), ("histogram_cells", histogram_cells, 1)] {
        if v < min {
            let l = line(&p, "run", key);
            p.err(l, format!("{key} must be at least {min}"));
        }
    }

    let spectrum = match (rule, modes) {
        (Some((Some((c, pw)), _)), Some(m)) => Some(SpectrumRule::Power { c, p: pw, modes: m }),
        (Some((None, list)), m) => {
            if m.is_some_and(|m| m != list.len()) {
                let l = line(&p, "spectrum", "M");
                p.err(l, format!("M = {} but {} eigenvalues listed", m.unwrap_or(0), list.len()));
            }
            Some(SpectrumRule::List { eigenvalues: list, tail })
        }
        _ => None,
    };
    if let (Some(spec), Some(e)) = (&spectrum, eps) {
        if e > 0.0 && e < 1.0 {
            let built = match spec {
                SpectrumRule::Power { c, p: pw, modes } => OperatorSpectrum::power_law(*c, *pw, *modes, e),
                SpectrumRule::List { eigenvalues, tail } => OperatorSpectrum::from_eigenvalues(eigenvalues.clone(), e, *tail),
            };
            match built {
                Ok(spec) => {
                    let m = spec.dim();
                    for (key, law) in [("mu0", &mu0), ("nu0", &nu0)] {
                        if let Some(Err(err)) = law.as_ref().map(|l| l.validate(m)) {
                            let l = line(&p, "run", key);
                            p.err(l, format!("{key}: {err}"));
                        }
                    }
                    if y.len() > m {
                        let l = line(&p, "run", "y");
                        p.err(l, format!("y has {} coordinates, model has {m}", y.len()));
                    }
                }
                Err(err) => {
                    let l = line(&p, "spectrum", "lambda");
                    p.err(l, err.to_string());
                }
            }
        }
    }

    if !p.errors.is_empty() {
        p.errors.sort_by_key(|e| e.line.unwrap_or(usize::MAX));
        return Err(p.errors);
    }
    let m = match &spectrum {
        Some(SpectrumRule::Power { modes, .. }) => *modes,
        Some(SpectrumRule::List { eigenvalues, .. }) => eigenvalues.len(),
        None => 0,
    };
    let mut y = y;
    y.resize(m, 0.0);
    Ok(RunConfig {
        model: model.expect("checked"),
        params,
        spectrum: spectrum.expect("checked"),
        eps: eps.expect("checked"),
        scheme,
        horizon: horizon.expect("checked"),
        p: pows,
        lambda_weight,
        tol,
        max_iter,
        test_functions,
        y,
        mu0: mu0.expect("checked"),
        nu0: nu0.expect("checked"),
        shift_modes,
        samples,
        histogram_cells,
        out,
        echo,
    })
}

/// Wraps configuration errors as a crate error.
pub fn config_error(errors: Vec<ConfigError>) -> Error {
    Error::Config(errors)
}
