//! Suite dispatch, CSV emission and the run manifest.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crate::config::RunConfig;
use crate::dynamics::{
    picard_measure_flow, simulate_frozen_flow, write_diagnostics_csv, write_flow_csv, InitialLaw, MeasureFlow,
    ParticleEnsemble, PicardDiagnostics,
};
use crate::error::{Error, Result};
use crate::girsanov::{
    harnack_power_check, log_harnack_entropy_check, shift_harnack_check, write_report_csv, CouplingReport, ShiftMode,
};
use crate::model::{validate_assumptions, ModelSpec};
use crate::rng::{stream, StreamKind};
use crate::transport::{gaussian_w2, w2_brute_force, w2_exact, w2_sliced, EmpiricalCloud};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Validate,
    Simulate,
    Flow,
    LogHarnack,
    HarnackPower,
    ShiftHarnack,
    TransportSelftest,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Validate,
        Suite::Simulate,
        Suite::Flow,
        Suite::LogHarnack,
        Suite::HarnackPower,
        Suite::ShiftHarnack,
        Suite::TransportSelftest,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Validate => "validate",
            Suite::Simulate => "simulate",
            Suite::Flow => "flow",
            Suite::LogHarnack => "log-harnack",
            Suite::HarnackPower => "harnack-power",
            Suite::ShiftHarnack => "shift-harnack",
            Suite::TransportSelftest => "transport-selftest",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown suite '{s}'")))
    }
}

/// Flat key-value record of one invocation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunManifest {
    pub entries: Vec<(String, String)>,
    pub files: Vec<String>,
}

impl RunManifest {
    fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(&format!("{k} = {}\n", v.replace('\n', " ")));
        }
        s.push_str(&format!("files = {}\n", self.files.join(",")));
        s
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub manifest: RunManifest,
    pub error: Option<String>,
}

/// What a suite produced before the manifest is written.
#[derive(Debug, Default)]
struct SuiteResult {
    files: Vec<String>,
    passed: bool,
    summary: Vec<(String, String)>,
}

impl SuiteResult {
    fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Hypothesis(_)
        | Error::InvalidArgument(_)
        | Error::InvalidSpectrum(_)
        | Error::DimensionMismatch { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn create(out_dir: &Path, name: &str, files: &mut Vec<String>) -> Result<BufWriter<File>> {
    files.push(name.to_string());
    Ok(BufWriter::new(File::create(out_dir.join(name))?))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) { format!("\"{}\"", s.replace('"', "\"\"")) } else { s.to_string() }
}

/// Runs one suite, writes its CSVs and `manifest.txt` into `out_dir`.
pub fn run_suite(cfg: &RunConfig, suite: Suite, out_dir: &Path) -> RunOutcome {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let mut manifest = RunManifest::default();
    manifest.push("tool", "mvlab");
    manifest.push("version", VERSION);
    manifest.push("suite", suite);
    manifest.push("seed", cfg.scheme.seed);
    manifest.push("threads", rayon::current_num_threads());
    for (k, v) in &cfg.echo {
        manifest.push(format!("config.{k}"), v);
    }

    let result = match std::fs::create_dir_all(out_dir) {
        Ok(()) => dispatch(cfg, suite, out_dir),
        Err(e) => Err((Error::from(e), Vec::new())),
    };
    let (exit_code, error, mut files) = match result {
        Ok(r) => {
            for (k, v) in r.summary {
                manifest.push(format!("summary.{k}"), v);
            }
            (if r.passed { EXIT_PASS } else { EXIT_VIOLATION }, None, r.files)
        }
        Err((err, files)) => (exit_code_for(&err), Some(err.to_string()), files),
    };
    manifest.push("status", match exit_code {
        EXIT_PASS => "pass",
        EXIT_VIOLATION => "fail",
        EXIT_CONFIG => "config-error",
        _ => "runtime-error",
    });
    manifest.push("exit_code", exit_code);
    if let Some(e) = &error {
        manifest.push("error", e);
    }
    manifest.push("started_unix_seconds", started);
    manifest.push("wall_clock_seconds", format!("{:.3}", clock.elapsed().as_secs_f64()));
    files.push("manifest.txt".into());
    manifest.files = files;
    let written = std::fs::write(out_dir.join("manifest.txt"), manifest.render());
    match written {
        Ok(()) => RunOutcome { exit_code, manifest, error },
        Err(e) => RunOutcome { exit_code: EXIT_RUNTIME, manifest, error: Some(format!("cannot write manifest: {e}")) },
    }
}

type Dispatch = std::result::Result<SuiteResult, (Error, Vec<String>)>;

fn dispatch(cfg: &RunConfig, suite: Suite, out: &Path) -> Dispatch {
    let mut files = Vec::new();
    let res = match suite {
        Suite::TransportSelftest => transport_selftest(cfg, out, &mut files),
        _ => cfg.build_model().and_then(|model| match suite {
            Suite::Validate => validate(cfg, &model, out, &mut files),
            Suite::Simulate => simulate(cfg, &model, out, &mut files),
            Suite::Flow => flow(cfg, &model, out, &mut files),
            Suite::LogHarnack | Suite::HarnackPower | Suite::ShiftHarnack => {
                inequalities(cfg, &model, suite, out, &mut files)
            }
            Suite::TransportSelftest => unreachable!(),
        }),
    };
    match res {
        Ok(mut r) => {
            r.files = files;
            Ok(r)
        }
        Err(e) => Err((e, files)),
    }
}

fn validate(cfg: &RunConfig, model: &ModelSpec, out: &Path, files: &mut Vec<String>) -> Result<SuiteResult> {
    let report = validate_assumptions(model, cfg.samples, cfg.scheme.seed)?;
    let mut w = create(out, "validation.csv", files)?;
    writeln!(w, "clause,passed,margin,detail")?;
    for c in &report.clauses {
        let margin = c.witness.as_ref().map(|w| w.margin.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{}", c.clause, c.passed, margin, csv_field(&c.detail))?;
    }
    w.flush()?;
    let mut r = SuiteResult { passed: report.passed(), ..Default::default() };
    r.note("note", crate::model::ValidationReport::NOTE);
    for c in report.clauses.iter().filter(|c| !c.passed) {
        r.note(&format!("violated.{}", c.clause), &c.detail);
    }
    Ok(r)
}

fn write_moments(flow: &MeasureFlow, out: &Path, files: &mut Vec<String>) -> Result<()> {
    let mut w = create(out, "moments.csv", files)?;
    writeln!(w, "t,mode,mean,mean_se,variance,variance_se")?;
    for (t, c) in flow.times().iter().zip(flow.clouds()) {
        let n = c.len() as f64;
        let var = c.variance();
        for (k, (m, v)) in c.mean().iter().zip(&var).enumerate() {
            // fourth central moment for the variance standard error
            let m4 = c.points().map(|p| (p[k] - m).powi(4)).sum::<f64>() / n;
            let v_se = ((m4 - v * v).max(0.0) / n).sqrt();
            writeln!(w, "{t},{},{m},{},{v},{v_se}", k + 1, (v / n).sqrt())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_flow(flow: &MeasureFlow, name: &str, out: &Path, files: &mut Vec<String>) -> Result<()> {
    let mut w = create(out, name, files)?;
    write_flow_csv(flow, &mut w)?;
    w.flush()?;
    Ok(())
}

fn simulate(cfg: &RunConfig, model: &ModelSpec, out: &Path, files: &mut Vec<String>) -> Result<SuiteResult> {
    let s = &cfg.scheme;
    let initial = ParticleEnsemble::sample(&cfg.mu0, model.dim(), s.particles, s.seed, s.replicate)?.cloud();
    let frozen = MeasureFlow::constant(s.freeze_times(model.horizon), &initial)?;
    let flow = simulate_frozen_flow(model, &frozen, &cfg.mu0, s)?.restrict(&s.output_times(model.horizon))?;
    write_flow(&flow, "flow.csv", out, files)?;
    write_moments(&flow, out, files)?;
    let mut r = SuiteResult { passed: true, ..Default::default() };
    r.note("frozen_law", "initial law held constant in time");
    Ok(r)
}

fn write_diagnostics(diag: &PicardDiagnostics, out: &Path, files: &mut Vec<String>) -> Result<()> {
    let mut w = create(out, "diagnostics.csv", files)?;
    write_diagnostics_csv(diag, &mut w)?;
    w.flush()?;
    Ok(())
}

fn flow(cfg: &RunConfig, model: &ModelSpec, out: &Path, files: &mut Vec<String>) -> Result<SuiteResult> {
    let s = &cfg.scheme;
    let res = match picard_measure_flow(model, &cfg.mu0, s, cfg.lambda_weight, cfg.tol, cfg.max_iter) {
        Ok(res) => res,
        Err(Error::NotConverged { rhos }) => {
            write_diagnostics(&PicardDiagnostics { rhos: rhos.clone() }, out, files)?;
            return Err(Error::NotConverged { rhos });
        }
        Err(e) => return Err(e),
    };
    let flow = res.flow.restrict(&s.output_times(model.horizon))?;
    write_flow(&flow, "flow.csv", out, files)?;
    write_diagnostics(&res.diagnostics, out, files)?;
    write_moments(&flow, out, files)?;
    let mut r = SuiteResult { passed: true, ..Default::default() };
    r.note("iterations", res.iterations());
    if res.diagnostics.non_contraction() {
        r.note("warning", "contraction factor above 1 in the last two iterations");
    }
    Ok(r)
}

fn inequalities(
    cfg: &RunConfig,
    model: &ModelSpec,
    suite: Suite,
    out: &Path,
    files: &mut Vec<String>,
) -> Result<SuiteResult> {
    let cc = cfg.coupling();
    let fs = &cfg.test_functions;
    let mut rows: Vec<CouplingReport> = Vec::new();
    let mut r = SuiteResult::default();
    match suite {
        Suite::LogHarnack => {
            let o = log_harnack_entropy_check(model, &cfg.mu0, &cfg.nu0, fs, &cc)?;
            r.note("mean_weight", o.entropy.mean_weight.value);
            r.note("mean_weight_se", o.entropy.mean_weight.std_error);
            r.note("open_question", "only the W2 scaling of the entropy bound is testable, not its constant");
            rows.extend(o.rows);
        }
        Suite::HarnackPower => {
            for &p in &cfg.p {
                let o = harnack_power_check(model, &cfg.mu0, &cfg.nu0, p, fs, &cc)?;
                r.note(&format!("p{p}.mean_weight"), o.entropy.mean_weight.value);
                r.note(&format!("p{p}.max_identity_error"), o.max_identity_error.unwrap_or(0.0));
                rows.extend(o.rows);
            }
        }
        Suite::ShiftHarnack => {
            let mut modes = Vec::new();
            if matches!(cfg.shift_modes, crate::config::ShiftModes::Log | crate::config::ShiftModes::Both) {
                modes.push(ShiftMode::Log);
            }
            if matches!(cfg.shift_modes, crate::config::ShiftModes::Power | crate::config::ShiftModes::Both) {
                modes.extend(cfg.p.iter().map(|&p| ShiftMode::Power(p)));
            }
            for mode in modes {
                let o = shift_harnack_check(model, &cfg.mu0, &cfg.y, mode, fs, &cc)?;
                let tag = match mode {
                    ShiftMode::Log => "log".to_string(),
                    ShiftMode::Power(p) => format!("p{p}"),
                };
                r.note(&format!("{tag}.mean_weight"), o.entropy.mean_weight.value);
                r.note(&format!("{tag}.max_identity_error"), o.max_identity_error.unwrap_or(0.0));
                rows.extend(o.rows);
            }
        }
        _ => unreachable!("not an inequality suite"),
    }
    let mut w = create(out, "report.csv", files)?;
    write_report_csv(&rows, &mut w)?;
    w.flush()?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    r.passed = failed == 0;
    r.note("rows", rows.len());
    r.note("rows_failed", failed);
    Ok(r)
}

struct SelfTestCase {
    name: String,
    expected: f64,
    computed: f64,
    tol: f64,
}

fn transport_selftest(cfg: &RunConfig, out: &Path, files: &mut Vec<String>) -> Result<SuiteResult> {
    let one_d = |xs: &[f64]| EmpiricalCloud::from_flat(1, xs.to_vec());
    let mut cases = Vec::new();
    let mut case = |name: String, expected: f64, computed: f64, tol: f64| {
        cases.push(SelfTestCase { name, expected, computed, tol });
    };

    let mut rng = stream(cfg.scheme.seed, StreamKind::Auxiliary, 0);
    let a = EmpiricalCloud::from_flat(3, (0..24).map(|_| rand::Rng::random::<f64>(&mut rng)).collect())?;
    case("identical".into(), 0.0, w2_exact(&a, &a)?, 1e-12);
    let v = [0.3, -0.4, 1.2];
    case("translation".into(), 1.3, w2_exact(&a, &a.translated(&v))?, 1e-12);
    case("two-point-1d".into(), 0.5, w2_exact(&one_d(&[0.0, 1.0])?, &one_d(&[0.5, 0.5])?)?, 1e-12);
    case("gaussian-scale".into(), 1.0, gaussian_w2(&[0.0], &[1.0], &[0.0], &[4.0])?, 1e-12);
    case("gaussian-shift-scale".into(), 2f64.sqrt(), gaussian_w2(&[0.0], &[1.0], &[1.0], &[4.0])?, 1e-12);
    for k in 0..20u64 {
        let mut rng = stream(cfg.scheme.seed, StreamKind::Auxiliary, 1 + k);
        let n = 2 + (k as usize % 7);
        let m = 1 + (k as usize % 4);
        let mut draw = |len| (0..len).map(|_| rand::Rng::random::<f64>(&mut rng) * 2.0 - 1.0).collect::<Vec<_>>();
        let a = EmpiricalCloud::from_flat(m, draw(n * m))?;
        let b = EmpiricalCloud::from_flat(m, draw(n * m))?;
        case(format!("brute-force-{k}"), w2_brute_force(&a, &b)?, w2_exact(&a, &b)?, 1e-12);
    }
    let x = one_d(&[0.1, 0.7, -1.2, 3.0])?;
    let y = one_d(&[1.0, -0.5, 0.2, 0.4])?;
    case("sliced-1d".into(), w2_exact(&x, &y)?, w2_sliced(&x, &y, 8, cfg.scheme.seed)?.estimate, 1e-12);

    let mut w = create(out, "selftest.csv", files)?;
    writeln!(w, "case,expected,computed,abs_err")?;
    let mut passed = true;
    for c in &cases {
        let err = (c.expected - c.computed).abs();
        passed &= err <= c.tol;
        writeln!(w, "{},{},{},{err}", c.name, c.expected, c.computed)?;
    }
    w.flush()?;
    let mut r = SuiteResult { passed, ..Default::default() };
    r.note("cases", cases.len());
    Ok(r)
}

/// Parses the file at `path` and runs `suite`. Configuration problems exit 2.
pub fn run_from_file(
    path: &Path,
    suite: Suite,
    out_override: Option<&Path>,
    seed_override: Option<u64>,
) -> RunOutcome {
    let fail = |msg: String| RunOutcome { exit_code: EXIT_CONFIG, manifest: RunManifest::default(), error: Some(msg) };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return fail(format!("cannot read {}: {e}", path.display())),
    };
    let mut cfg = match crate::config::parse_config(&text) {
        Ok(c) => c,
        Err(errs) => return fail(Error::Config(errs).to_string()),
    };
    if let Some(s) = seed_override {
        cfg.scheme.seed = s;
    }
    let out = out_override.map(Path::to_path_buf).unwrap_or_else(|| cfg.out.clone().unwrap_or_else(|| "out".into()).into());
    run_suite(&cfg, suite, &out)
}

/// Initial laws `(μ0, ν0)` of a run.
pub fn initial_laws(cfg: &RunConfig) -> (&InitialLaw, &InitialLaw) {
    (&cfg.mu0, &cfg.nu0)
}
