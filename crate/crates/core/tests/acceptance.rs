//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any fails.

use std::f64::consts::{E, SQRT_2};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use mvlab::dynamics::{picard_measure_flow, InitialLaw, ParticleEnsemble, SchemeConfig};
use mvlab::girsanov::{
    constant_shift_weights, entropy_estimate, harnack_power_check, log_harnack_entropy_check, shift_harnack_check,
    CheckOutcome, CouplingConfig, ShiftMode, TestFunction,
};
use mvlab::model::{build_model, dini_integral, validate_assumptions, Clause, DiniModulus, ModelParams, ModelSpec};
use mvlab::rng::{stream, StreamKind};
use mvlab::spectral::OperatorSpectrum;
use mvlab::transport::{w2_brute_force, w2_exact, EmpiricalCloud};
use rand_distr::{Distribution, StandardNormal};

type Verdict = (bool, String);

fn model(name: &str, m: usize, horizon: f64) -> ModelSpec {
    let spectrum = OperatorSpectrum::power_law(1.0, 2.0, m, 0.25).unwrap();
    build_model(name, &ModelParams::default(), spectrum, horizon).unwrap()
}

fn scheme(n: usize, l: usize, particles: usize, w2: usize, seed: u64) -> SchemeConfig {
    SchemeConfig {
        steps: n,
        output_points: l,
        particles,
        w2_particles: w2,
        seed,
        replicate: 0,
        exact_convolution: true,
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn c01_ou_law() -> Verdict {
    let clock = Instant::now();
    let m = 8;
    let ou = model("ou", m, 1.0);
    let cfg = scheme(200, 10, 20_000, 64, 42);
    let law = InitialLaw::point(vec![0.0; m]);
    let flow = picard_measure_flow(&ou, &law, &cfg, 1.0, 1e-6, 20).unwrap().flow;
    let cloud = flow.last().unwrap();
    let n = cloud.len() as f64;
    let var = cloud.variance();
    let mean = cloud.mean();
    let mut worst = String::new();
    let mut ok = true;
    for k in 0..m {
        let lam = ((k + 1) * (k + 1)) as f64;
        let target = (1.0 - (-2.0 * lam).exp()) / (2.0 * lam);
        let m4 = cloud.points().map(|p| (p[k] - mean[k]).powi(4)).sum::<f64>() / n;
        let se = ((m4 - var[k] * var[k]).max(0.0) / n).sqrt();
        let err = (var[k] - target).abs();
        let allowed = (3.0 * se).max(0.02 * target);
        if err > allowed {
            ok = false;
            worst = format!("mode {} variance {:.5} vs {:.5}", k + 1, var[k], target);
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    ok &= secs <= 60.0;
    (ok, format!("mode-1 variance {:.5} (target 0.43233), {secs:.1}s {worst}", var[0]))
}

fn c02_transport() -> Verdict {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for k in 0..50u64 {
        let mut rng = stream(2024, StreamKind::Auxiliary, k);
        let n = 1 + (k as usize % 8);
        let m = 1 + (k as usize / 8) % 4;
        let mut draw = || (0..n * m).map(|_| StandardNormal.sample(&mut rng)).collect::<Vec<f64>>();
        let a = EmpiricalCloud::from_flat(m, draw()).unwrap();
        let b = EmpiricalCloud::from_flat(m, draw()).unwrap();
        let (exact, brute) = (w2_exact(&a, &b).unwrap(), w2_brute_force(&a, &b).unwrap());
        worst = worst.max((exact - brute).abs());
        ok &= exact == brute;
    }
    let a = EmpiricalCloud::from_flat(2, vec![0.0, 1.0, 2.0, -1.0, 0.5, 0.5]).unwrap();
    let v = [3.0, 4.0];
    let one = |x: Vec<f64>| EmpiricalCloud::from_flat(1, x).unwrap();
    let examples = [
        (w2_exact(&a, &a).unwrap(), 0.0),
        (w2_exact(&a, &a.translated(&v)).unwrap(), 5.0),
        (w2_exact(&one(vec![0.0, 1.0]), &one(vec![0.5, 0.5])).unwrap(), 0.5),
    ];
    let ex_err = examples.iter().map(|(c, e)| (c - e).abs()).fold(0.0, f64::max);
    ok &= ex_err <= 1e-12;
    (ok, format!("50 pairs, max |exact - brute| = {worst:e}; worked examples max error {ex_err:e}"))
}

fn c03_gaussian_w2() -> Verdict {
    let vals: Vec<f64> = (0..20u64)
        .map(|seed| {
            let mut rng = stream(seed, StreamKind::Auxiliary, 0);
            let a: Vec<f64> = (0..256).map(|_| StandardNormal.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..256).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); 1.0 + 2.0 * z }).collect();
            w2_exact(&EmpiricalCloud::from_flat(1, a).unwrap(), &EmpiricalCloud::from_flat(1, b).unwrap()).unwrap()
        })
        .collect();
    let med = median(vals);
    let rel = (med - SQRT_2).abs() / SQRT_2;
    (rel <= 0.07, format!("median W2 {med:.5} vs sqrt 2, relative error {:.2}%", 100.0 * rel))
}

fn c04_girsanov() -> Verdict {
    // |γ|² T = 0.5
    let gamma = [0.5, 0.0];
    let horizon = 2.0;
    let cfg = scheme(100, 10, 20_000, 64, 7);
    let e = entropy_estimate(&constant_shift_weights(&gamma, horizon, &cfg).unwrap()).unwrap();
    let within = |est: mvlab::girsanov::Estimate| (est.value - 0.25).abs() <= (3.0 * est.std_error).max(0.05 * 0.25);
    let ok = e.mean_weight.agrees_with(1.0, 3.0) && within(e.direct) && within(e.girsanov);
    (
        ok,
        format!(
            "mean weight {:.4} ± {:.4}, direct {:.4} ± {:.4}, girsanov {:.4} ± {:.4} (target 0.25)",
            e.mean_weight.value,
            e.mean_weight.std_error,
            e.direct.value,
            e.direct.std_error,
            e.girsanov.value,
            e.girsanov.std_error
        ),
    )
}

fn c05_picard() -> Verdict {
    let m = 4;
    let mf = model("meanfield-linear", m, 1.0);
    let cfg = scheme(100, 10, 10_000, 256, 11);
    let law = InitialLaw::Gaussian { mean: vec![1.0, 0.8, 0.6, 0.4], std: vec![0.5] };
    let res = match picard_measure_flow(&mf, &law, &cfg, 1.0, 1e-6, 20) {
        Ok(r) => r,
        Err(e) => return (false, format!("no convergence: {e}")),
    };
    let rhos = &res.diagnostics.rhos;
    let decreasing = rhos.windows(2).all(|w| w[1] < w[0]);
    let iters = res.iterations();
    let initial = res.flow.clouds()[0].mean();
    let mut ok = decreasing && iters <= 10;
    let mut worst = 0.0f64;
    for &t in &cfg.output_times(1.0) {
        let c = res.flow.at(t).unwrap();
        let (mean, var) = (c.mean(), c.variance());
        for k in 0..m {
            let lam = ((k + 1) * (k + 1)) as f64;
            let target = initial[k] * ((0.5 - lam) * t).exp();
            let se = (var[k] / c.len() as f64).sqrt();
            let err = (mean[k] - target).abs();
            worst = worst.max(err / (3.0 * se).max(0.02 * target.abs()).max(f64::MIN_POSITIVE));
            ok &= err <= (3.0 * se).max(0.02 * target.abs());
        }
    }
    (ok, format!("{iters} iterations, rho strictly decreasing: {decreasing}, worst mean error / allowance {worst:.3}"))
}

fn inequality_runs(name: &str, particles: usize) -> Vec<(String, CheckOutcome)> {
    let m = 4;
    let spec = model(name, m, 1.0);
    let cfg = CouplingConfig { scheme: scheme(100, 10, particles, 128, 99), ..Default::default() };
    let fs = TestFunction::all();
    let mu0 = InitialLaw::point(vec![0.0; m]);
    let nu0 = InitialLaw::point(vec![0.2, 0.0, 0.0, 0.0]);
    let mut y = vec![0.0; m];
    y[0] = 0.3;
    let mut out = vec![(format!("{name} log-harnack"), log_harnack_entropy_check(&spec, &mu0, &nu0, &fs, &cfg).unwrap())];
    for p in [2.0, 4.0] {
        out.push((format!("{name} harnack-power p={p}"), harnack_power_check(&spec, &mu0, &nu0, p, &fs, &cfg).unwrap()));
    }
    for mode in [ShiftMode::Log, ShiftMode::Power(2.0)] {
        out.push((format!("{name} shift-harnack {mode:?}"), shift_harnack_check(&spec, &mu0, &y, mode, &fs, &cfg).unwrap()));
    }
    out
}

fn c06_identities(runs: &[(String, CheckOutcome)]) -> Verdict {
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut seen = 0;
    for (_, o) in runs {
        if let Some(e) = o.max_identity_error {
            seen += 1;
            worst = worst.max(e);
            ok &= e <= 1e-12;
        }
    }
    ok &= seen > 0;
    (ok, format!("{seen} coupled runs, max residual / (1 + |shift|) = {worst:e}"))
}

fn c07_inequalities(runs: &[(String, CheckOutcome)]) -> Verdict {
    let failed: Vec<String> = runs
        .iter()
        .flat_map(|(name, o)| {
            o.rows
                .iter()
                .filter(|r| !r.pass && r.inequality != "pinsker")
                .map(move |r| format!("{name}/{}/{}", r.inequality, r.f_id.as_deref().unwrap_or("-")))
        })
        .collect();
    let rows: usize = runs.iter().map(|(_, o)| o.rows.iter().filter(|r| r.inequality != "pinsker").count()).sum();
    (failed.is_empty(), format!("{rows} rows over {} runs, failing: {failed:?}", runs.len()))
}

fn c08_entropy_scaling() -> Verdict {
    let m = 4;
    let mf = model("meanfield-linear", m, 1.0);
    let fs = [TestFunction::Tanh];
    let ratios: Vec<f64> = (0..20u64)
        .map(|seed| {
            let cfg = CouplingConfig { scheme: scheme(50, 10, 2000, 64, seed), ..Default::default() };
            let ent = |d: f64| {
                let mu0 = InitialLaw::point(vec![0.0; m]);
                let nu0 = InitialLaw::point(vec![d, 0.0, 0.0, 0.0]);
                log_harnack_entropy_check(&mf, &mu0, &nu0, &fs, &cfg).unwrap().entropy.girsanov.value
            };
            ent(1.0) / ent(0.5)
        })
        .collect();
    let med = median(ratios);
    ((3.0..=5.0).contains(&med), format!("median Ent(d=1)/Ent(d=0.5) over 20 seeds = {med:.4}"))
}

fn c09_pinsker(runs: &[(String, CheckOutcome)]) -> Verdict {
    let mut ok = true;
    let mut min_margin = f64::INFINITY;
    let mut count = 0;
    for (_, o) in runs {
        for r in o.rows.iter().filter(|r| r.inequality == "pinsker") {
            count += 1;
            min_margin = min_margin.min(r.margin + 3.0 * r.combined_se());
            ok &= r.pass;
        }
    }
    ok &= count == runs.len();
    (ok, format!("{count} Pinsker rows, min (margin + 3 s.e.) = {min_margin:.5}"))
}

fn c10_stability() -> Verdict {
    let m = 4;
    let dd = model("dini-drift", m, 1.0);
    let law = InitialLaw::Gaussian { mean: vec![0.0], std: vec![1.0] };
    let ds = [0.1, 0.2, 0.4];
    let mut moment = vec![Vec::new(); 3];
    let mut w2 = vec![Vec::new(); 3];
    for seed in 0..20u64 {
        let cfg = scheme(50, 10, 1000, 128, seed);
        for (i, &d) in ds.iter().enumerate() {
            let r = mvlab::dynamics::coupled_stability(&dd, &law, d, &cfg, 1.0, 1e-6, 20).unwrap();
            moment[i].push(r.moment_ratio());
            w2[i].push(r.w2_ratio());
        }
    }
    let spread = |v: Vec<Vec<f64>>| {
        let med: Vec<f64> = v.into_iter().map(median).collect();
        let max = med.iter().cloned().fold(f64::MIN, f64::max);
        let min = med.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    };
    let (a, b) = (spread(moment), spread(w2));
    (a <= 1.5 && b <= 1.5, format!("max/min moment ratio {a:.4}, W2 ratio {b:.4}"))
}

fn c11_dini_validator() -> Verdict {
    let canonical = DiniModulus::canonical(1.0, 1.0, E).unwrap().certificate();
    let accepted = canonical.passed();
    let delta0 = DiniModulus::canonical(1.0, 0.0, E).unwrap();
    let rejected_delta0 = match dini_integral(&delta0, 1e-8) {
        Err(e) => Some(e.to_string()),
        Ok(_) => None,
    };
    let sd = model("sign-drift", 4, 1.0);
    let report = validate_assumptions(&sd, 1000, 5).unwrap();
    let a3 = report.clause(Clause::A3);
    let sign_witness = (!a3.passed && a3.witness.is_some()).then(|| a3.witness.as_ref().unwrap().margin);
    let ok = accepted && rejected_delta0.is_some() && sign_witness.is_some();
    (
        ok,
        format!(
            "canonical K=1 d=1 c=e accepted: {accepted} ({}); d=0 rejected: {:?}; sign-drift a3 witness margin: {:?}",
            canonical.summary(),
            rejected_delta0,
            sign_witness
        ),
    )
}

fn c12_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.cfg");
    std::fs::write(
        &config,
        "[model]\nname = meanfield-linear\n[spectrum]\nlambda = k^2\nM = 3\neps = 0.25\n\
         [scheme]\nn = 40\nL = 4\nN = 600\nN_w = 64\nseed = 3\n[run]\nT = 1\nmode = both\n",
    )
    .unwrap();
    let suites =
        ["validate", "simulate", "flow", "log-harnack", "harnack-power", "shift-harnack", "transport-selftest"];
    let mut mismatches = Vec::new();
    for suite in suites {
        let mut reference: Option<Vec<(String, Vec<u8>)>> = None;
        for threads in [1, 2, 4] {
            let out = dir.path().join(format!("{suite}-{threads}"));
            let status = Command::new(env!("CARGO_BIN_EXE_mvlab"))
                .args([suite, "--config"])
                .arg(&config)
                .arg("--out")
                .arg(&out)
                .args(["--threads", &threads.to_string()])
                .output()
                .unwrap();
            if !status.status.success() {
                mismatches.push(format!("{suite}@{threads} exited {:?}", status.status.code()));
            }
            let csvs = read_csvs(&out);
            match &reference {
                None => reference = Some(csvs),
                Some(r) if *r != csvs => mismatches.push(format!("{suite}@{threads}")),
                _ => {}
            }
        }
    }
    (mismatches.is_empty(), format!("7 suites at 1, 2, 4 threads; mismatches: {mismatches:?}"))
}

fn read_csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn main() {
    // sanity: the ensemble type is usable without a model
    let _ = ParticleEnsemble::sample(&InitialLaw::point(vec![0.0]), 1, 2, 0, 0).unwrap();

    let mut runs = inequality_runs("meanfield-linear", 20_000);
    runs.extend(inequality_runs("dini-drift", 20_000));

    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("ou law oracle", Box::new(c01_ou_law)),
        ("transport oracle", Box::new(c02_transport)),
        ("gaussian w2 sampling", Box::new(c03_gaussian_w2)),
        ("girsanov normalization and entropy", Box::new(c04_girsanov)),
        ("picard fixed point", Box::new(c05_picard)),
        ("coupling identities", Box::new(|| c06_identities(&runs))),
        ("inequality suites", Box::new(|| c07_inequalities(&runs))),
        ("entropy scaling", Box::new(c08_entropy_scaling)),
        ("pinsker", Box::new(|| c09_pinsker(&runs))),
        ("stability ratios", Box::new(c10_stability)),
        ("dini validator", Box::new(c11_dini_validator)),
        ("determinism", Box::new(c12_determinism)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (ok, detail) = f();
        failed += usize::from(!ok);
        println!("criterion {:>2} {name}: {} ({detail})", i + 1, if ok { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
