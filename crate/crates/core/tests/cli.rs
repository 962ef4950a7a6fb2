use std::path::Path;
use std::process::{Command, Output};

const BASE: &str = "[model]\nname = NAME\n[spectrum]\nlambda = k^2\nM = 4\neps = EPS\n\
                    [scheme]\nn = 50\nL = 5\nN = 2000\nN_w = 64\nseed = 42\n[run]\nT = 1\n";

fn config(dir: &Path, name: &str, eps: &str, extra: &str) -> std::path::PathBuf {
    let path = dir.join(format!("{name}-{eps}.cfg"));
    std::fs::write(&path, format!("{}{extra}", BASE.replace("NAME", name).replace("EPS", eps))).unwrap();
    path
}

fn mvlab(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvlab"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn selftest_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "ou", "0.25", "");
    let out = dir.path().join("o");
    let r = mvlab(&["transport-selftest"], &cfg, &out);
    assert_eq!(r.status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("selftest.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let err: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(err <= 1e-12, "{line}");
    }
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("files = selftest.csv,manifest.txt"));
    assert!(manifest.contains("exit_code = 0"));
}

#[test]
fn divergent_trace_exits_one_naming_a1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "ou", "0.6", "samples = 100\n");
    let out = dir.path().join("o");
    let r = mvlab(&["validate"], &cfg, &out);
    assert_eq!(r.status.code(), Some(1));
    let csv = std::fs::read_to_string(out.join("validation.csv")).unwrap();
    let a1 = csv.lines().find(|l| l.starts_with("a1,")).unwrap();
    assert!(a1.starts_with("a1,false"), "{a1}");
}

#[test]
fn shift_harnack_on_dini_drift_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "dini-drift", "0.25", "y = 0.3\nmode = log\n");
    let out = dir.path().join("o");
    let r = mvlab(&["shift-harnack"], &cfg, &out);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("shift-harnack-log,")));
    assert!(csv.lines().skip(1).all(|l| l.contains(",true,")));
}

#[test]
fn configuration_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "[model]\nname = ou\nbogus = 1\n[spectrum]\nlambda = k^2\nM = 4\neps = 1.5\n[run]\nT = 1\n").unwrap();
    let r = mvlab(&["validate"], &bad, &dir.path().join("o"));
    assert_eq!(r.status.code(), Some(2));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("trace_exponent out of (0,1)"), "{err}");

    let missing = dir.path().join("nope.cfg");
    assert_eq!(mvlab(&["validate"], &missing, &dir.path().join("o")).status.code(), Some(2));

    let cfg = config(dir.path(), "ou", "0.25", "");
    assert_eq!(mvlab(&["nonsense"], &cfg, &dir.path().join("o")).status.code(), Some(2));
}

#[test]
fn power_of_one_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "ou", "0.25", "p = 1\n");
    assert_eq!(mvlab(&["harnack-power"], &cfg, &dir.path().join("o")).status.code(), Some(2));
}

#[test]
fn seed_override_changes_output_and_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "meanfield-linear", "0.25", "");
    let read = |o: &str| std::fs::read(dir.path().join(o).join("flow.csv")).unwrap();
    mvlab(&["flow"], &cfg, &dir.path().join("a"));
    mvlab(&["flow"], &cfg, &dir.path().join("b"));
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mvlab"));
    cmd.args(["flow", "--seed", "7", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("c"));
    assert_eq!(cmd.output().unwrap().status.code(), Some(0));
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    let manifest = std::fs::read_to_string(dir.path().join("c").join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 7"));
}
