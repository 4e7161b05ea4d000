use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gpam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpam")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn version_prints_crate_version() {
    let o = gpam(&["version"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&gpam(&["--bogus"])), 2);
    assert_eq!(code(&gpam(&["noise", "--grid", "32"])), 2, "missing --out");
    assert_eq!(code(&gpam(&["experiment", "no-such", "--out", "/tmp/x"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(code(&gpam(&["experiment", "strict-embedding", "--out", path(&out), "--no-such-key", "1"])), 2);
    assert_eq!(code(&gpam(&["experiment", "strict-embedding", "--out", path(&out), "--samples", "many"])), 2);
    assert_eq!(code(&gpam(&["experiment", "support-approx", "--out", path(&out), "--a", "3"])), 2, "c must exceed a");
    assert_eq!(code(&gpam(&["noise", "--grid", "30", "--out", path(&out)])), 2, "bad grid");
}

#[test]
fn experiment_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = gpam(&["experiment", "strict-embedding", "--out", path(&out), "--samples", "5", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("overall: PASS"));
    for f in ["report.csv", "verdict.txt", "manifest.txt", "plots/identity_error.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("samples = 5") && manifest.contains("seed = 3") && manifest.contains("meta.partition_hash"));
    assert_eq!(code(&gpam(&["verify", "--dir", path(&out)])), 0);

    // The manifest is a complete config: re-running from it is bit-identical.
    let again = dir.path().join("again");
    let cfg = out.join("manifest.txt");
    assert_eq!(code(&gpam(&["experiment", "strict-embedding", "--config", path(&cfg), "--out", path(&again)])), 0);
    assert_eq!(fs::read(out.join("report.csv")).unwrap(), fs::read(again.join("report.csv")).unwrap());
}

#[test]
fn failed_verdict_exits_one_and_tampering_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    // A zero slope tolerance cannot be met.
    let o = gpam(&["experiment", "pure-area", "--out", path(&out), "--grid", "64", "--n", "1..2", "--tol", "0.0"]);
    assert_eq!(code(&o), 1, "{}", stdout(&o));
    assert!(stdout(&o).contains("overall: FAIL"));
    assert_eq!(code(&gpam(&["verify", "--dir", path(&out)])), 1);

    let ok = dir.path().join("ok");
    assert_eq!(code(&gpam(&["experiment", "strict-embedding", "--out", path(&ok), "--samples", "2"])), 0);
    let csv = ok.join("report.csv");
    let text: Vec<String> = fs::read_to_string(&csv)
        .unwrap()
        .lines()
        .map(|l| if l.starts_with("identity_error,0,") { "identity_error,0,0.0,1.0".to_string() } else { l.to_string() })
        .collect();
    fs::write(&csv, text.join("\n") + "\n").unwrap();
    assert_eq!(code(&gpam(&["verify", "--dir", path(&ok)])), 1);
}

#[test]
fn results_do_not_depend_on_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let args = ["experiment", "enhanced-convergence", "--grid", "32", "--samples", "3", "--eps", "0.5,0.25,0.125", "--psi", "gaussian"];
    let run = |jobs: &str, out: &Path| {
        let mut v: Vec<&str> = vec!["--jobs", jobs];
        v.extend_from_slice(&args[..2]);
        v.extend_from_slice(&["--out", path(out)]);
        v.extend_from_slice(&args[2..]);
        gpam(&v)
    };
    for (jobs, out) in [("1", &a), ("3", &b)] {
        let o = run(jobs, out);
        assert!(code(&o) <= 1, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(a.join("report.csv")).unwrap(), fs::read(b.join("report.csv")).unwrap());
}

#[test]
fn noise_enhance_solve_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let noise = d.join("noise");
    let o = gpam(&["noise", "--grid", "32", "--seed", "5", "--psi", "gaussian", "--eps", "0.5", "--out", path(&noise)]);
    assert_eq!(code(&o), 0);
    let field = noise.join("noise.field");
    assert!(fs::read_to_string(&field).unwrap().starts_with("GPAM-FIELD v1 n=32"));
    assert!(fs::read_to_string(noise.join("manifest.txt")).unwrap().contains("field_hash = "));
    // Same seed, same bytes.
    let noise2 = d.join("noise2");
    gpam(&["noise", "--grid", "32", "--seed", "5", "--psi", "gaussian", "--eps", "0.5", "--out", path(&noise2)]);
    assert_eq!(fs::read(&field).unwrap(), fs::read(noise2.join("noise.field")).unwrap());

    let part = d.join("part");
    let o = gpam(&["partition", "--grid", "32", "--out", path(&part)]);
    assert_eq!(code(&o), 0);
    assert!(fs::read_to_string(part.join("partition.csv")).unwrap().starts_with("j,radius,weight\n-1,0.0,1.0\n"));

    let lift = d.join("lift");
    let o = gpam(&["enhance", "--input", path(&field), "--c", "1.5", "--out", path(&lift)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(lift.join("first.field").exists() && lift.join("second.field").exists());
    assert_eq!(code(&gpam(&["enhance", "--grid", "32", "--out", path(&d.join("lift2"))])), 0);

    let traj = d.join("traj");
    let o = gpam(&["solve", "--h", path(&field), "--c", "1", "--t-end", "0.1", "--dt", "0.01", "--out", path(&traj)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(traj.join("state_00010.field").exists());
    assert!(fs::read_to_string(traj.join("manifest")).unwrap().contains("times = 0.0,"));
}
