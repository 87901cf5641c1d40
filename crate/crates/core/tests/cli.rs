use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sgdthermo::io::{read_matrix_csv, read_table};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgdthermo")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.toml"))
}

/// A bundled config with shorter runs, written to `dir`.
fn shortened(name: &str, dir: &Path, edits: &[(&str, &str)]) -> PathBuf {
    let mut text = std::fs::read_to_string(config(name)).unwrap();
    for (a, b) in edits {
        assert!(text.contains(a), "{a} not in {name}");
        text = text.replace(a, b);
    }
    let p = dir.join(format!("{name}.toml"));
    std::fs::write(&p, text).unwrap();
    p
}

fn run(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    bin(&args)
}

#[test]
fn posterior_config_writes_kl_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fig6");
    let o = run(&config("fig6_posterior"), &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_table(&out.join("kl_vs_eta.csv")).unwrap();
    assert_eq!(h, ["eta", "kl_sgld", "kl_sgworld", "kl_sgworld_uncorrected"]);
    assert_eq!(rows.len(), 5);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    for key in ["config_sha256", "version", "seeds", "wall_time_s", "tolerances"] {
        assert!(!summary[key].is_null(), "summary lacks {key}");
    }
    assert!(out.join("kl_vs_eta.svg").is_file());
    let r = bin(&["report", "--out", out.to_str().unwrap(), "--no-svg"]);
    assert!(r.status.success());
    assert!(String::from_utf8_lossy(&r.stdout).contains("KL slopes"));
}

#[test]
fn stationary_config_writes_matrix_files_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = shortened("fig3_regression_wr", tmp.path(), &[("steps = 25_000_000", "steps = 200_000"), ("runs = 4", "runs = 2")]);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = run(&cfg, out, &["--workers", "2"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["sigma_theory.csv", "sigma_empirical.csv", "C_theory.csv", "C_empirical.csv", "pairs.csv"] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f} differs between identical runs");
    }
    let m = read_matrix_csv(&a.join("sigma_theory.csv")).unwrap();
    assert_eq!(m.symbol, "Sigma");
    assert_eq!(m.matrix.shape(), (7, 7));

    // A different seed changes the measurement but not the theory.
    let c = tmp.path().join("c");
    assert!(run(&cfg, &c, &["--seed-override", "5", "--workers", "1"]).status.success());
    assert_eq!(std::fs::read(a.join("sigma_theory.csv")).unwrap(), std::fs::read(c.join("sigma_theory.csv")).unwrap());
    assert_ne!(std::fs::read(a.join("sigma_empirical.csv")).unwrap(), std::fs::read(c.join("sigma_empirical.csv")).unwrap());
}

#[test]
fn malformed_config_exits_2_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[experiment]\nname = \"x\"\nkind = \"stationary\"\n[model]\nkind = \"nonlinear-regression\"\nlambda = -1.0\n").unwrap();
    let o = run(&bad, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    let typo = shortened("fig6_posterior", tmp.path(), &[("etas", "etaz")]);
    assert_eq!(run(&typo, &out, &[]).status.code(), Some(2));
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 2, "no scratch directories left behind");
}

#[test]
fn divergence_exits_3_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = shortened("fig3_regression_wr", tmp.path(), &[("eta = 1e-7", "eta = 1e-3"), ("steps = 25_000_000", "steps = 10_000"), ("runs = 4", "runs = 1")]);
    let out = tmp.path().join("out");
    let o = run(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn oracle_passes_and_negative_control_names_coefficient() {
    let o = bin(&["oracle"]);
    assert!(o.status.success());
    let rep: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rep["pass"], true);
    let bad = bin(&["oracle", "--perturb", "a2=1e-3"]);
    assert_eq!(bad.status.code(), Some(1));
    let err = String::from_utf8_lossy(&bad.stderr);
    assert!(err.contains("MISMATCH wor-moments") && err.contains("a2"), "{err}");
}

#[test]
fn report_rejects_non_artifact_dir() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(bin(&["report", "--out", tmp.path().to_str().unwrap()]).status.code(), Some(2));
}
