use std::path::{Path, PathBuf};
use std::process::Command;

use hilasso::io::{read_matrix, write_groups, write_matrix};
use hilasso::GroupPartition;
use nalgebra::DMatrix;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hilasso"))
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().expect("spawn hilasso");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn identity_problem(dir: &Path) -> (PathBuf, PathBuf) {
    let d = dir.join("eye.csv");
    let x = dir.join("x.csv");
    write_matrix(&d, &DMatrix::identity(4, 4)).unwrap();
    write_matrix(&x, &DMatrix::from_row_slice(4, 2, &[1.0, -0.1, -0.2, 0.5, 0.7, 0.0, 0.25, -2.0])).unwrap();
    (d, x)
}

#[test]
fn identity_lasso_is_soft_thresholding() {
    let dir = tempfile::tempdir().unwrap();
    let (d, x) = identity_problem(dir.path());
    let out = dir.path().join("a.csv");
    let (code, _, err) = run(&["solve", "--dict", p(&d), "--signals", p(&x), "--mode", "lasso", "--lambda1", "0.3", "--out", p(&out)]);
    assert_eq!(code, 0, "{err}");
    let a = read_matrix(&out).unwrap();
    let xm = read_matrix(&x).unwrap();
    for (ai, xi) in a.iter().zip(xm.iter()) {
        let want = xi.signum() * (xi.abs() - 0.3).max(0.0);
        assert!((ai - want).abs() < 1e-8, "{ai} vs {want}");
    }
    assert!(dir.path().join("a.csv.manifest.json").exists());
}

#[test]
fn collaborative_without_group_weight_matches_lasso() {
    let dir = tempfile::tempdir().unwrap();
    let mut state = 7u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    let mut dm = DMatrix::from_fn(6, 8, |_, _| next());
    for mut c in dm.column_iter_mut() {
        let n = c.norm();
        c /= n;
    }
    let x = DMatrix::from_fn(6, 3, |_, _| next());
    let (dp, xp, gp) = (dir.path().join("d.csv"), dir.path().join("x.csv"), dir.path().join("g.txt"));
    write_matrix(&dp, &dm).unwrap();
    write_matrix(&xp, &x).unwrap();
    write_groups(&gp, &GroupPartition::uniform(2, 4).unwrap()).unwrap();
    let (a1, a2) = (dir.path().join("lasso.csv"), dir.path().join("chl.csv"));
    let common = ["--dict", p(&dp), "--signals", p(&xp), "--lambda1", "0.05", "--tol", "1e-12"];
    let mut args = vec!["solve"];
    args.extend(common);
    args.extend(["--mode", "lasso", "--out", p(&a1)]);
    assert_eq!(run(&args).0, 0);
    let mut args = vec!["solve"];
    args.extend(common);
    args.extend(["--mode", "chilasso", "--lambda2", "0", "--groups", p(&gp), "--out", p(&a2)]);
    assert_eq!(run(&args).0, 0);
    let (l, c) = (read_matrix(&a1).unwrap(), read_matrix(&a2).unwrap());
    assert!((l - c).amax() < 1e-8);
}

#[test]
fn grouped_mode_without_groups_names_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let (d, x) = identity_problem(dir.path());
    let (code, _, err) = run(&["solve", "--dict", p(&d), "--signals", p(&x), "--mode", "hilasso", "--lambda1", "0.1", "--lambda2", "0.1"]);
    assert_eq!(code, 1);
    assert!(err.contains("--groups"), "{err}");
}

#[test]
fn input_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let (d, _) = identity_problem(dir.path());
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,2\n3\n").unwrap();
    let missing = dir.path().join("nope.csv");
    assert_eq!(run(&["solve", "--dict", p(&d), "--signals", p(&missing), "--mode", "lasso", "--lambda1", "0.1"]).0, 1);
    assert_eq!(run(&["solve", "--dict", p(&d), "--signals", p(&bad), "--mode", "lasso", "--lambda1", "0.1"]).0, 1);
    assert_eq!(run(&["solve", "--dict", p(&d), "--signals", p(&d), "--mode", "ridge"]).0, 1);
    let wide = dir.path().join("wide.csv");
    write_matrix(&wide, &DMatrix::zeros(3, 2)).unwrap();
    assert_eq!(run(&["solve", "--dict", p(&d), "--signals", p(&wide), "--mode", "lasso", "--lambda1", "0.1"]).0, 1);
}

#[test]
fn iteration_limit_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    assert_eq!(run(&["generate", "--preset", "missing", "--seed", "1", "--out", p(&gen)]).0, 0);
    let (code, _, err) = run(&[
        "solve", "--dict", p(&gen.join("dict.csv")), "--signals", p(&gen.join("signals.csv")),
        "--mask", p(&gen.join("mask.csv")), "--uniform-groups", "8x16", "--mode", "chilasso",
        "--lambda1", "0.01", "--lambda2", "0.2", "--max-iters", "2",
    ]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn orthonormal_coherence_and_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let (d, _) = identity_problem(dir.path());
    let report = dir.path().join("coh.json");
    let (code, _, err) = run(&["coherence", "--dict", p(&d), "--uniform-groups", "2x2", "--s", "1", "--k", "1", "--out", p(&report)]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    for key in ["mu", "mu_block", "chi", "nu", "mu_block_ss", "mu_block_s"] {
        assert_eq!(v["report"][key].as_f64().unwrap(), 0.0, "{key}");
    }
    assert_eq!(v["projected"]["zeta"].as_f64().unwrap(), 1.0);
    assert_eq!(v["projected"]["nu_p"].as_f64().unwrap(), 0.0);

    let cert = dir.path().join("cert.json");
    let (code, _, err) = run(&["certify", "--dict", p(&d), "--uniform-groups", "2x2", "--k", "1", "--s", "1", "--lambda", "0.5", "--out", p(&cert)]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    assert_eq!(v["holds"], true);
    assert_eq!(v["certificate"]["mode"], "uniform");

    let support = dir.path().join("support.json");
    std::fs::write(&support, r#"{"active_groups": [2], "within_group": [[1]]}"#).unwrap();
    let (code, stdout, err) = run(&["certify", "--dict", p(&d), "--uniform-groups", "2x2", "--k", "1", "--s", "1", "--lambda", "1", "--support", p(&support)]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["holds"], true);
    assert_eq!(v["certificate"]["gamma_bound"], "unbounded");
}

#[test]
fn generate_is_bit_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(run(&["generate", "--preset", "missing", "--seed", "5", "--out", p(out)]).0, 0);
    }
    for f in ["dict.csv", "signals.csv", "codes.csv", "groups.txt", "supports.json", "mask.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn experiment_writes_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"q": 4, "g": 4, "m": 12, "k": 1, "s": 2, "n": 5, "sigma": 0.01, "seed": 2,
            "methods": ["lasso", "chilasso"],
            "lambda_grid": {"lasso": [{"lambda1": 0.01, "lambda2": 0.0}],
                            "chilasso": [{"lambda1": 0.01, "lambda2": 0.02}]}}"#,
    )
    .unwrap();
    let out = dir.path().join("res.json");
    let (code, _, err) = run(&["experiment", "--config", p(&cfg), "--out", p(&out), "--threads", "1"]);
    assert_eq!(code, 0, "{err}");
    assert!(err.contains("chilasso"));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["runs"][0]["methods"].as_array().unwrap().len(), 2);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("res.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "experiment");
    assert!(m["wall_time_secs"].as_f64().unwrap() >= 0.0);
}
