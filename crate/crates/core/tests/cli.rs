// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

use frac_lqr::synthesis::synthesize;
use frac_lqr::{LqModel, TimeGrid};

fn frac_lqr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frac-lqr"))
        .args(args)
        .env("FRAC_LQR_THREADS", "1")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

/// Data rows of a CSV, header and `#` lines excluded.
fn rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const STOCHASTIC: &str = r#"{"x0":1,"b":0.1,"c":1,"sigma":0.5,"gamma":1,"alpha":0.75,"delta":0.5,"lambda":3"#;

#[test]
fn synthesize_writes_tables_matching_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"x0":1,"b":0,"c":1,"sigma":0.5,"gamma":1,"alpha":1,"delta":0,"lambda":3,"grid":{"horizon":6,"n":96}}"#,
    );
    let out = tmp.path().join("o");
    let o = frac_lqr(&["synthesize", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let law_csv = std::fs::read_to_string(out.join("law.csv")).unwrap();
    assert!(law_csv.starts_with("i,t,phi_hat,psi_hat\n"));
    assert!(law_csv.contains("# constants: rho_alpha="));
    assert!(law_csv.contains("# generated_unix: "));

    let constants = rows(&out.join("constants.csv"));
    let k: f64 = constants.iter().find(|r| r[0] == "k_lambda").unwrap()[1].parse().unwrap();
    assert!((k - 1.0 / 3.0).abs() < 1e-15);

    let m = LqModel {
        x0: 1.0,
        b: 0.0,
        c: 1.0,
        sigma: 0.5,
        gamma: 1.0,
        alpha: 1.0,
        delta: 0.0,
        lambda: 3.0,
    };
    let law = synthesize(&m, &TimeGrid::new(6.0, 96).unwrap(), None).unwrap();
    let table = rows(&out.join("law.csv"));
    assert_eq!(table.len(), 97);
    for (i, r) in table.iter().enumerate() {
        // 17 significant digits round-trip exactly.
        assert_eq!(r[2].parse::<f64>().unwrap(), law.phi_hat[i]);
        assert_eq!(r[3].parse::<f64>().unwrap(), law.psi_hat[i]);
    }
}

#[test]
fn null_control_cost_matches_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"x0":1,"b":0,"c":1,"sigma":0.5,"gamma":1,"alpha":1,"delta":0,"lambda":1,
            "grid":{"horizon":16,"n":512},"run":{"n_paths":2000,"base_seed":5}}"#,
    );
    let out = tmp.path().join("o");
    let o = frac_lqr(&["cost", "--config", &cfg, "--out", out.to_str().unwrap(), "--control", "zero"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = &rows(&out.join("cost.csv"))[0];
    assert_eq!(r[0], "zero");
    let (mean, se): (f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap());
    assert!((mean - 0.625).abs() < 3.0 * se, "{mean} +/- {se}");
}

#[test]
fn verify_exit_status_follows_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(
        r#"{STOCHASTIC},"grid":{{"n":256}},"run":{{"base_seed":3}},
            "verify":{{"refinement":[128,256],"residual_paths":2,"n_perturbations":5,"dominance_paths":40,"min_slope_passes":4}}}}"#
    );
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("o");
    let o = frac_lqr(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("PASS sfie_order"));
    for f in ["verify.csv", "residuals.csv", "refinement.csv", "dominance.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(rows(&out.join("dominance.csv")).len(), 5);

    // An unreachable order requirement must fail with status 1.
    let strict = body.replace(r#""residual_paths":2"#, r#""residual_paths":2,"order_slack":-5"#);
    let cfg = write_config(tmp.path(), &strict);
    let o = frac_lqr(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL sfie_order"));
}

#[test]
fn config_errors_exit_with_status_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = out.to_str().unwrap();

    let cfg = write_config(tmp.path(), &format!("{STOCHASTIC},\n\"lamda\":2}}"));
    let r = frac_lqr(&["synthesize", "--config", &cfg, "--out", o]);
    assert_eq!(r.status.code(), Some(2));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("lamda") && err.contains("line 2"), "{err}");

    let cfg = write_config(tmp.path(), &format!("{}}}", STOCHASTIC.replace(r#""c":1"#, r#""c":0"#)));
    let r = frac_lqr(&["synthesize", "--config", &cfg, "--out", o]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("c must be nonzero"));

    // lambda = 2 is outside the admissible range for this coupling.
    let cfg = write_config(tmp.path(), &format!("{}}}", STOCHASTIC.replace(r#""lambda":3"#, r#""lambda":2"#)));
    let r = frac_lqr(&["synthesize", "--config", &cfg, "--out", o]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("rho_tilde_alpha"));

    let r = frac_lqr(&["synthesize", "--config", "/nonexistent/config.json"]);
    assert_eq!(r.status.code(), Some(2));
    assert_eq!(frac_lqr(&["launch"]).status.code(), Some(2));
    assert_eq!(frac_lqr(&["--help"]).status.code(), Some(0));
}

#[test]
fn sweep_writes_one_row_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(r#"{STOCHASTIC},"grid":{{"n":64}},"run":{{"n_paths":20}}}}"#),
    );
    let out = tmp.path().join("o");
    let o = frac_lqr(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = rows(&out.join("sweep.csv"));
    let alphas: Vec<f64> = table.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(alphas, vec![0.6, 0.75, 0.9, 1.0]);
    // alpha = 0.6 pushes 2*rho_tilde_alpha past lambda = 3.
    assert_eq!(table[0][2], "not_admissible");
    assert!(table[1..].iter().all(|r| r[2] == "ok"));
}

#[test]
fn simulate_writes_long_format_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(r#"{STOCHASTIC},"grid":{{"n":64}},"run":{{"n_paths":3,"control":"zero"}}}}"#),
    );
    let out = tmp.path().join("o");
    let o = frac_lqr(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = rows(&out.join("paths.csv"));
    assert_eq!(table.len(), 3 * 65);
    // Zero control everywhere, state starts at x0.
    assert!(table.iter().all(|r| r[4].parse::<f64>().unwrap() == 0.0));
    assert_eq!(table[0][5].parse::<f64>().unwrap(), 1.0);
}
