use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hrsim::analytic::component_weights;

fn hrsim(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hrsim"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

/// Rows of a hashed CSV as (header, numeric rows).
fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn analytic_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--sequence", "ramsey,hahn-ramsey", "--theta-pi", "0.2"];
    for sub in ["a", "b"] {
        assert!(hrsim(&dir.path().join(sub), &args).status.success());
    }
    for name in ["ramsey_analytic.csv", "hahn-ramsey_analytic.csv"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(name)).unwrap(),
            fs::read(dir.path().join("b").join(name)).unwrap()
        );
    }
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 5] = [
        &["simulate", "--tau-start", "-1"],
        &["simulate", "--tau-count", "1"],
        &["simulate", "--theta", "2.0"],
        &["fit", "--data", "/nonexistent/file.csv"],
        &["no-such-command"],
    ];
    for args in cases {
        let out = hrsim(dir.path(), args);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert!(fs::read_dir(dir.path()).map_or(true, |mut d| d.next().is_none()));
}

#[test]
fn silent_noise_makes_engines_agree() {
    let dir = tempfile::tempdir().unwrap();
    let out = hrsim(
        dir.path(),
        &[
            "simulate",
            "--engine",
            "both",
            "--gamma",
            "0",
            "--trajectories",
            "500",
            "--sequence",
            "hahn-ramsey",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_table(&dir.path().join("hahn-ramsey_compare.csv"));
    assert_eq!(header, ["tau", "analytic", "mc_mean", "mc_stderr", "z"]);
    for r in rows {
        assert!((r[1] - r[2]).abs() < 1e-12 && r[3] == 0.0 && r[4] == 0.0, "{r:?}");
    }
}

#[test]
fn components_report_weights_and_matching_exponents() {
    let dir = tempfile::tempdir().unwrap();
    let out = hrsim(
        dir.path(),
        &["components", "--theta-count", "11", "--tau-start", "0.05"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let (header, rows) = read_table(&dir.path().join("weights.csv"));
    assert_eq!(header[..2], ["theta", "theta_over_pi"]);
    assert_eq!(rows.len(), 11);
    for r in &rows {
        let w = component_weights(r[0]);
        for (got, want) in r[2..].iter().zip(w) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    let (header, rows) = read_table(&dir.path().join("exponents.csv"));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    for name in ["ramsey_like", "half_period", "hahn_like"] {
        let (num, closed) = (col(name), col(&format!("closed_{name}")));
        for r in &rows {
            assert!(
                (r[num] - r[closed]).abs() <= 1e-4 * r[closed].abs() + 1e-12,
                "{name} {r:?}"
            );
        }
    }
}

#[test]
fn simulate_output_feeds_fit_and_scan() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    let args = [
        "simulate",
        "--sequence",
        "hahn-ramsey",
        "--lambda",
        "2.0",
        "--gamma",
        "0.8",
        "--tau-count",
        "80",
    ];
    assert!(hrsim(&gen, &args).status.success());
    let data = gen.join("hahn-ramsey_analytic.csv");

    let fit_dir = dir.path().join("fit");
    let out = hrsim(&fit_dir, &["fit", "--data", data.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(fit_dir.join("fit.json")).unwrap();
    assert!(text.contains("tau_c"));

    let scan_dir = dir.path().join("scan");
    let out = hrsim(
        &scan_dir,
        &[
            "scan",
            "--sequence",
            "hahn-ramsey",
            "--data",
            data.to_str().unwrap(),
            "--lambda-min",
            "1.0",
            "--lambda-max",
            "3.0",
            "--lambda-count",
            "5",
            "--gamma-min",
            "0.4",
            "--gamma-max",
            "1.2",
            "--gamma-count",
            "5",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = read_table(&scan_dir.join("scan_0.csv"));
    let best = rows
        .iter()
        .filter(|r| r[2].is_finite())
        .min_by(|a, b| a[2].total_cmp(&b[2]))
        .unwrap();
    assert!(
        (best[0] - 2.0).abs() < 1e-12 && (best[1] - 0.8).abs() < 1e-12,
        "{best:?}"
    );
}

#[test]
fn cycles_unit_scales_angular_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let common = ["simulate", "--sequence", "ramsey", "--lambda", "2.5"];
    let mut rad: Vec<&str> = common.to_vec();
    let (g, d) = ((2.0 * PI * 0.1).to_string(), (2.0 * PI * 0.5).to_string());
    rad.extend(["--gamma", &g, "--detuning", &d]);
    let mut cyc: Vec<&str> = vec!["--freq-unit", "cycles"];
    cyc.extend(common);
    cyc.extend(["--gamma", "0.1", "--detuning", "0.5"]);
    assert!(hrsim(&dir.path().join("r"), &rad).status.success());
    assert!(hrsim(&dir.path().join("c"), &cyc).status.success());
    let (_, a) = read_table(&dir.path().join("r/ramsey_analytic.csv"));
    let (_, b) = read_table(&dir.path().join("c/ramsey_analytic.csv"));
    for (x, y) in a.iter().zip(&b) {
        assert!((x[1] - y[1]).abs() < 1e-12);
    }
}
