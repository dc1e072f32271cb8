use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eo_transducer::fitting::{avoided_crossing_model, SplitModeKnown};
use eo_transducer::params::SystemParams;
use eo_transducer::units::mhz;
use serde_json::Value;

fn eotx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eotx")).args(args).output().unwrap()
}

fn scenario(name: &str) -> String {
    format!("{}/scenarios/{name}.toml", env!("CARGO_MANIFEST_DIR"))
}

fn prefix(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn result(path: PathBuf) -> Value {
    let v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v["result"].clone()
}

#[test]
fn empty_config_names_missing_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.toml");
    fs::write(&cfg, "").unwrap();
    let out = eotx(&["--config", cfg.to_str().unwrap(), "--out", &prefix(dir.path(), "x")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("run.kind"), "{}", stderr(&out));

    let out = eotx(&["simulate", "--config", cfg.to_str().unwrap(), "--out", &prefix(dir.path(), "x")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("system.signal.kappa"), "{}", stderr(&out));
}

#[test]
fn bad_override_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = eotx(&[
        "--config",
        &scenario("spectrum"),
        "--set",
        "system.microwave.eta=1.7",
        "--out",
        &prefix(dir.path(), "s"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("system.microwave"), "{}", stderr(&out));

    let out = eotx(&["--config", &scenario("spectrum"), "--set", "spectrum.points=[1]", "--out", &prefix(dir.path(), "s")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("spectrum.points"));
}

#[test]
fn unstable_step_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = eotx(&[
        "--config",
        &scenario("fig1"),
        "--set",
        "simulate.dt=\"40 ns\"",
        "--set",
        "simulate.substeps=1",
        "--out",
        &prefix(dir.path(), "u"),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn reruns_are_identical_apart_from_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let strip = |p: PathBuf| -> String {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.contains("generated"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    for (name, files) in [
        ("spectrum", vec!["scattering.csv", "summary.json"]),
        ("fig2c", vec!["trajectory.csv", "efficiency.csv", "summary.json"]),
    ] {
        for run in ["a", "b"] {
            let out = eotx(&["--config", &scenario(name), "--out", &prefix(dir.path(), &format!("{name}{run}"))]);
            assert!(out.status.success(), "{}", stderr(&out));
        }
        for f in files {
            let a = strip(dir.path().join(format!("{name}a_{f}")));
            let b = strip(dir.path().join(format!("{name}b_{f}")));
            assert_eq!(a, b, "{name} {f}");
            let generated = fs::read_to_string(dir.path().join(format!("{name}a_{f}")))
                .unwrap()
                .lines()
                .filter(|l| l.contains("generated"))
                .count();
            assert_eq!(generated, 1);
        }
    }
}

#[test]
fn fig1_rise_time() {
    let dir = tempfile::tempdir().unwrap();
    for dir_name in ["e2o", "o2e"] {
        let p = prefix(dir.path(), dir_name);
        let out = eotx(&["--config", &scenario("fig1"), "--set", &format!("simulate.direction={dir_name}"), "--out", &p]);
        assert!(out.status.success(), "{}", stderr(&out));
        let r = result(PathBuf::from(format!("{p}_summary.json")));
        let rise = r["rise_time_10_90"].as_f64().unwrap();
        assert!((rise / 85e-9 - 1.0).abs() < 0.1, "{dir_name}: {rise}");
        let csv = fs::read_to_string(format!("{p}_trajectory.csv")).unwrap();
        assert!(csv.lines().any(|l| l.starts_with("t,a_p_re")));
    }
}

#[test]
fn fig2c_overshoot() {
    let dir = tempfile::tempdir().unwrap();
    let p = prefix(dir.path(), "o");
    assert!(eotx(&["--config", &scenario("fig2c"), "--out", &p]).status.success());
    let r = result(PathBuf::from(format!("{p}_summary.json")));
    let peak = r["peak_efficiency"].as_f64().unwrap();
    let plateau = r["plateau_efficiency"].as_f64().unwrap();
    assert!(peak > plateau && (peak - 0.30).abs() < 0.05, "{peak} {plateau}");
}

#[test]
fn small_landscape_with_mark() {
    let dir = tempfile::tempdir().unwrap();
    let p = prefix(dir.path(), "l");
    let out = eotx(&[
        "--config",
        &scenario("fig4c"),
        "--set",
        "landscape.c.points=3",
        "--set",
        "landscape.n_e.points=4",
        "--threads",
        "2",
        "--out",
        &p,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(format!("{p}_landscape.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "c,n_e,n_in_oe");
    assert_eq!(rows.len(), 1 + 12);
    let r = result(PathBuf::from(format!("{p}_summary.json")));
    assert!(r["marked"]["value"].as_f64().unwrap() > 0.0);
    assert!(r["failures"].as_array().unwrap().is_empty());
}

#[test]
fn calibration_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = prefix(dir.path(), "c");
    assert!(eotx(&["--config", &scenario("calibrate"), "--out", &p]).status.success());
    let r = result(PathBuf::from(format!("{p}_calibration.json")));
    for (k, v) in [("beta1_db", -6.33), ("beta2_db", 18.63), ("beta3_db", -74.92)] {
        assert!((r[k].as_f64().unwrap() - v).abs() < 0.01, "{k}");
    }
    assert!((r["n_add"].as_f64().unwrap() - 34.3).abs() < 0.1);
    assert!((r["eta_tot"].as_f64().unwrap() - 0.114).abs() < 1e-3);
}

#[test]
fn fit_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let sys = SystemParams::high_cooperativity();
    let known = SplitModeKnown::from_system(&sys);
    let mut csv = String::from("# x_unit: MHz/2pi\nfrequency,reflection\n");
    for k in 0..801 {
        let f = -100.0 + 240.0 * k as f64 / 800.0;
        let y = avoided_crossing_model(mhz(f), sys.j, sys.tm.kappa(), sys.stokes.delta, sys.tm.delta, &known);
        csv.push_str(&format!("{f},{y}\n"));
    }
    fs::write(dir.path().join("split.csv"), csv).unwrap();
    let cfg = dir.path().join("fit.toml");
    fs::write(&cfg, "[run]\nkind = \"fit\"\n[system]\npreset = \"high\"\n[fit]\nkind = \"avoided_crossing\"\ndata = \"split.csv\"\n").unwrap();
    let p = prefix(dir.path(), "f");
    let out = eotx(&["--config", cfg.to_str().unwrap(), "--out", &p]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = result(PathBuf::from(format!("{p}_fit.json")));
    let j = r["parameters"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["name"] == "j")
        .unwrap()["value"]
        .as_f64()
        .unwrap();
    assert!((j / sys.j - 1.0).abs() < 1e-4);

    fs::write(&cfg, "[run]\nkind = \"fit\"\n[fit]\nkind = \"optical_dip\"\ndata = \"missing.csv\"\n[system]\npreset = \"high\"\n").unwrap();
    let out = eotx(&["--config", cfg.to_str().unwrap(), "--out", &p]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("fit.data"));
}
