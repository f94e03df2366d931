use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hopf-cl"))
}

fn run(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut c = bin();
    c.args(args).arg("--out").arg(out);
    if let Some(p) = config {
        c.arg("--config").arg(p);
    }
    c.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

#[test]
fn spectrum_has_the_expected_apexes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[system]\nmodel = \"toy\"\neps = 0.1\n");
    let o = run(&["spectrum"], Some(&cfg), &dir.path().join("out"));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("out/dispersion.csv")).unwrap();
    let (mut apex1, mut apex0) = (f64::MIN, f64::MIN);
    for rec in rdr.records() {
        let r = rec.unwrap();
        let j: i32 = r[1].parse().unwrap();
        let re: f64 = r[2].parse().unwrap();
        match j {
            1 => apex1 = apex1.max(re),
            0 => apex0 = apex0.max(re),
            _ => {}
        }
    }
    assert!((apex1 - 0.01).abs() < 1e-12, "{apex1}");
    assert!(apex0.abs() < 1e-12, "{apex0}");
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        "deltas = []",
        "deltas = [0.1, 0.2]",
        "eps = 0.3",
        "theta = 9",
        "[amplitude]\ncoefficients = \"missing.toml\"",
        "no_such_key = true",
    ];
    for (i, text) in cases.iter().enumerate() {
        let cfg = write_config(dir.path(), &format!("c{i}.toml"), text);
        let o = run(&["approximation"], Some(&cfg), &dir.path().join("out"));
        assert_eq!(code(&o), 2, "{text}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = run(&[], None, &dir.path().join("out"));
    assert_eq!(code(&o), 2);
    let o = run(&["spectrum", "--subcommand", "energy"], None, &dir.path().join("out"));
    assert_eq!(code(&o), 2);
    let o = run(&["spectrum", "--workers", "0"], None, &dir.path().join("out"));
    assert_eq!(code(&o), 2);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[simulate]\nt_end = 2.0\n[grid]\nn_points = 64\n");
    let read = |d: &str| std::fs::read(dir.path().join(d).join("rd_series.csv")).unwrap();
    for (d, seed) in [("a", "4"), ("b", "4"), ("c", "5")] {
        let o = run(&["simulate-rd", "--seed", seed], Some(&cfg), &dir.path().join(d));
        assert_eq!(code(&o), 0);
    }
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    let ma = std::fs::read(dir.path().join("a/manifest.json")).unwrap();
    let mb = std::fs::read(dir.path().join("b/manifest.json")).unwrap();
    assert_eq!(ma, mb);
}

#[test]
fn manifest_lists_every_file_with_its_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "c.toml", "[amplitude]\nt_end = 1.0\n");
    let o = bin()
        .args(["--subcommand", "simulate-amplitude", "--out"])
        .arg(&out)
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let listed: Vec<String> = m["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap().to_string()).collect();
    let mut on_disk: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().to_string())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    assert_eq!(listed, on_disk);
    for f in m["files"].as_array().unwrap() {
        let bytes = std::fs::read(out.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
    }
    let text = m["config"].as_str().unwrap();
    assert_eq!(m["config_sha256"].as_str().unwrap(), hex::encode(Sha256::digest(text.as_bytes())));
}

#[test]
fn coefficient_condition_violation_is_an_assertion_failure() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "coeffs.toml",
        "a0 = [1.0, 0.0]\na1 = 1.0\na2 = -2.0\na3 = [1.0, 0.5]\nb0 = 1.0\nb1 = 1.0\n",
    );
    let cfg = write_config(dir.path(), "c.toml", "[amplitude]\ncoefficients = \"coeffs.toml\"\n");
    let o = run(&["global-existence"], Some(&cfg), &dir.path().join("out"));
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn single_value_sweep_equals_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "[simulate]\nt_end = 1.0\n[grid]\nn_points = 64\n[sweep]\nbase = \"simulate-rd\"\nparameter = \"seed\"\nvalues = [7.0]\n",
    );
    assert_eq!(code(&run(&["sweep"], Some(&cfg), &dir.path().join("s"))), 0);
    assert_eq!(code(&run(&["simulate-rd", "--seed", "7"], Some(&cfg), &dir.path().join("r"))), 0);
    for f in ["rd_series.csv", "rd_final_v.csv", "summary.json"] {
        let a = std::fs::read(dir.path().join("s/run_00").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("r").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn omega_sweep_traces_the_cubic_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "[spectrum]\nsamples = 40\n[sweep]\nbase = \"spectrum\"\nparameter = \"omega0\"\nvalues = [0.5, 1.0, 2.0, 4.0]\n",
    );
    let o = run(&["sweep", "--workers", "2"], Some(&cfg), &dir.path().join("s"));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("s/sweep.json")).unwrap()).unwrap();
    for e in s["runs"].as_array().unwrap() {
        let w = e["value"].as_f64().unwrap();
        let a3 = e["a3"].as_array().unwrap();
        assert_eq!(a3[0].as_f64().unwrap(), 1.0);
        assert!((a3[1].as_f64().unwrap() - 2.0 / (3.0 * w)).abs() < 1e-15);
        assert!((e["gamma3"].as_f64().unwrap() - 2.0 / (3.0 * w)).abs() < 1e-15);
    }
}

#[test]
fn delta_sweep_drives_the_approximation_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "t0 = 0.2\n[sweep]\nbase = \"approximation\"\nparameter = \"delta\"\nvalues = [0.2, 0.1]\n",
    );
    let o = run(&["sweep"], Some(&cfg), &dir.path().join("s"));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let s: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("s/sweep.json")).unwrap()).unwrap();
    assert!(s["slope"].as_f64().unwrap() >= 1.6);
}

#[test]
fn energy_run_reports_entry_into_the_ball() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[energy]\ntrajectories = 2\nt_end = 10.0\n");
    let o = run(&["energy"], Some(&cfg), &dir.path().join("e"));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("e/energy.json")).unwrap()).unwrap();
    for t in s["trajectories"].as_array().unwrap() {
        assert!(t["entry_time"].as_f64().is_some());
    }
}
