use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wispi::harness::{self, ExperimentConfig, RunOptions};

fn wispi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wispi")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wispi-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL_EKI: &str = r#"{"experiment": "eki", "h": 0.0625, "j_list": [10, 20, 40, 80], "seeds": 4}"#;

#[test]
fn run_writes_artifacts_and_exits_zero() {
    let dir = scratch("ok");
    let cfg = write_config(&dir, r#"{"experiment": "fem-prior"}"#);
    let out = dir.join("out");
    let res = wispi(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--check"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("fem-prior.csv")).unwrap();
    assert!(csv.starts_with("h,n,eps_C\n"), "{csv}");
    let dat = fs::read_to_string(out.join("fem-prior.dat")).unwrap();
    assert!(dat.starts_with("# "));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("fem-prior.json")).unwrap()).unwrap();
    for key in ["experiment", "config", "slopes", "checks", "passed", "metadata"] {
        assert!(summary.get(key).is_some(), "missing key {key}: {summary}");
    }
    assert_eq!(summary["passed"], true);
    assert!(summary["slopes"]["eps_C"]["slope"].is_number());
}

#[test]
fn fit_reads_a_written_csv() {
    let dir = scratch("fit");
    let cfg = write_config(&dir, r#"{"experiment": "fem-prior"}"#);
    let out = dir.join("out");
    assert_eq!(wispi(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.code(), Some(0));
    let csv = out.join("fem-prior.csv");
    let res = wispi(&["fit", "--csv", csv.to_str().unwrap(), "--xcol", "h", "--ycol", "eps_C"]);
    assert_eq!(res.status.code(), Some(0));
    let fit: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    let slope = fit["slope"].as_f64().unwrap();
    assert!((1.7..=2.3).contains(&slope), "{slope}");

    let missing = wispi(&["fit", "--csv", csv.to_str().unwrap(), "--ycol", "nope"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn config_errors_exit_one() {
    let dir = scratch("config");
    for body in [
        r#"{"experiment": "fem-prior", "h_list": []}"#,
        r#"{"experiment": "fem-prior", "h_lst": [0.1]}"#,
        r#"{"experiment": "no-such-thing"}"#,
        "not json",
    ] {
        let cfg = write_config(&dir, body);
        let res = wispi(&["run", "--config", &cfg, "--out", dir.join("out").to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(1), "{body}: {}", String::from_utf8_lossy(&res.stderr));
        assert!(!dir.join("out").exists(), "no output before validation");
    }
    let res = wispi(&["run", "--config", dir.join("absent.json").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn computation_errors_exit_two() {
    let dir = scratch("compute");
    // two reference modes cannot resolve the prior
    let cfg = write_config(&dir, r#"{"experiment": "fem-prior", "n_ref": 2}"#);
    let res = wispi(&["run", "--config", &cfg, "--out", dir.join("out").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));

    let cfg = write_config(&dir, r#"{"experiment": "fem-prior"}"#);
    let res = wispi(&["run", "--config", &cfg, "--threads", "0", "--out", dir.join("o2").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn failed_acceptance_exits_three_only_with_check() {
    let dir = scratch("accept");
    let cfg = write_config(&dir, r#"{"experiment": "fem-prior", "acceptance": {"min": 5.0, "max": 6.0}}"#);
    let out = dir.join("out");
    let res = wispi(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let res = wispi(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--check"]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stdout).contains("[FAIL]"));
}

#[test]
fn csv_is_identical_across_reruns_and_thread_counts() {
    let dir = scratch("determinism");
    let cfg = write_config(&dir, SMALL_EKI);
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "1", "4"].into_iter().enumerate() {
        let out = dir.join(format!("out{i}"));
        let res = wispi(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert_eq!(res.status.code(), Some(0));
        outputs.push(fs::read(out.join("eki.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn harness_results_do_not_depend_on_the_pool() {
    let cfg: ExperimentConfig = serde_json::from_str(r#"{"experiment": "map-linear"}"#).unwrap();
    let a = harness::run(&cfg, &RunOptions { threads: Some(1), spectral_cutoff: None }).unwrap();
    let b = harness::run(&cfg, &RunOptions { threads: Some(3), spectral_cutoff: None }).unwrap();
    assert_eq!(a.bundle.csv().unwrap(), b.bundle.csv().unwrap());
    assert!(a.bundle.passed());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let cfg = ExperimentConfig::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.validate().unwrap();
            count += 1;
        }
    }
    assert_eq!(count, 9);
}
