use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use levylab_cli::{catalog, ExperimentConfig, VERDICTS_HEADER};

const BIN: &str = env!("CARGO_BIN_EXE_levylab");

fn levylab(args: &[&str], out: Option<&Path>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("LEVYLAB_OUTPUT_DIR");
    if let Some(dir) = out {
        cmd.env("LEVYLAB_OUTPUT_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("experiment.toml");
    fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = r#"seed = 7
n_paths = 200
x0 = [0.0]
write_paths = true
write_solutions = true

[driver]
kind = "compound_poisson"
rate = 5.0
drift = [0.3]
jumps = { law = "uniform", low = -1.0, high = 1.0 }

[sigma]
kind = "2+sin"

[grid]
t_max = 1.0
theta = 0.5
steps = 16

[[verifier]]
name = "estimate_limit"
scaling = { kind = "power", p = 1.0 }

[[verifier]]
name = "in_probability"
scaling = { kind = "power", p = 1.0 }
v = 0.3
deltas = [0.05, 0.1]
"#;

#[test]
fn list_is_sorted_and_stable() {
    let a = levylab(&["list"], None);
    let b = levylab(&["list"], None);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text, catalog());
    for name in ["brownian", "compound_poisson", "stable", "truncated_exponential", "coupling_gap"] {
        assert!(text.lines().any(|l| l.trim() == name), "{name} missing");
    }
    let mut section: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.ends_with(':') {
            let mut sorted = section.clone();
            sorted.sort_unstable();
            assert_eq!(section, sorted);
            section.clear();
        } else {
            section.push(line.trim());
        }
    }
}

#[test]
fn version_prints_crate_version() {
    let out = levylab(&["version"], None);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), format!("levylab {}", env!("CARGO_PKG_VERSION")));
}

#[test]
fn run_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out_dir = tmp.path().join("out");
    let out = levylab(&["run", cfg.to_str().unwrap()], Some(&out_dir));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["config"]["seed"], 7);
    assert_eq!(json["results"].as_array().unwrap().len(), 2);
    assert_eq!(json["results"][0]["report"]["verdict"]["kind"], "converges_to");
    let text = fs::read_to_string(out_dir.join("report.json")).unwrap();
    assert!(!text.contains("timestamp") && !text.contains("date"));

    let verdicts = fs::read_to_string(out_dir.join("verdicts.csv")).unwrap();
    let mut lines = verdicts.lines();
    assert_eq!(lines.next(), Some(VERDICTS_HEADER));
    assert_eq!(lines.next(), Some("estimate_limit#0,converges_to,true"));
    assert_eq!(lines.next(), Some("in_probability#1,pass,true"));

    let csv = fs::read_to_string(out_dir.join("00_estimate_limit.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(levylab::lab::TIME_CSV_HEADER));
    assert_eq!(csv.lines().count(), 1 + 17);
    assert!(out_dir.join("01_in_probability.csv").exists());

    let paths = fs::read_to_string(out_dir.join("paths.csv")).unwrap();
    assert!(paths.starts_with(levylab::paths::PATH_CSV_HEADER));
    assert!(paths.lines().count() > 200);
    assert!(out_dir.join("solutions.csv").exists());
}

#[test]
fn failing_verifier_exits_one_and_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("v = 0.3", "v = 1.3"));
    let out = levylab(&["run", cfg.to_str().unwrap()], Some(&tmp.path().join("out")));
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("in_probability#1"), "{err}");
    assert!(!err.contains("estimate_limit#0"), "{err}");
}

#[test]
fn verifier_errors_count_as_failures() {
    // a limsup needs at least 20 grid times
    let tmp = tempfile::tempdir().unwrap();
    let body = SMALL.replace("name = \"in_probability\"", "name = \"limsup\"\ntarget = \"driver\"")
        .replace("v = 0.3\ndeltas = [0.05, 0.1]\n", "");
    let cfg = write_config(tmp.path(), &body);
    let out_dir = tmp.path().join("out");
    let out = levylab(&["run", cfg.to_str().unwrap()], Some(&out_dir));
    assert_eq!(out.status.code(), Some(1));
    let text = fs::read_to_string(out_dir.join("report.json")).unwrap();
    assert!(text.contains("need at least 20 grid times"), "{text}");
}

fn config_error(body: &str) -> String {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), body);
    let out = levylab(&["run", cfg.to_str().unwrap()], Some(&tmp.path().join("out")));
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!tmp.path().join("out").exists());
    String::from_utf8(out.stderr).unwrap()
}

#[test]
fn config_errors_exit_two_with_field_and_line() {
    let err = config_error(&SMALL.replace("n_paths = 200", "n_paths = 1"));
    assert!(err.contains("`n_paths`") && err.contains("line 2"), "{err}");

    let err = config_error(&SMALL.replace("seed = 7\n", ""));
    assert!(err.contains("seed"), "{err}");

    let err = config_error(&SMALL.replace("kind = \"compound_poisson\"", "kind = \"gamma\""));
    assert!(err.contains("gamma") && err.contains("line"), "{err}");

    let err = config_error(&SMALL.replace("theta = 0.5", "theta = 1.5"));
    assert!(err.contains("`grid`") && err.contains("line 16"), "{err}");

    let err = config_error(&SMALL.replace("x0 = [0.0]", "x0 = [0.0, 1.0]"));
    assert!(err.contains("`x0`") && err.contains("line 3"), "{err}");

    let err = config_error(&SMALL.replace("deltas = [0.05, 0.1]", "deltas = [0.05, 0.1]\ncolour = 3"));
    assert!(err.contains("colour"), "{err}");

    let err = config_error("seed = \n");
    assert!(err.contains("line 1"), "{err}");
}

#[test]
fn missing_config_file_exits_two() {
    let out = levylab(&["run", "/nonexistent/levylab.toml"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_dir_from_config_and_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let from_cfg = tmp.path().join("from_config");
    let body = format!("output_dir = {:?}\n{SMALL}", from_cfg.to_str().unwrap());
    let cfg = write_config(tmp.path(), &body);
    assert!(levylab(&["run", cfg.to_str().unwrap()], None).status.success());
    assert!(from_cfg.join("report.json").exists());
    let from_env = tmp.path().join("from_env");
    assert!(levylab(&["run", cfg.to_str().unwrap()], Some(&from_env)).status.success());
    assert!(from_env.join("report.json").exists());
    // execution settings do not leak into the report
    assert_eq!(
        fs::read(from_cfg.join("report.json")).unwrap(),
        fs::read(from_env.join("report.json")).unwrap()
    );
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for workers in [1, 3] {
        let body = format!("workers = {workers}\n{SMALL}");
        let cfg = write_config(tmp.path(), &body);
        let dir = tmp.path().join(format!("w{workers}"));
        assert!(levylab(&["run", cfg.to_str().unwrap()], Some(&dir)).status.success());
        reports.push(fs::read(dir.join("report.json")).unwrap());
        reports.push(fs::read(dir.join("paths.csv")).unwrap());
    }
    assert_eq!(reports[0], reports[2]);
    assert_eq!(reports[1], reports[3]);
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for dir in [root.clone(), root.join("acceptance")] {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.extension().is_some_and(|x| x == "toml") {
                ExperimentConfig::parse(&fs::read_to_string(&p).unwrap()).unwrap_or_else(|e| panic!("{p:?}: {e}"));
                n += 1;
            }
        }
    }
    assert!(n >= 11);
}
