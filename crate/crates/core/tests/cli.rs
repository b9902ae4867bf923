use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mdcp::bench::{self, CaseStudyOptions, EnsembleReport};
use mdcp::config::{ExperimentConfig, Topology};
use mdcp::dynamics::SpectralReport;
use mdcp::graph::RandomModel;
use mdcp::predictor::PredictionJson;

const SMALL_TOML: &str = r#"
s = 2
eps = 0.1
omega = -0.3
gains = [1.0, 2.0]
horizon = 120
seed = 3
agents = [0, 2]

[topology]
source = "random"
model = "ER"
rho = 0.5
n = 6

[predictor]
scan_columns = 40
"#;

fn mdcp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdcp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn toml_and_json_configs_agree() {
    let from_toml = ExperimentConfig::parse(SMALL_TOML).unwrap();
    assert_eq!(
        from_toml.topology,
        Some(Topology::Random {
            model: RandomModel::Er { rho: 0.5 },
            n: 6
        })
    );
    assert_eq!(from_toml.predictor.scan_columns, Some(40));
    let json = serde_json::to_string(&from_toml).unwrap();
    assert_eq!(ExperimentConfig::parse(&json).unwrap(), from_toml);
}

#[test]
fn invalid_config_is_rejected() {
    assert!(ExperimentConfig::parse("s = 2\ngains = [1.0]\n").is_err());
    assert!(ExperimentConfig::parse("{\"eps\": -1}").is_err());
}

#[test]
fn simulate_writes_trajectory_and_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL_TOML);
    let out = dir.path().join("traj.csv");
    let spectrum = dir.path().join("spectrum.json");
    let status = mdcp(&[
        "simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--spectral",
        spectrum.to_str().unwrap(),
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().next(), Some("k,agent,order,value"));
    assert_eq!(csv.lines().count(), 1 + 121 * 6 * 2);
    let report: SpectralReport = serde_json::from_str(&fs::read_to_string(&spectrum).unwrap()).unwrap();
    assert_eq!(report.order, 2);
    assert_eq!(report.eigenvalues.len(), 12);
}

#[test]
fn seed_override_changes_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL_TOML);
    let run = |seed: &str| {
        let o = mdcp(&["simulate", "--config", &cfg, "--seed", seed]);
        assert!(o.status.success());
        String::from_utf8(o.stdout).unwrap()
    };
    assert_eq!(run("3"), run("3"));
    assert_ne!(run("3"), run("4"));
}

#[test]
fn predict_writes_one_record_per_agent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL_TOML);
    let out = dir.path().join("pred.json");
    let res = dir.path().join("res.csv");
    let o = mdcp(&[
        "predict", "--config", &cfg, "--out", out.to_str().unwrap(), "--residuals",
        res.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let preds: Vec<PredictionJson> = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(preds.iter().map(|p| p.agent).collect::<Vec<_>>(), vec![0, 2]);
    assert!(preds.iter().all(|p| p.consensus.len() == 2));
    let table = fs::read_to_string(&res).unwrap();
    assert_eq!(table.lines().next(), Some("agent,k,simulated,predicted,abs_error"));
}

#[test]
fn adjacency_file_topology() {
    let dir = tempfile::tempdir().unwrap();
    let adj = write(dir.path(), "g.csv", "3\n0,0,1\n1,0,0\n0,1,0\n");
    let cfg = format!(
        "{{\"s\": 1, \"gains\": [1.0], \"omega\": -0.4, \"horizon\": 5, \
         \"x0\": [1.0, 2.0, 6.0], \"topology\": {{\"source\": \"file\", \"path\": {adj:?}}}}}"
    );
    let cfg = write(dir.path(), "run.json", &cfg);
    let o = mdcp(&["simulate", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(csv.lines().nth(1), Some("0,0,1,1"));
}

#[test]
fn missing_config_exits_with_error() {
    let o = mdcp(&["simulate", "--config", "/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reproduce_exit_code_tracks_checks() {
    let expected = bench::reproduce_case_study(&CaseStudyOptions::default()).unwrap();
    let o = mdcp(&["reproduce-paper"]);
    assert_eq!(o.status.success(), expected.all_pass());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), expected.table());
}

#[test]
fn bench_writes_report_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bench.toml",
        "seed = 5\n[ensemble]\nagents = 8\nmodels = [{ model = \"ER\", rho = 0.5 }, { model = \"BA\", m = 2 }]\n",
    );
    let report = dir.path().join("report.json");
    let summary = dir.path().join("summary.csv");
    let o = mdcp(&[
        "bench", "--config", &cfg, "--networks", "2", "--out", report.to_str().unwrap(),
        "--summary", summary.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let reports: Vec<EnsembleReport> =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(reports.len(), 2);
    assert!(reports.iter().all(|r| r.networks == 2 && r.agents == 8));
    let csv = fs::read_to_string(&summary).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("model,param,M_bar,Mprime_bar"));
    assert_eq!(lines.count(), 2);
}
