use std::path::Path;
use std::process::Command;

use imgep::harness::experiment::report_paths;
use imgep::harness::plot::{interest_plot, ratio_plot, scatter_plot, Frame};
use imgep::harness::*;

const SMALL: &str = r#"{"algorithms":["RPE","MGE"],"seeds":[0,1,2],"n_episodes":150,"n_bootstrap":20}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_imgep"))
}

fn run_small(dir: &Path) -> (ExperimentConfig, Vec<ExperimentReport>) {
    let cfg = ExperimentConfig::from_json(SMALL).unwrap();
    let reports = run_experiment(&cfg, dir).unwrap();
    (cfg, reports)
}

#[test]
fn matrix_writes_one_log_per_trial() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, reports) = run_small(dir.path());
    let mut logs: Vec<String> = std::fs::read_dir(dir.path().join("histories"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    logs.sort();
    assert_eq!(logs.len(), 6);
    assert!(logs.contains(&"MGE_engineered-pair_seed2.jsonl".to_string()));
    assert!(dir.path().join("summary.csv").exists());

    let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 150);
    assert_eq!(csv.lines().next(), Some("condition,episode,mean,std,n_trials"));

    // the summary is reproducible from the logs alone
    let rebuilt = reports_from_logs(&cfg, dir.path()).unwrap();
    assert_eq!(rebuilt, reports);
    assert_eq!(summary_csv(&rebuilt), csv);

    // and bit-identical on a rerun
    let again = tempfile::tempdir().unwrap();
    run_small(again.path());
    assert_eq!(std::fs::read_to_string(again.path().join("summary.csv")).unwrap(), csv);
}

#[test]
fn plots_reflect_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let (_, reports) = run_small(dir.path());
    let rpe = reports.iter().find(|r| r.condition.starts_with("RPE")).unwrap();
    let mge = reports.iter().find(|r| r.condition.starts_with("MGE")).unwrap();
    assert!(interest_plot(rpe).unwrap().is_none());
    let svg = interest_plot(mge).unwrap().unwrap();
    assert_eq!(svg.matches(r#"class="interest""#).count(), 2);

    let written = emit_plots(&report_paths(dir.path(), &reports), &dir.path().join("plots")).unwrap();
    // 2 ratio + 1 interest + 6 scatter + 1 comparison
    assert_eq!(written.len(), 10);

    let t = &mge.trials[0];
    let scatter = scatter_plot(&mge.condition, t);
    assert_eq!(scatter.matches(r#"class="ball""#).count(), 150);
}

#[test]
fn constant_ratio_draws_a_flat_line() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mut reports) = run_small(dir.path());
    let mut r = reports.remove(0);
    for t in &mut r.trials {
        t.ratio = vec![0.5; 11];
    }
    r.ratio_mean = vec![0.5; 11];
    r.ratio_std = vec![0.0; 11];
    let svg = ratio_plot(&[&r]).unwrap();
    let line = svg.lines().find(|l| l.contains(r#"class="mean""#)).unwrap();
    let d = line.split(r#" d=""#).nth(1).unwrap().split('"').next().unwrap();
    let expected_y = Frame { x_max: 10.0, y_min: 0.0, y_max: 1.0 }.y(0.5);
    assert_eq!(expected_y, 190.0);
    let ys: Vec<f64> = d
        .split_whitespace()
        .map(|p| p.trim_start_matches(['M', 'L']).split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(ys.len(), 11);
    assert!(ys.iter().all(|y| *y == expected_y));
}

#[test]
fn missing_series_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mut reports) = run_small(dir.path());
    let mut r = reports.remove(1);
    r.trials[0].interest.clear();
    let err = interest_plot(&r).unwrap_err().to_string();
    assert!(err.contains("missing series interest"), "{err}");
    r.ratio_mean.clear();
    assert!(ratio_plot(&[&r]).unwrap_err().to_string().contains("ratio_mean"));
}

#[test]
fn cli_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let ds = d.join("ds.bin");
    let out = bin().args(["gen-dataset", "--n", "3", "--seed", "1", "--out"]).arg(&ds).output().unwrap();
    assert!(out.status.success());
    assert_eq!(imgep::sim::read_dataset(&ds).unwrap().header.n, 3);

    let cfg = d.join("cfg.json");
    std::fs::write(&cfg, r#"{"algorithms":["RGE"],"seeds":[4],"n_episodes":60,"n_bootstrap":10}"#).unwrap();
    let out = bin().args(["run", "--config"]).arg(&cfg).arg("--out-dir").arg(d.join("run")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("RGE_engineered-pair"));

    let report = d.join("run/report_RGE_engineered-pair.json");
    let out = bin().arg("plot").arg(&report).arg("--out-dir").arg(d.join("plots")).output().unwrap();
    assert!(out.status.success());
    assert!(d.join("plots/RGE_engineered-pair_interest.svg").exists());

    let out = bin().arg("eval").arg(d.join("run/histories/RGE_engineered-pair_seed4.jsonl")).output().unwrap();
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().count(), 61);
    let last: f64 = csv.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    let rep = ExperimentReport::load(&report).unwrap();
    assert_eq!(last, rep.trials[0].final_ratio());
}

#[test]
fn cli_rejects_bad_config_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"algorithms":["MGE"],"seeds":[0],"n_episodes":10,"noise":0.2}"#).unwrap();
    let out = bin().args(["run", "--config"]).arg(&cfg).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error:") && err.contains("noise"), "{err}");
}
