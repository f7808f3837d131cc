use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn netdiff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netdiff"))
        .args(args)
        .env_remove("NETDIFF_SEED")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, scenario: &str, seed: &str) {
    let o = netdiff(&["simulate", "--scenario", scenario, "--seed", seed, "--out", p(dir)]);
    assert!(o.status.success(), "{}", stderr(&o));
}

const QUICK: [&str; 8] = ["--iterations", "120", "--burn-in", "40", "--h-max", "3", "--r-max", "2"];

fn fit_test(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let nets = data.join("networks.csv");
    let groups = data.join("groups.csv");
    let blocks = data.join("blocks.csv");
    let mut args = vec![
        "fit-test", "--networks", p(&nets), "--groups", p(&groups), "--blocks", p(&blocks), "--out", p(out),
    ];
    args.extend(QUICK);
    args.extend(extra);
    netdiff(&args)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    simulate(&out, "scenario1-dependent", "4");
    let nets = fs::read_to_string(out.join("networks.csv")).unwrap();
    let rows: Vec<&str> = nets.lines().collect();
    assert_eq!(rows.len(), 50);
    assert!(rows.iter().all(|r| r.split(',').count() == 190));
    assert_eq!(fs::read_to_string(out.join("groups.csv")).unwrap().lines().count(), 50);
    assert_eq!(fs::read_to_string(out.join("truth.csv")).unwrap().lines().count(), 191);
    let manifest = read_json(&out.join("manifest.json"));
    for f in manifest["outputs"].as_array().unwrap() {
        assert!(Path::new(f.as_str().unwrap()).exists());
    }
}

#[test]
fn simulate_is_reproducible_and_honours_seed_env() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    simulate(&a, "scenario2", "9");
    simulate(&b, "scenario2", "9");
    let o = Command::new(env!("CARGO_BIN_EXE_netdiff"))
        .args(["simulate", "--scenario", "scenario2", "--out", p(&c)])
        .env("NETDIFF_SEED", "9")
        .output()
        .unwrap();
    assert!(o.status.success());
    for f in ["networks.csv", "groups.csv", "truth.csv", "scenario.json"] {
        let x = fs::read(a.join(f)).unwrap();
        assert_eq!(x, fs::read(b.join(f)).unwrap(), "{f}");
        assert_eq!(x, fs::read(c.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = netdiff(&["simulate", "--scenario", "scenario9", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scenario9"));

    let sim = dir.path().join("sim");
    simulate(&sim, "scenario1-independent", "1");
    let o = netdiff(&["simulate", "--scenario", "scenario1-independent", "--out", p(&sim)]);
    assert_eq!(o.status.code(), Some(2), "refuses to overwrite");
    let o = netdiff(&["simulate", "--scenario", "scenario1-independent", "--out", p(&sim), "--force"]);
    assert!(o.status.success());

    let nets = sim.join("networks.csv");
    let o = netdiff(&["fit-test", "--networks", p(&nets), "--out", p(&dir.path().join("f"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--groups"));
    let missing = dir.path().join("missing.csv");
    let o = netdiff(&["fit-test", "--networks", p(&nets), "--groups", p(&missing), "--out", p(&dir.path().join("f"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--groups"));

    let o = netdiff(&["study", "--preset", "nope", "--out", p(&dir.path().join("s"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = netdiff(&["--threads", "0", "diagnose", "--chains", p(&sim), "--out", p(&dir.path().join("d.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validation_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let nets = dir.path().join("n.csv");
    let groups = dir.path().join("g.csv");
    fs::write(&nets, "1,0,1\n0,0,0\n").unwrap();
    fs::write(&groups, "1\n3\n").unwrap();
    let o = netdiff(&["fit-test", "--networks", p(&nets), "--groups", p(&groups), "--out", p(&dir.path().join("f"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!stderr(&o).is_empty());
}

#[test]
fn fit_test_predict_diagnose_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, "scenario1-dependent", "2");
    let fit = dir.path().join("fit");
    let o = fit_test(&sim, &fit, &["--chains", "2", "--seed", "5", "--fdr-target", "0.1"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let report = read_json(&fit.join("report.json"));
    let pr = report["global_pr_h1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&pr));
    assert_eq!(report["local_pr"].as_array().unwrap().len(), 190);
    assert!(report["baselines"]["manova"]["p_value"].is_number());
    assert!(report["bayes_fdr"].is_object());
    assert!(read_json(&fit.join("diagnostics.json"))["psrf_max"].is_number());
    let matrix = fs::read_to_string(fit.join("local_pr_matrix.csv")).unwrap();
    assert_eq!(matrix.lines().count(), 20);
    let predictive = fs::read_to_string(fit.join("predictive_summaries.csv")).unwrap();
    assert!(predictive.lines().count() > 1);

    let manifest = read_json(&fit.join("manifest.json"));
    assert_eq!(manifest["seeds"], serde_json::json!([5, 6]));
    assert_eq!(manifest["config"]["hyper"]["h_max"], 3);
    assert_eq!(manifest["input_hashes"].as_object().unwrap().len(), 3);
    for f in manifest["outputs"].as_array().unwrap() {
        assert!(Path::new(f.as_str().unwrap()).exists(), "{f}");
    }

    // identical inputs reproduce identical numbers
    let again = dir.path().join("again");
    assert!(fit_test(&sim, &again, &["--chains", "2", "--seed", "5", "--fdr-target", "0.1"]).status.success());
    assert_eq!(fs::read(fit.join("report.json")).unwrap(), fs::read(again.join("report.json")).unwrap());
    assert_eq!(
        fs::read(fit.join("chains/chain_1/rho.csv")).unwrap(),
        fs::read(again.join("chains/chain_1/rho.csv")).unwrap()
    );

    let pred = dir.path().join("pred.csv");
    let o = netdiff(&["predict", "--chains", p(&fit), "--networks", p(&sim.join("networks.csv")), "--out", p(&pred)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let body = fs::read_to_string(&pred).unwrap();
    assert_eq!(body.lines().count(), 51);
    for line in body.lines().skip(1) {
        let x: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&x));
    }
    assert!(dir.path().join("pred.manifest.json").exists());

    let diag = dir.path().join("diag.json");
    let o = netdiff(&["diagnose", "--chains", p(&fit), "--out", p(&diag)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_json(&diag), read_json(&fit.join("diagnostics.json")));
}

#[test]
fn predict_needs_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, "scenario1-dependent", "3");
    let fit = dir.path().join("fit");
    assert!(fit_test(&sim, &fit, &["--no-snapshots", "--no-baselines"]).status.success());
    let o = netdiff(&[
        "predict", "--chains", p(&fit), "--networks", p(&sim.join("networks.csv")), "--out", p(&dir.path().join("x.csv")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, "scenario1-dependent", "3");
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"hyper": {"r_max": 4, "z_var": 3.0}, "testing": {"epsilon": 0.2}}"#).unwrap();
    let fit = dir.path().join("fit");
    let o = fit_test(&sim, &fit, &["--config", p(&cfg), "--no-baselines"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = read_json(&fit.join("manifest.json"));
    // --r-max 2 from the flags wins over the file
    assert_eq!(m["config"]["hyper"]["r_max"], 2);
    assert_eq!(m["config"]["hyper"]["z_var"], 3.0);
    assert_eq!(m["config"]["hyper"]["mig_a1"], 2.5);
    assert_eq!(m["config"]["testing"]["epsilon"], 0.2);
    assert_eq!(read_json(&fit.join("report.json"))["epsilon"], 0.2);
}

fn study(preset: &str, out: &Path) -> Value {
    let mut args = vec!["study", "--preset", preset, "--replicates", "1", "--out", p(out)];
    args.extend(["--iterations", "60", "--burn-in", "20", "--h-max", "3", "--r-max", "2"]);
    let o = netdiff(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    read_json(&out.join("panels.json"))
}

#[test]
fn study_single_replicate_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let panels = study("table1-desk", &dir.path().join("t1"));
    let set = &panels.as_array().unwrap()[0];
    let by_method = |m: &str| set["panels"].as_array().unwrap().iter().find(|p| p["method"] == m).unwrap().clone();
    let mm = by_method("mixture-model");
    let fisher = by_method("fisher-bh");
    let manova = by_method("manova");
    // the eight cells of the error-rate table
    for cell in [
        &mm["global_type_i"], &mm["global_type_ii"], &mm["local_type_i"], &mm["local_type_ii"],
        &fisher["local_type_i"], &fisher["local_type_ii"], &manova["global_type_i"], &manova["global_type_ii"],
    ] {
        assert!(cell.is_number(), "{set}");
    }
    for cell in [&mm["global_type_i"], &mm["global_type_ii"], &mm["fwer"], &manova["global_type_i"], &manova["global_type_ii"]] {
        let x = cell.as_f64().unwrap();
        assert!(x == 0.0 || x == 1.0, "{x}");
    }
    assert!(dir.path().join("t1/records_n50.csv").exists());
}

#[test]
fn samplesize_sweep_has_three_panels() {
    let dir = tempfile::tempdir().unwrap();
    let panels = study("samplesize-sweep", &dir.path().join("sw"));
    let labels: Vec<&str> = panels.as_array().unwrap().iter().map(|s| s["label"].as_str().unwrap()).collect();
    assert_eq!(labels, ["n=20", "n=40", "n=100"]);
}
