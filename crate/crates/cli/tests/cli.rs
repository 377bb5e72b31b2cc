mod common;

use std::fs;

use common::*;
use tacarr_cli::data::{ingest_csv, read_lambda_csv, ColumnMap};

#[test]
fn ingest_reports_the_bad_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bars.csv");
    fs::write(
        &p,
        "Date,Open,High,Low,Close\n\
         2020-01-02,10,11,9,10.5\n\
         2020-01-03,10.5,11,10,10.2\n\
         2020-01-06,10.2,10.0,10.4,10.1\n\
         2020-01-07,10.1,10.6,9.9,10.3\n\
         2020-01-08,10.3,10.8,10.1,10.7\n",
    )
    .unwrap();
    let err = format!("{:#}", ingest_csv(&p, &ColumnMap::default()).unwrap_err());
    assert!(err.contains("line 4"), "{err}");
    assert!(err.contains("high 10 < low 10.4"), "{err}");

    let out = run(&["ranges", "-i", s(&p), "--output-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
    assert!(!dir.path().join("ranges.csv").exists());
}

#[test]
fn ingest_sorts_and_rejects_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bars.csv");
    fs::write(&p, "date,open,high,low,close\n2020/01/03,2,2,2,2\n2020-01-02,1,1.5,0.5,1\n").unwrap();
    let bars = ingest_csv(&p, &ColumnMap::default()).unwrap();
    assert!(bars[0].date < bars[1].date);
    fs::write(&p, "date,open,high,low,close\n2020-01-02,2,2,2,2\n2020-01-02,1,1.5,0.5,1\n").unwrap();
    let err = format!("{:#}", ingest_csv(&p, &ColumnMap::default()).unwrap_err());
    assert!(err.contains("duplicate date"), "{err}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["fit", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["fit"]).status.code(), Some(2));
    assert_eq!(run(&["fit", "-i", "/no/such/file.csv"]).status.code(), Some(2));
    let csv = write_csv(dir.path(), "d.csv", &simulated(&default_params(), 200, 1));
    assert_eq!(run(&["fit", "-i", s(&csv), "-m", "NOPE"]).status.code(), Some(2));
    assert_eq!(run(&["--jobs", "0", "ranges", "-i", s(&csv)]).status.code(), Some(2));
    // Too few observations for the parameter count is a runtime failure.
    let tiny = write_csv(dir.path(), "tiny.csv", &simulated(&default_params(), 12, 1));
    let out = run(&["fit", "-i", s(&tiny), "-m", "LNTACARR", "--output-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run(&["--help"]).status.success());
}

#[test]
fn ranges_match_the_generating_series() {
    let dir = tempfile::tempdir().unwrap();
    let truth = simulated(&default_params(), 300, 4);
    let csv = write_csv(dir.path(), "d.csv", &truth);
    run_ok(&["ranges", "-i", s(&csv), "--output-dir", s(dir.path())]);
    let mut rd = csv::Reader::from_path(dir.path().join("ranges.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 300);
    let h = rd.headers().unwrap().clone();
    let col = |n: &str| h.iter().position(|x| x == n).unwrap();
    for (row, o) in rows.iter().zip(&truth) {
        let ru: f64 = row[col("ru")].parse().unwrap();
        let rdn: f64 = row[col("rd")].parse().unwrap();
        let r: f64 = row[col("r")].parse().unwrap();
        assert!((ru - o.ru).abs() < 1e-9 && (rdn - o.rd).abs() < 1e-9);
        assert_eq!(r, ru + rdn);
    }
    let summary = read_json(&dir.path().join("summary.json"));
    assert!(summary.to_string().contains("\"n\":300") || summary.to_string().contains("300"));
}

#[test]
fn fit_outputs_are_reproducible_and_lambda_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_csv(dir.path(), "d.csv", &simulated(&default_params(), 1500, 2));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        run_ok(&[
            "fit", "-i", s(&csv), "-m", "LNTACARR,LNCARR", "--n-start", "2", "--seed", "7", "--output-dir", s(out),
        ]);
    }
    for name in ["fit_lntacarr_1_1_1.json", "lambda_lntacarr_1_1_1.csv", "fit_lncarr_1_1.json", "models.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let report = read_json(&a.join("fit_lntacarr_1_1_1.json"));
    assert_eq!(report["n_obs"], 1500);
    assert_eq!(report["parameters"].as_array().unwrap().len(), 8);

    // Residuals in the CSV are exactly r / lambda.
    let t = read_lambda_csv(&a.join("lambda_lntacarr_1_1_1.csv")).unwrap();
    assert_eq!(t.r.len(), 1500);
    let mut checked = 0;
    for i in 0..t.r.len() {
        if let Some(e) = t.residual[i] {
            assert_eq!(e, t.r[i] / t.lambda[i]);
            checked += 1;
        }
    }
    assert_eq!(checked, 1499);

    // diagnose on the written files reproduces the fit's pooled KS.
    let d = dir.path().join("diag");
    run_ok(&[
        "diagnose",
        "--lambda",
        s(&a.join("lambda_lntacarr_1_1_1.csv")),
        "--fit-report",
        s(&a.join("fit_lntacarr_1_1_1.json")),
        "--output-dir",
        s(&d),
    ]);
    let diag = read_json(&d.join("diagnose.json"));
    let ks_fit = report["ks"].as_array().unwrap().iter().find(|k| k["name"].as_str().unwrap().contains("pooled")).cloned();
    let ks_diag = diag["residuals"]["ks"].as_array().unwrap().iter().find(|k| k["name"].as_str().unwrap().contains("pooled")).cloned();
    assert_eq!(ks_fit.unwrap()["statistic"], ks_diag.unwrap()["statistic"]);
}

#[test]
fn simulate_resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let common = [
        "simulate", "-m", "ETACARR", "--params", "0.05,0.1,0.8,0.1,0.2,0.7", "--t-len", "400", "--reps", "12",
        "--n-start", "1", "--seed", "3",
    ];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let mut full = common.to_vec();
    full.extend(["--output-dir", s(&a)]);
    run_ok(&full);

    let mut part = common.to_vec();
    part.extend(["--output-dir", s(&b), "--stop-after", "5"]);
    run_ok(&part);
    assert!(!b.join("recovery_etacarr_1_1_1_t400.json").exists());
    // Simulate a crash mid-write: a truncated trailing line is dropped.
    let ck = b.join("replications_etacarr_1_1_1_t400.jsonl");
    let mut text = fs::read_to_string(&ck).unwrap();
    text.push_str("{\"rep\":7,\"estim");
    fs::write(&ck, text).unwrap();
    let mut resume = common.to_vec();
    resume.extend(["--output-dir", s(&b), "--resume"]);
    run_ok(&resume);
    assert_eq!(
        fs::read(a.join("recovery_etacarr_1_1_1_t400.json")).unwrap(),
        fs::read(b.join("recovery_etacarr_1_1_1_t400.json")).unwrap()
    );
}

#[test]
fn failed_runs_leave_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut ranges = simulated(&default_params(), 400, 5);
    // A zero range is fine for exponential models but fatal for lognormal
    // ones without flooring; the exponential model is written first.
    ranges[200] = tacarr::RangeObs::from_parts(0.0, 0.0).unwrap();
    let csv = write_csv(dir.path(), "d.csv", &ranges);
    let out_dir = dir.path().join("out");
    let out = run(&["fit", "-i", s(&csv), "-m", "ETACARR,LNTACARR", "--n-start", "1", "--output-dir", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--zero-floor"));
    let left: Vec<_> = fs::read_dir(&out_dir).unwrap().collect();
    assert!(left.is_empty(), "{left:?}");

    run_ok(&["fit", "-i", s(&csv), "-m", "LNTACARR", "--n-start", "1", "--zero-floor", "--output-dir", s(&out_dir)]);
    let report = read_json(&out_dir.join("fit_lntacarr_1_1_1.json"));
    assert!(report["zero_floor"].as_f64().unwrap() > 0.0);
}

#[test]
fn forecast_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_csv(dir.path(), "d.csv", &simulated(&default_params(), 700, 6));
    let out = dir.path().join("out");
    run_ok(&[
        "forecast", "-i", s(&csv), "-m", "LNTACARR", "--horizon", "30", "--refit-every", "10", "--n-start", "1",
        "--output-dir", s(&out),
    ]);
    let mut rd = csv::Reader::from_path(out.join("forecast_lntacarr_1_1_1.csv")).unwrap();
    assert_eq!(rd.records().count(), 30);
    let summary = read_json(&out.join("forecast_lntacarr_1_1_1.json"));
    assert_eq!(summary["refits"], 3);

    // A single-model comparison is a DM test of a model against itself.
    run_ok(&[
        "compare", "-i", s(&csv), "-m", "LNCARR", "--horizon", "20", "--no-refit", "--n-start", "1", "--output-dir",
        s(&out),
    ]);
    let report = read_json(&out.join("compare.json"));
    assert_eq!(report["dm"][0]["p_value"], 1.0);
    assert!(report["dm"][0]["note"].as_str().unwrap().starts_with("no difference"));

    let err = run(&["compare", "-i", s(&csv), "-m", "LNTACARR", "--horizon", "20", "--output-dir", s(&out)]);
    assert_eq!(err.status.code(), Some(2));

    // DM through diagnose on the forecast files.
    run_ok(&[
        "forecast", "-i", s(&csv), "-m", "LNCARR", "--horizon", "30", "--refit-every", "10", "--n-start", "1",
        "--output-dir", s(&out),
    ]);
    run_ok(&[
        "diagnose",
        "--errors-a",
        s(&out.join("forecast_lntacarr_1_1_1.csv")),
        "--errors-b",
        s(&out.join("forecast_lncarr_1_1.csv")),
        "--output-dir",
        s(&out),
    ]);
    let diag = read_json(&out.join("diagnose.json"));
    let p = diag["dm"]["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_csv(dir.path(), "d.csv", &simulated(&default_params(), 600, 8));
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "seed = 11\noutput_dir = \"{}\"\n[data]\ninput = \"{}\"\n[model]\nmodel = [\"LNCARR\"]\n[estimation]\nn_start = 1\n",
            dir.path().join("cfg_out").display(),
            csv.display()
        ),
    )
    .unwrap();
    run_ok(&["--config", s(&cfg), "fit"]);
    let r = read_json(&dir.path().join("cfg_out").join("fit_lncarr_1_1.json"));
    assert_eq!(r["seed"], 11);
    run_ok(&["--config", s(&cfg), "--seed", "12", "fit", "-m", "ETACARR"]);
    let r = read_json(&dir.path().join("cfg_out").join("fit_etacarr_1_1_1.json"));
    assert_eq!(r["seed"], 12);

    fs::write(&cfg, "[model]\nmodle = \"x\"\n").unwrap();
    assert_eq!(run(&["--config", s(&cfg), "fit"]).status.code(), Some(2));
}
