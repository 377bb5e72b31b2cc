#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{Duration, NaiveDate};
use tacarr::simulation::{simulate_path, SimConfig};
use tacarr::{Branch, Innovation, ModelSpec, ParamVector, RangeObs};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tacarr"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn tacarr")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "tacarr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn b11(o: f64, a: f64, b: f64) -> Branch {
    Branch::new(o, vec![a], vec![b])
}

pub fn lntacarr() -> ModelSpec {
    ModelSpec::tacarr(1, 1, 1, Innovation::Lognormal)
}

/// Simulated LNTACARR(1,1,1) ranges.
pub fn simulated(params: &ParamVector, t_len: usize, seed: u64) -> Vec<RangeObs> {
    simulate_path(&SimConfig::new(lntacarr(), params.clone(), t_len, 1, seed), 0)
        .unwrap()
        .ranges
}

pub fn default_params() -> ParamVector {
    ParamVector::two_branch(b11(0.05, 0.10, 0.80), b11(0.10, 0.20, 0.70)).with_theta2(vec![0.15, 0.15])
}

pub fn first_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2001, 1, 2).unwrap()
}

/// OHLC rows whose extracted ranges (scale 100) are `ranges`: the high
/// and low sit `ru` and `rd` percent-log away from the open, the close
/// moves a fixed share through the bar, and the next bar opens at the close.
pub fn ohlc_csv(ranges: &[RangeObs]) -> String {
    let mut s = String::from("date,open,high,low,close\n");
    let mut open = 100.0f64;
    for (i, o) in ranges.iter().enumerate() {
        let high = open * (o.ru / 100.0).exp();
        let low = open * (-o.rd / 100.0).exp();
        let close = low + (0.3 + 0.4 * ((i % 7) as f64 / 6.0)) * (high - low);
        let date = first_date() + Duration::days(i as i64);
        let _ = writeln!(s, "{date},{open},{high},{low},{close}");
        open = close;
    }
    s
}

pub fn write_csv(dir: &Path, name: &str, ranges: &[RangeObs]) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, ohlc_csv(ranges)).unwrap();
    p
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
