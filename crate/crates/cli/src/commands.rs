use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tacarr::diagnostics::{self, correlogram, ks_bootstrap, ks_test, ljung_box, KsMode, LongRunVariance, Loss, TestReport};
use tacarr::estimation::FitOptions;
use tacarr::forecast::{insample_accuracy, rolling_forecast, Accuracy, ForecastRun, RollingOptions};
use tacarr::likelihood::{InnovationLaw, StandardizedResiduals};
use tacarr::model::{ConstraintMode, Family};
use tacarr::simulation::{aggregate, run_replication, RecoveryReport, ReplicationOutcome, SimConfig, SplitLaw};
use tacarr::stats::{summarize, Summary};
use tacarr::{fit, FitResult, ModelSpec, ParamVector};

use crate::args::{
    DataArgs, DiagnosticsArgs, EstimationArgs, FitCmd, ForecastArgs, ForecastCmd, KsModeArg, LossArg, ModelArgs,
    RangesCmd, SimulateCmd,
};
use crate::data::{self, Dataset};
use crate::output::{correlogram_svg, slug, Outputs};
use crate::usage;

pub struct Context {
    pub seed: u64,
    pub output_dir: PathBuf,
}

const DEFAULT_LAGS: [usize; 3] = [1, 5, 22];
const DEFAULT_MODELS: [&str; 5] = ["LNCARR", "ACARR", "FACARR", "LNTARR", "LNTACARR"];

/// Splits a model list on commas that are not inside parentheses.
fn split_models(raw: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for item in raw {
        let mut depth = 0i32;
        let mut cur = String::new();
        for c in item.chars() {
            match c {
                '(' => depth += 1,
                ')' => depth -= 1,
                ',' if depth == 0 => {
                    out.push(std::mem::take(&mut cur));
                    continue;
                }
                _ => {}
            }
            cur.push(c);
        }
        out.push(cur);
    }
    out.into_iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

pub fn parse_spec(name: &str, m: &ModelArgs) -> Result<ModelSpec> {
    let mut spec: ModelSpec = name.parse().map_err(|e: tacarr::Error| usage(e.to_string()))?;
    if !name.contains('(') {
        spec.p = m.p.unwrap_or(spec.p);
        spec.q = m.q.unwrap_or(spec.q);
        spec.l = m.l.unwrap_or(spec.l);
    }
    if spec.family == Family::Tarr {
        spec.delay = m.delay.unwrap_or(spec.delay);
        spec.threshold = m.threshold.or(spec.threshold);
    }
    if m.positivity_only {
        spec.constraint = ConstraintMode::PositivityOnly;
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;
    Ok(spec)
}

fn specs(m: &ModelArgs, default: Option<&[&str]>) -> Result<Vec<ModelSpec>> {
    let names = match (&m.model, default) {
        (Some(v), _) => split_models(v),
        (None, Some(d)) => d.iter().map(|s| s.to_string()).collect(),
        (None, None) => return Err(usage("--model is required")),
    };
    if names.is_empty() {
        return Err(usage("--model is empty"));
    }
    names.iter().map(|n| parse_spec(n, m)).collect()
}

fn single_spec(m: &ModelArgs) -> Result<ModelSpec> {
    let mut v = specs(m, None)?;
    if v.len() != 1 {
        return Err(usage("exactly one --model is expected"));
    }
    Ok(v.remove(0))
}

fn fit_options(e: &EstimationArgs, seed: u64) -> Result<FitOptions> {
    let d = FitOptions::default();
    let n_start = e.n_start.unwrap_or(d.n_start);
    if n_start == 0 {
        return Err(usage("--n-start must be positive"));
    }
    Ok(FitOptions {
        seed,
        n_start,
        max_iter: e.max_iter.unwrap_or(d.max_iter),
        std_errors: !e.no_std_errors,
        ..d
    })
}

fn loss_of(l: Option<LossArg>) -> Loss {
    match l {
        Some(LossArg::Absolute) => Loss::Absolute,
        _ => Loss::Squared,
    }
}

fn label(spec: &ModelSpec, branch: usize) -> &'static str {
    spec.branch_labels().get(branch).copied().unwrap_or("")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

// ---------------------------------------------------------------- ranges

#[derive(Serialize)]
struct RangeRow {
    date: NaiveDate,
    r: f64,
    ru: f64,
    rd: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QStat {
    pub lag: usize,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub name: String,
    pub summary: Summary,
    pub ljung_box: Vec<QStat>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RangesReport {
    pub n: usize,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    pub series: Vec<SeriesSummary>,
}

fn q_stats(xs: &[f64], lags: &[usize]) -> Vec<QStat> {
    lags.iter()
        .map(|&h| match ljung_box(xs, h) {
            Ok(t) => QStat {
                lag: h,
                statistic: Some(t.statistic),
                p_value: Some(t.p_value),
            },
            Err(_) => QStat {
                lag: h,
                statistic: None,
                p_value: None,
            },
        })
        .collect()
}

pub fn series_summaries(d: &Dataset) -> Vec<SeriesSummary> {
    let cols: [(&str, Vec<f64>); 3] = [
        ("R", d.ranges.iter().map(|o| o.r).collect()),
        ("Ru", d.ranges.iter().map(|o| o.ru).collect()),
        ("Rd", d.ranges.iter().map(|o| o.rd).collect()),
    ];
    cols.into_iter()
        .map(|(name, xs)| SeriesSummary {
            name: name.into(),
            summary: summarize(&xs),
            ljung_box: q_stats(&xs, &DEFAULT_LAGS),
        })
        .collect()
}

fn summary_text(r: &RangesReport) -> String {
    let mut s = format!("{} observations, {} to {}\n\n", r.n, r.first_date, r.last_date);
    let _ = writeln!(
        s,
        "{:<6}{:>8}{:>10}{:>10}{:>10}{:>10}{:>10}{:>7}{:>12}{:>12}{:>12}",
        "series", "count", "min", "mean", "max", "sd", "skew", "zeros", "Q(1)", "Q(5)", "Q(22)"
    );
    for x in &r.series {
        let m = &x.summary;
        let q: Vec<String> = x.ljung_box.iter().map(|q| fmt_opt(q.statistic)).collect();
        let _ = writeln!(
            s,
            "{:<6}{:>8}{:>10.4}{:>10.4}{:>10.4}{:>10.4}{:>10.4}{:>7}{:>12}{:>12}{:>12}",
            x.name, m.count, m.min, m.mean, m.max, m.std_dev, m.skewness, m.zeros, q[0], q[1], q[2]
        );
    }
    s
}

pub fn ranges(ctx: &Context, cmd: &RangesCmd) -> Result<()> {
    let d = data::load(&cmd.data)?;
    let mut out = Outputs::new(&ctx.output_dir)?;
    let rows: Vec<RangeRow> = d
        .dates
        .iter()
        .zip(&d.ranges)
        .map(|(date, o)| RangeRow {
            date: *date,
            r: o.r,
            ru: o.ru,
            rd: o.rd,
        })
        .collect();
    out.csv("ranges.csv", &rows)?;
    let report = RangesReport {
        n: d.len(),
        first_date: d.dates[0],
        last_date: *d.dates.last().unwrap(),
        series: series_summaries(&d),
    };
    out.json("summary.json", &report)?;
    let text = summary_text(&report);
    out.text("summary.txt", &text)?;
    out.commit();
    print!("{text}");
    Ok(())
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Serialize, Deserialize)]
pub struct ParamRow {
    pub name: String,
    pub estimate: f64,
    pub std_error: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegimeCount {
    pub label: String,
    pub count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub model: String,
    pub seed: u64,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    pub n_obs: usize,
    pub start: usize,
    pub n_eff: usize,
    pub k: usize,
    pub llf: f64,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
    pub best_start: usize,
    pub evaluations: usize,
    pub threshold: Option<f64>,
    pub zero_floor: Option<f64>,
    pub parameters: Vec<ParamRow>,
    pub std_error_note: Option<String>,
    pub law: InnovationLaw,
    pub regimes: Vec<RegimeCount>,
    pub insample: Accuracy,
    pub ks: Vec<TestReport>,
    pub ljung_box: Vec<TestReport>,
    pub notes: Vec<String>,
}

#[derive(Serialize)]
struct LambdaRow {
    date: NaiveDate,
    r: f64,
    ru: f64,
    rd: f64,
    lambda: f64,
    branch: Option<usize>,
    regime: String,
    residual: Option<f64>,
}

#[derive(Serialize)]
struct AcfRow {
    lag: usize,
    acf: f64,
    lower: f64,
    upper: f64,
}

#[derive(Serialize)]
struct ModelRow {
    model: String,
    k: usize,
    n_eff: usize,
    llf: f64,
    aic: f64,
    bic: f64,
    converged: bool,
}

fn ks_mode(m: Option<KsModeArg>) -> KsMode {
    match m {
        Some(KsModeArg::PerRegime) => KsMode::PerRegime,
        _ => KsMode::PooledPit,
    }
}

/// KS in both modes (requested mode first) and Ljung–Box on the residuals.
fn residual_tests(
    res: &StandardizedResiduals,
    law: &InnovationLaw,
    diag: &DiagnosticsArgs,
    notes: &mut Vec<String>,
) -> (Vec<TestReport>, Vec<TestReport>) {
    let first = ks_mode(diag.ks_mode);
    let second = if first == KsMode::PooledPit { KsMode::PerRegime } else { KsMode::PooledPit };
    let mut ks = Vec::new();
    for mode in [first, second] {
        match ks_test(res, law, mode) {
            Ok(t) => ks.push(t),
            Err(e) => notes.push(format!("KS {mode:?}: {e}")),
        }
    }
    let lags = diag.lags.clone().unwrap_or_else(|| DEFAULT_LAGS.to_vec());
    let mut lb = Vec::new();
    for h in lags {
        match ljung_box(&res.values, h) {
            Ok(t) => lb.push(t),
            Err(e) => notes.push(format!("Q({h}): {e}")),
        }
    }
    (ks, lb)
}

fn write_correlogram(out: &mut Outputs, name: &str, title: &str, xs: &[f64], lags: usize, svg: bool) -> Result<()> {
    let lags = lags.min(xs.len().saturating_sub(1));
    if lags == 0 {
        return Ok(());
    }
    let c = correlogram(xs, lags)?;
    let rows: Vec<AcfRow> = c
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| AcfRow {
            lag: i + 1,
            acf: *v,
            lower: -c.band,
            upper: c.band,
        })
        .collect();
    out.csv(&format!("{name}.csv"), &rows)?;
    if svg {
        out.text(&format!("{name}.svg"), &correlogram_svg(title, &c.values, c.band))?;
    }
    Ok(())
}

fn fit_text(reports: &[FitReport]) -> String {
    let mut s = String::new();
    for r in reports {
        let _ = writeln!(s, "{}  ({} to {}, {} obs, seed {})", r.model, r.first_date, r.last_date, r.n_obs, r.seed);
        let _ = writeln!(s, "{:<12}{:>12}{:>12}", "parameter", "estimate", "std.err");
        for p in &r.parameters {
            let _ = writeln!(s, "{:<12}{:>12.4}{:>12}", p.name, p.estimate, fmt_opt(p.std_error));
        }
        if let Some(n) = &r.std_error_note {
            let _ = writeln!(s, "  standard errors: {n}");
        }
        let _ = writeln!(s, "LLF {:.4}  AIC {:.4}  BIC {:.4}  converged {}", r.llf, r.aic, r.bic, r.converged);
        if let Some(th) = r.threshold {
            let _ = writeln!(s, "threshold {th:.4}");
        }
        for t in r.ks.iter().chain(&r.ljung_box) {
            let _ = writeln!(s, "{:<18}{:>12.4} (p = {:.4})", t.name, t.statistic, t.p_value);
        }
        let _ = writeln!(s, "in-sample RMSE {:.4}  MAE {:.4}", r.insample.rmse, r.insample.mae);
        for n in &r.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s.push('\n');
    }
    if reports.len() > 1 {
        let _ = writeln!(s, "{:<20}{:>14}{:>14}", "model", "AIC", "BIC");
        for r in reports {
            let _ = writeln!(s, "{:<20}{:>14.4}{:>14.4}", r.model, r.aic, r.bic);
        }
    }
    s
}

fn in_sample_len(d: &Dataset, data: &DataArgs) -> usize {
    data.split_date.map_or(d.len(), |s| d.count_through(s))
}

pub fn fit_cmd(ctx: &Context, cmd: &FitCmd) -> Result<()> {
    let specs = specs(&cmd.model, None)?;
    let opts = fit_options(&cmd.estimation, ctx.seed)?;
    let d = data::load(&cmd.data)?;
    let n_in = in_sample_len(&d, &cmd.data);
    let diag = &cmd.diagnostics;
    let mut out = Outputs::new(&ctx.output_dir)?;
    let mut reports = Vec::new();
    for spec in &specs {
        let (all, floor) = d.ranges_for(spec)?;
        let ranges = &all[..n_in];
        let f = fit(spec, ranges, &opts).with_context(|| format!("fitting {spec}"))?;
        let name = spec.to_string();
        let s = slug(&name);
        let law = diagnostics::fitted_law(&f);
        let mut notes = Vec::new();
        let (mut ks, lb) = residual_tests(&f.residuals, &law, diag, &mut notes);
        if let Some(b) = diag.bootstrap.filter(|&b| b > 0) {
            let boot_opts = FitOptions {
                n_start: 1,
                ..opts.clone()
            };
            match ks_bootstrap(&f, ks_mode(diag.ks_mode), b, ctx.seed, &boot_opts) {
                Ok(t) => ks.push(t),
                Err(e) => notes.push(format!("KS bootstrap: {e}")),
            }
        }
        let mut counts = vec![0usize; spec.n_branches()];
        let last = counts.len() - 1;
        for &b in f.branch_path() {
            counts[b.min(last)] += 1;
        }
        let regimes = if spec.family.is_directional() || spec.family == Family::Carr {
            Vec::new()
        } else {
            counts
                .iter()
                .enumerate()
                .map(|(b, &count)| RegimeCount {
                    label: label(spec, b).into(),
                    count,
                })
                .collect()
        };
        let report = FitReport {
            model: name.clone(),
            seed: ctx.seed,
            first_date: d.dates[0],
            last_date: d.dates[n_in - 1],
            n_obs: n_in,
            start: f.start,
            n_eff: f.n_eff,
            k: f.k,
            llf: f.llf,
            aic: f.aic,
            bic: f.bic,
            converged: f.converged,
            best_start: f.best_start,
            evaluations: f.evaluations,
            threshold: f.threshold,
            zero_floor: floor,
            parameters: f
                .param_names
                .iter()
                .zip(f.params.to_flat())
                .zip(&f.std_errors.values)
                .map(|((n, v), se)| ParamRow {
                    name: n.clone(),
                    estimate: v,
                    std_error: *se,
                })
                .collect(),
            std_error_note: f.std_errors.note.clone(),
            law,
            regimes,
            insample: insample_accuracy(&f, ranges)?,
            ks,
            ljung_box: lb,
            notes,
        };
        out.json(&format!("fit_{s}.json"), &report)?;
        out.csv(&format!("lambda_{s}.csv"), &lambda_rows(spec, &d.dates[..n_in], ranges, &f))?;
        write_correlogram(
            &mut out,
            &format!("acf_{s}"),
            &format!("{name} standardized residuals"),
            &f.residuals.values,
            diag.acf_lags.unwrap_or(30),
            diag.svg,
        )?;
        reports.push(report);
    }
    let rows: Vec<ModelRow> = reports
        .iter()
        .map(|r| ModelRow {
            model: r.model.clone(),
            k: r.k,
            n_eff: r.n_eff,
            llf: r.llf,
            aic: r.aic,
            bic: r.bic,
            converged: r.converged,
        })
        .collect();
    out.csv("models.csv", &rows)?;
    let text = fit_text(&reports);
    out.text("fit.txt", &text)?;
    out.commit();
    print!("{text}");
    Ok(())
}

fn lambda_rows(spec: &ModelSpec, dates: &[NaiveDate], ranges: &[tacarr::RangeObs], f: &FitResult) -> Vec<LambdaRow> {
    dates
        .iter()
        .zip(ranges)
        .enumerate()
        .map(|(t, (date, o))| {
            let fitted = t >= f.start;
            let branch = fitted.then(|| f.residuals.branch[t - f.start]);
            LambdaRow {
                date: *date,
                r: o.r,
                ru: o.ru,
                rd: o.rd,
                lambda: f.lambda[t],
                branch,
                regime: branch.map_or("", |b| label(spec, b)).into(),
                residual: fitted.then(|| f.residuals.values[t - f.start]),
            }
        })
        .collect()
}

// ---------------------------------------------------------------- simulate

fn parse_split(s: Option<&str>) -> Result<SplitLaw> {
    let Some(s) = s else { return Ok(SplitLaw::Uniform) };
    let s = s.trim().to_ascii_lowercase();
    if s == "uniform" {
        return Ok(SplitLaw::Uniform);
    }
    let bad = || usage(format!("split must be 'uniform' or 'beta:A,B', got '{s}'"));
    let rest = s.strip_prefix("beta:").ok_or_else(bad)?;
    let (a, b) = rest.split_once(',').ok_or_else(bad)?;
    Ok(SplitLaw::Beta {
        a: a.trim().parse().map_err(|_| bad())?,
        b: b.trim().parse().map_err(|_| bad())?,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StudyReport {
    pub seed: u64,
    pub burn_in: usize,
    pub split: SplitLaw,
    pub n_start: usize,
    pub recovery: RecoveryReport,
    pub failures: Vec<String>,
}

#[derive(Serialize)]
struct RecoveryRow {
    model: String,
    t_len: usize,
    parameter: String,
    truth: f64,
    mean: f64,
    made: f64,
    n_converged: usize,
    n_reps: usize,
}

/// Reads the replications already on disk. A truncated last line (from an
/// interrupted write) is dropped and the file rewritten without it.
fn read_checkpoint(path: &Path) -> Result<Vec<ReplicationOutcome>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let f = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut done = Vec::new();
    let mut clean = true;
    for line in BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ReplicationOutcome>(&line) {
            Ok(o) => done.push(o),
            Err(_) => {
                clean = false;
                break;
            }
        }
    }
    if !clean {
        write_checkpoint(path, &done, false)?;
    }
    Ok(done)
}

fn write_checkpoint(path: &Path, outcomes: &[ReplicationOutcome], append: bool) -> Result<()> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    let mut buf = Vec::new();
    for o in outcomes {
        serde_json::to_writer(&mut buf, o)?;
        buf.push(b'\n');
    }
    f.write_all(&buf)?;
    f.sync_data()?;
    Ok(())
}

fn recovery_text(studies: &[StudyReport]) -> String {
    let mut s = String::new();
    for st in studies {
        let r = &st.recovery;
        let _ = writeln!(
            s,
            "{}  T = {}  replications {} (converged {}, below truth {})",
            r.model, r.t_len, r.n_reps, r.n_converged, r.n_below_truth
        );
        let _ = writeln!(s, "{:<12}{:>10}{:>12}{:>12}", "parameter", "true", "mean", "MADE");
        for (i, n) in r.names.iter().enumerate() {
            let _ = writeln!(s, "{:<12}{:>10.4}{:>12.4}{:>12.4}", n, r.truth[i], r.mean[i], r.made[i]);
        }
        for f in &st.failures {
            let _ = writeln!(s, "note: {f}");
        }
        s.push('\n');
    }
    s
}

pub fn simulate(ctx: &Context, cmd: &SimulateCmd) -> Result<()> {
    let spec = single_spec(&cmd.model)?;
    let sim = &cmd.simulation;
    let params = sim.params.as_ref().ok_or_else(|| usage("--params is required"))?;
    let truth = ParamVector::from_flat(&spec, params).map_err(|e| {
        usage(format!("{e}; {spec} takes {} values: {}", spec.n_params(), spec.param_names().join(",")))
    })?;
    truth.validate(&spec).map_err(|e| usage(e.to_string()))?;
    let lens = sim.t_len.clone().unwrap_or_else(|| vec![3000]);
    let reps = sim.reps.unwrap_or(if sim.full_scale { 1000 } else { 200 });
    let mut opts = fit_options(&cmd.estimation, ctx.seed)?;
    opts.std_errors = false;
    let split = parse_split(sim.split.as_deref())?;
    let mut configs = Vec::new();
    for &t in &lens {
        let mut c = SimConfig::new(spec, truth.clone(), t, reps, ctx.seed);
        c.burn_in = sim.burn_in.unwrap_or(c.burn_in);
        c.split = split;
        c.validate().map_err(|e| usage(e.to_string()))?;
        configs.push(c);
    }

    fs::create_dir_all(&ctx.output_dir)
        .with_context(|| format!("cannot create output directory {}", ctx.output_dir.display()))?;
    let s = slug(&spec.to_string());
    let mut budget = sim.stop_after.unwrap_or(usize::MAX);
    let chunk = (rayon::current_num_threads() * 4).max(8);
    let mut studies = Vec::new();
    for c in &configs {
        let ckpt = ctx.output_dir.join(format!("replications_{s}_t{}.jsonl", c.t_len));
        let mut done = if sim.resume { read_checkpoint(&ckpt)? } else { Vec::new() };
        if !sim.resume {
            write_checkpoint(&ckpt, &[], false)?;
        }
        done.retain(|o| o.rep < c.n_reps);
        let mut have = vec![false; c.n_reps];
        for o in &done {
            have[o.rep] = true;
        }
        let todo: Vec<usize> = (0..c.n_reps).filter(|&r| !have[r]).collect();
        for block in todo.chunks(chunk) {
            if budget == 0 {
                break;
            }
            let block = &block[..block.len().min(budget)];
            let new: Vec<ReplicationOutcome> = block
                .par_iter()
                .map(|&rep| run_replication(c, &opts, rep))
                .collect::<tacarr::Result<_>>()?;
            write_checkpoint(&ckpt, &new, true)?;
            budget -= block.len();
            done.extend(new);
        }
        if done.len() < c.n_reps {
            println!(
                "stopped with {} of {} replications for T = {}; rerun with --resume",
                done.len(),
                c.n_reps,
                c.t_len
            );
            return Ok(());
        }
        let failures = {
            let mut v: Vec<&ReplicationOutcome> = done.iter().filter(|o| o.error.is_some()).collect();
            v.sort_by_key(|o| o.rep);
            v.iter()
                .map(|o| format!("replication {}: {}", o.rep, o.error.as_deref().unwrap_or("")))
                .collect()
        };
        studies.push(StudyReport {
            seed: ctx.seed,
            burn_in: c.burn_in,
            split: c.split,
            n_start: opts.n_start,
            recovery: aggregate(c, &done),
            failures,
        });
    }

    let mut out = Outputs::new(&ctx.output_dir)?;
    let mut rows = Vec::new();
    for st in &studies {
        let r = &st.recovery;
        out.json(&format!("recovery_{s}_t{}.json", r.t_len), st)?;
        for (i, n) in r.names.iter().enumerate() {
            rows.push(RecoveryRow {
                model: r.model.clone(),
                t_len: r.t_len,
                parameter: n.clone(),
                truth: r.truth[i],
                mean: r.mean[i],
                made: r.made[i],
                n_converged: r.n_converged,
                n_reps: r.n_reps,
            });
        }
    }
    out.csv(&format!("recovery_{s}.csv"), &rows)?;
    let text = recovery_text(&studies);
    out.text(&format!("recovery_{s}.txt"), &text)?;
    out.commit();
    print!("{text}");
    Ok(())
}

// ---------------------------------------------------------------- forecast / compare

#[derive(Serialize)]
struct ForecastRow {
    date: NaiveDate,
    realized: f64,
    forecast: f64,
    regime: String,
    converged: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ForecastSummary {
    pub model: String,
    pub window: usize,
    pub n_forecasts: usize,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    pub rmse: f64,
    pub mae: f64,
    pub refits: usize,
    pub nonconverged_steps: usize,
    pub zero_floor: Option<f64>,
}

struct Plan {
    /// First forecast index in the full series.
    origin: usize,
    window: usize,
    rolling: RollingOptions,
}

fn plan(d: &Dataset, data: &DataArgs, f: &ForecastArgs, est: &EstimationArgs, seed: u64) -> Result<Plan> {
    let origin = match (data.split_date, f.horizon) {
        (Some(_), Some(_)) => return Err(usage("give either --split-date or --horizon, not both")),
        (Some(s), None) => d.count_through(s),
        (None, Some(h)) => {
            if h == 0 || h >= d.len() {
                return Err(usage(format!("horizon {h} must be in 1..{}", d.len())));
            }
            d.len() - h
        }
        (None, None) => match f.window {
            Some(w) if w < d.len() => w,
            _ => return Err(usage("need --split-date, --horizon, or a --window shorter than the data")),
        },
    };
    let window = f.window.unwrap_or(origin);
    if window == 0 || window > origin {
        return Err(usage(format!("window {window} must be in 1..={origin}")));
    }
    let refit_every = if f.no_refit {
        None
    } else {
        match f.refit_every {
            Some(0) => return Err(usage("--refit-every must be positive")),
            r => Some(r.unwrap_or(1)),
        }
    };
    let mut fit = fit_options(est, seed)?;
    fit.std_errors = false;
    Ok(Plan {
        origin,
        window,
        rolling: RollingOptions {
            refit_every,
            fit,
            warm_starts: f.warm_starts.unwrap_or(1).max(1),
        },
    })
}

fn run_forecast(d: &Dataset, spec: &ModelSpec, p: &Plan) -> Result<(ForecastRun, Option<f64>)> {
    let (all, floor) = d.ranges_for(spec)?;
    let series = &all[p.origin - p.window..];
    let run = rolling_forecast(series, spec, p.window, &p.rolling).with_context(|| format!("forecasting {spec}"))?;
    Ok((run, floor))
}

fn forecast_summary(d: &Dataset, p: &Plan, run: &ForecastRun, floor: Option<f64>) -> ForecastSummary {
    ForecastSummary {
        model: run.spec.to_string(),
        window: run.window,
        n_forecasts: run.steps.len(),
        first_date: d.dates[p.origin],
        last_date: *d.dates.last().unwrap(),
        rmse: run.accuracy.rmse,
        mae: run.accuracy.mae,
        refits: run.steps.iter().filter(|s| s.refit.is_some()).count(),
        nonconverged_steps: run.steps.iter().filter(|s| !s.converged).count(),
        zero_floor: floor,
    }
}

fn forecast_rows(d: &Dataset, p: &Plan, run: &ForecastRun) -> Vec<ForecastRow> {
    run.steps
        .iter()
        .enumerate()
        .map(|(i, s)| ForecastRow {
            date: d.dates[p.origin + i],
            realized: s.realized,
            forecast: s.forecast,
            regime: label(&run.spec, s.branch).into(),
            converged: s.converged,
        })
        .collect()
}

pub fn forecast(ctx: &Context, cmd: &ForecastCmd) -> Result<()> {
    let spec = single_spec(&cmd.model)?;
    let d = data::load(&cmd.data)?;
    let p = plan(&d, &cmd.data, &cmd.forecast, &cmd.estimation, ctx.seed)?;
    let (run, floor) = run_forecast(&d, &spec, &p)?;
    let summary = forecast_summary(&d, &p, &run, floor);
    let s = slug(&summary.model);
    let mut out = Outputs::new(&ctx.output_dir)?;
    out.csv(&format!("forecast_{s}.csv"), &forecast_rows(&d, &p, &run))?;
    out.json(&format!("forecast_{s}.json"), &summary)?;
    out.commit();
    println!(
        "{}: {} forecasts ({} to {}), RMSE {:.4}, MAE {:.4}",
        summary.model, summary.n_forecasts, summary.first_date, summary.last_date, summary.rmse, summary.mae
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DmRow {
    pub model: String,
    pub baseline: String,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompareReport {
    pub seed: u64,
    pub window: usize,
    pub n_forecasts: usize,
    pub loss: Loss,
    pub baseline: String,
    pub accuracy: Vec<ForecastSummary>,
    pub best_rmse: String,
    pub best_mae: String,
    /// Positive statistics favour the model over the baseline.
    pub dm: Vec<DmRow>,
}

fn compare_text(r: &CompareReport) -> String {
    let mut s = format!(
        "{} one-step forecasts, window {}; DM vs {} ({:?} loss, positive favours the model)\n\n",
        r.n_forecasts, r.window, r.baseline, r.loss
    );
    let _ = writeln!(s, "{:<20}{:>10}{:>10}", "model", "RMSE", "MAE");
    for a in &r.accuracy {
        let _ = writeln!(s, "{:<20}{:>10.4}{:>10.4}", a.model, a.rmse, a.mae);
    }
    s.push('\n');
    for row in &r.dm {
        match (row.statistic, row.p_value) {
            (Some(t), Some(p)) => {
                let _ = write!(s, "{:<20}DM {:>9.4} (p = {:.4})", row.model, t, p);
            }
            _ => {
                let _ = write!(s, "{:<20}DM        -", row.model);
            }
        }
        if let Some(n) = &row.note {
            let _ = write!(s, "  {n}");
        }
        s.push('\n');
    }
    s
}

pub fn compare(ctx: &Context, cmd: &ForecastCmd) -> Result<()> {
    let specs = specs(&cmd.model, Some(&DEFAULT_MODELS))?;
    let baseline_name = cmd.forecast.baseline.clone().unwrap_or_else(|| "LNCARR".into());
    let baseline = parse_spec(&baseline_name, &cmd.model)?;
    let b_idx = specs
        .iter()
        .position(|s| *s == baseline)
        .ok_or_else(|| usage(format!("baseline {baseline} is not among the compared models")))?;
    let d = data::load(&cmd.data)?;
    let p = plan(&d, &cmd.data, &cmd.forecast, &cmd.estimation, ctx.seed)?;
    let runs: Vec<(ForecastRun, Option<f64>)> =
        specs.par_iter().map(|s| run_forecast(&d, s, &p)).collect::<Result<_>>()?;
    let loss = loss_of(cmd.forecast.loss);
    let e_base = runs[b_idx].0.errors();
    let others: Vec<usize> = if specs.len() == 1 { vec![b_idx] } else { (0..specs.len()).filter(|&i| i != b_idx).collect() };
    let dm = others
        .iter()
        .map(|&i| {
            let r = diagnostics::dm_test(&runs[i].0.errors(), &e_base, loss, LongRunVariance::Sample);
            let (statistic, p_value, note) = match r {
                Ok(t) => (Some(t.statistic), Some(t.p_value), t.detail.filter(|d| d.starts_with("no difference"))),
                Err(e) => (None, None, Some(e.to_string())),
            };
            DmRow {
                model: specs[i].to_string(),
                baseline: baseline.to_string(),
                statistic,
                p_value,
                note,
            }
        })
        .collect();
    let accuracy: Vec<ForecastSummary> = runs.iter().map(|(r, f)| forecast_summary(&d, &p, r, *f)).collect();
    let best = |key: fn(&ForecastSummary) -> f64| {
        accuracy
            .iter()
            .min_by(|a, b| key(a).total_cmp(&key(b)))
            .map(|a| a.model.clone())
            .unwrap_or_default()
    };
    let report = CompareReport {
        seed: ctx.seed,
        window: p.window,
        n_forecasts: d.len() - p.origin,
        loss,
        baseline: baseline.to_string(),
        best_rmse: best(|a| a.rmse),
        best_mae: best(|a| a.mae),
        accuracy,
        dm,
    };

    let mut out = Outputs::new(&ctx.output_dir)?;
    out.json("compare.json", &report)?;
    out.csv("compare.csv", &report.accuracy)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["date".to_string(), "realized".to_string()];
    header.extend(specs.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for i in 0..report.n_forecasts {
        let mut rec = vec![d.dates[p.origin + i].to_string(), runs[0].0.steps[i].realized.to_string()];
        rec.extend(runs.iter().map(|(r, _)| r.steps[i].forecast.to_string()));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow!("csv buffer: {e}"))?;
    out.write("compare_forecasts.csv", &bytes)?;
    let text = compare_text(&report);
    out.text("compare.txt", &text)?;
    out.commit();
    print!("{text}");
    Ok(())
}

// ---------------------------------------------------------------- diagnose

#[derive(Debug, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub residuals: Option<ResidualDiagnostics>,
    pub dm: Option<TestReport>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ResidualDiagnostics {
    pub source: String,
    pub n: usize,
    pub law: InnovationLaw,
    pub ks: Vec<TestReport>,
    pub ljung_box: Vec<TestReport>,
    pub notes: Vec<String>,
}

fn parse_law(s: &str) -> Result<InnovationLaw> {
    let s = s.trim().to_ascii_lowercase();
    if s == "exp" || s == "exponential" {
        return Ok(InnovationLaw::Exponential);
    }
    let bad = || usage(format!("law must be 'exp' or 'ln:T1[,T2]', got '{s}'"));
    let rest = s.strip_prefix("ln:").ok_or_else(bad)?;
    let theta2 = rest
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    let law = InnovationLaw::Lognormal { theta2 };
    law.validate().map_err(|e| usage(e.to_string()))?;
    Ok(law)
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

pub fn diagnose(ctx: &Context, diag: &DiagnosticsArgs) -> Result<()> {
    if diag.lambda.is_none() && diag.errors_a.is_none() {
        return Err(usage("diagnose needs --lambda and/or --errors-a with --errors-b"));
    }
    if diag.errors_a.is_some() != diag.errors_b.is_some() {
        return Err(usage("--errors-a and --errors-b go together"));
    }
    for p in [&diag.lambda, &diag.fit_report, &diag.errors_a, &diag.errors_b].into_iter().flatten() {
        if !p.is_file() {
            return Err(usage(format!("{} does not exist", p.display())));
        }
    }
    let law = match (&diag.law, &diag.fit_report) {
        (Some(l), _) => Some(parse_law(l)?),
        (None, Some(path)) => {
            let text = fs::read_to_string(path)?;
            let r: FitReport = serde_json::from_str(&text).with_context(|| format!("reading {}", path.display()))?;
            Some(r.law)
        }
        (None, None) => None,
    };
    let mut out = Outputs::new(&ctx.output_dir)?;
    let residuals = match &diag.lambda {
        Some(path) => {
            let t = data::read_lambda_csv(path)?;
            let mut res = StandardizedResiduals {
                values: Vec::new(),
                branch: Vec::new(),
            };
            for (v, b) in t.residual.iter().zip(&t.branch) {
                if let (Some(v), Some(b)) = (v, b) {
                    res.values.push(*v);
                    res.branch.push(*b);
                }
            }
            if res.is_empty() {
                bail!("{} has no residuals", path.display());
            }
            let law = law.clone().unwrap_or(InnovationLaw::Exponential);
            let mut notes = Vec::new();
            let (ks, lb) = residual_tests(&res, &law, diag, &mut notes);
            write_correlogram(
                &mut out,
                "acf_residuals",
                "standardized residuals",
                &res.values,
                diag.acf_lags.unwrap_or(30),
                diag.svg,
            )?;
            Some(ResidualDiagnostics {
                source: file_name(path),
                n: res.len(),
                law,
                ks,
                ljung_box: lb,
                notes,
            })
        }
        None => None,
    };
    let dm = match (&diag.errors_a, &diag.errors_b) {
        (Some(a), Some(b)) => {
            let (da, ea) = data::read_forecast_csv(a)?;
            let (db, eb) = data::read_forecast_csv(b)?;
            if da != db {
                bail!("{} and {} cover different dates", a.display(), b.display());
            }
            let mut t = diagnostics::dm_test(&ea, &eb, loss_of(diag.loss), LongRunVariance::Sample)?;
            t.detail = Some(format!(
                "A = {}, B = {}; {}",
                file_name(a),
                file_name(b),
                t.detail.unwrap_or_default()
            ));
            Some(t)
        }
        _ => None,
    };
    let report = DiagnoseReport { residuals, dm };
    out.json("diagnose.json", &report)?;
    let mut text = String::new();
    if let Some(r) = &report.residuals {
        let _ = writeln!(text, "{} ({} residuals)", r.source, r.n);
        for t in r.ks.iter().chain(&r.ljung_box) {
            let _ = writeln!(text, "{:<18}{:>12.4} (p = {:.4})", t.name, t.statistic, t.p_value);
        }
        for n in &r.notes {
            let _ = writeln!(text, "note: {n}");
        }
    }
    if let Some(t) = &report.dm {
        let _ = writeln!(text, "DM {:.4} (p = {:.4}) {}", t.statistic, t.p_value, t.detail.as_deref().unwrap_or(""));
    }
    out.text("diagnose.txt", &text)?;
    out.commit();
    print!("{text}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_lists_split_outside_parentheses() {
        let v = split_models(&["LNTACARR(1,1,1),ACARR".into(), " FACARR(1,1,2) ".into()]);
        assert_eq!(v, ["LNTACARR(1,1,1)", "ACARR", "FACARR(1,1,2)"]);
    }

    #[test]
    fn orders_from_flags_unless_explicit() {
        let m = ModelArgs {
            l: Some(5),
            ..ModelArgs::default()
        };
        assert_eq!(parse_spec("LNTACARR", &m).unwrap().l, 5);
        assert_eq!(parse_spec("LNTACARR(22,1,1)", &m).unwrap().l, 22);
        assert!(parse_spec("GARCH", &m).unwrap_err().downcast_ref::<crate::UsageError>().is_some());
    }

    #[test]
    fn split_and_law_parsing() {
        assert_eq!(parse_split(None).unwrap(), SplitLaw::Uniform);
        assert_eq!(parse_split(Some("beta:2,3")).unwrap(), SplitLaw::Beta { a: 2.0, b: 3.0 });
        assert!(parse_split(Some("beta:2")).is_err());
        assert_eq!(parse_law("exp").unwrap(), InnovationLaw::Exponential);
        assert_eq!(
            parse_law("ln:0.25,0.64").unwrap(),
            InnovationLaw::Lognormal {
                theta2: vec![0.25, 0.64]
            }
        );
        assert!(parse_law("ln:-1").is_err());
    }
}
