//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{Continuous, Exp, LogNormal};
use tacarr::diagnostics::{dm_test, fitted_law, ks_test, ljung_box, KsMode, LongRunVariance, Loss};
use tacarr::estimation::evaluate;
use tacarr::likelihood::{loglik_exponential, loglik_lognormal};
use tacarr::model::{arma_residual_check, lambda_acarr, lambda_carr, lambda_facarr, lambda_tacarr, lambda_tarr};
use tacarr::simulation::{recovery_study, simulate_path, RecoveryReport, SimConfig};
use tacarr::{fit, Branch, FitOptions, Innovation, LambdaPath, ModelSpec, ParamVector, RangeObs};

use common::{b11, run, s, write_csv};

const REPS: usize = 200;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// Published reference values for one recovery table row.
struct Reference {
    truth: ParamVector,
    mean_3000: Vec<f64>,
    made_3000: Vec<f64>,
    made_1000: Vec<f64>,
}

fn etacarr_reference() -> Reference {
    Reference {
        truth: ParamVector::two_branch(b11(0.01, 0.10, 0.80), b11(0.10, 0.20, 0.70)),
        mean_3000: vec![0.0130, 0.0995, 0.7943, 0.1003, 0.2004, 0.6995],
        made_3000: vec![0.0101, 0.0142, 0.0283, 0.0153, 0.0196, 0.0367],
        made_1000: vec![0.0152, 0.0253, 0.0449, 0.0248, 0.0340, 0.0599],
    }
}

/// Flat order: Up (omega, alpha, beta), Down (omega, alpha, beta), theta2 Up, Down.
fn lntacarr_reference() -> Reference {
    Reference {
        truth: ParamVector::two_branch(b11(0.01, 0.10, 0.80), b11(0.10, 0.20, 0.70)).with_theta2(vec![0.25, 0.64]),
        mean_3000: vec![0.0110, 0.0998, 0.7980, 0.1002, 0.2000, 0.7002, 0.2491, 0.6401],
        made_3000: vec![0.0075, 0.0102, 0.0204, 0.0126, 0.0166, 0.0302, 0.0071, 0.0171],
        made_1000: vec![0.0109, 0.0178, 0.0318, 0.0195, 0.0289, 0.0482, 0.0125, 0.0317],
    }
}

fn study(spec: ModelSpec, truth: &ParamVector, t_len: usize, seed: u64) -> RecoveryReport {
    let cfg = SimConfig::new(spec, truth.clone(), t_len, REPS, seed);
    let opts = FitOptions {
        n_start: 2,
        std_errors: false,
        ..FitOptions::default()
    };
    recovery_study(&cfg, &opts).expect("recovery study")
}

/// Means within 3x the published MADE of the truth, MADE within a factor of 2
/// of the published MADE.
fn banded(r: &RecoveryReport, reference: &Reference) -> (bool, String) {
    let mut ok = r.convergence_rate >= 0.9;
    let mut worst = String::new();
    for j in 0..r.truth.len() {
        let bias = (r.mean[j] - r.truth[j]).abs();
        let ratio = r.made[j] / reference.made_3000[j];
        let good = bias <= 3.0 * reference.made_3000[j] && (0.5..=2.0).contains(&ratio);
        if !good {
            ok = false;
            worst += &format!(
                " {}: mean {:.4} (published {:.4}) MADE {:.4} (published {:.4});",
                r.names[j], r.mean[j], reference.mean_3000[j], r.made[j], reference.made_3000[j]
            );
        }
    }
    let made: Vec<String> = r.made.iter().map(|m| format!("{m:.4}")).collect();
    (
        ok,
        format!("converged {}/{}, MADE [{}]{}", r.n_converged, r.n_reps, made.join(", "), worst),
    )
}

struct Studies {
    eta_3000: RecoveryReport,
    eta_1000: RecoveryReport,
    ln_3000: RecoveryReport,
    ln_1000: RecoveryReport,
}

fn c1_likelihood_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = 30;
        let start = rng.random_range(0..3);
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..5.0)).collect();
        let path = LambdaPath {
            start,
            values: (0..n).map(|_| rng.random_range(0.05..4.0)).collect(),
            branch: (0..n).map(|_| rng.random_range(0..2)).collect(),
        };
        let theta2 = [rng.random_range(0.01..1.5), rng.random_range(0.01..1.5)];
        let exp_oracle: f64 = (start..n)
            .map(|t| Exp::new(1.0 / path.values[t]).unwrap().ln_pdf(values[t]))
            .sum();
        let ln_oracle: f64 = (start..n)
            .map(|t| {
                let t2 = theta2[path.branch[t]];
                LogNormal::new(path.values[t].ln() - 0.5 * t2, t2.sqrt())
                    .unwrap()
                    .ln_pdf(values[t])
            })
            .sum();
        worst = worst
            .max((loglik_exponential(&values, &path).unwrap() - exp_oracle).abs())
            .max((loglik_lognormal(&values, &path, &theta2).unwrap() - ln_oracle).abs());
    }
    verdict(worst < 1e-10, format!("max |diff| {worst:.2e} over 100 draws"))
}

fn c2_recursion_identity() -> Verdict {
    let truth = etacarr_reference().truth;
    let mut worst = 0.0f64;
    for rep in 0..100 {
        let innovation = if rep % 2 == 0 { Innovation::Exponential } else { Innovation::Lognormal };
        let spec = ModelSpec::tacarr(1, 1, 1, innovation);
        let p = match innovation {
            Innovation::Exponential => truth.clone(),
            Innovation::Lognormal => truth.clone().with_theta2(vec![0.25, 0.64]),
        };
        let path = simulate_path(&SimConfig::new(spec, p.clone(), 500, 100, 2), rep).unwrap();
        let lam = lambda_tacarr(&path.ranges, &p, &spec).unwrap();
        worst = worst.max(arma_residual_check(&path.ranges, &lam, &p, &spec).unwrap());
    }
    verdict(worst < 1e-10, format!("max violation {worst:.2e} over 100 paths"))
}

fn c3_etacarr(st: &Studies) -> Verdict {
    let (ok, detail) = banded(&st.eta_3000, &etacarr_reference());
    verdict(ok, detail)
}

fn c4_lntacarr(st: &Studies) -> Verdict {
    let (mut ok, mut detail) = banded(&st.ln_3000, &lntacarr_reference());
    for j in 6..8 {
        let rel = st.ln_3000.mean[j] / st.ln_3000.truth[j] - 1.0;
        ok &= rel.abs() <= 0.10;
        detail += &format!("; {} mean off by {:+.1}%", st.ln_3000.names[j], 100.0 * rel);
    }
    verdict(ok, detail)
}

fn c5_monotone(st: &Studies) -> Verdict {
    let mut bad = Vec::new();
    for (name, long, short) in [("ETACARR", &st.eta_3000, &st.eta_1000), ("LNTACARR", &st.ln_3000, &st.ln_1000)] {
        for j in 0..long.made.len() {
            if long.made[j] >= short.made[j] {
                bad.push(format!("{name} {}: {:.4} >= {:.4}", long.names[j], long.made[j], short.made[j]));
            }
        }
    }
    let n = st.eta_3000.made.len() + st.ln_3000.made.len();
    // For reference: how the short-sample MADE compares with the published one.
    let ratio = |r: &RecoveryReport, reference: &Reference| {
        r.made.iter().zip(&reference.made_1000).map(|(a, b)| a / b).fold(0.0, f64::max)
    };
    verdict(
        bad.is_empty(),
        format!(
            "{} of {n} parameters decrease; T=1000 MADE at most {:.2}x / {:.2}x the published values {}",
            n - bad.len(),
            ratio(&st.eta_1000, &etacarr_reference()),
            ratio(&st.ln_1000, &lntacarr_reference()),
            bad.join("; ")
        ),
    )
}

fn c6_nesting() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let exp = Innovation::Exponential;
    let branch = |rng: &mut ChaCha8Rng| {
        let a: f64 = rng.random_range(0.0..0.5);
        Branch::new(rng.random_range(0.01..1.0), vec![a], vec![rng.random_range(0.0..0.98 - a)])
    };
    let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mut worst = [0.0f64; 4];
    for _ in 0..100 {
        let ranges: Vec<RangeObs> = (0..200)
            .map(|_| RangeObs::from_parts(rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)).unwrap())
            .collect();
        let (b0, b1) = (branch(&mut rng), branch(&mut rng));
        let carr0 = lambda_carr(&ranges, &ParamVector::single(b0.clone()), &ModelSpec::carr(1, 1, exp)).unwrap();
        let carr1 = lambda_carr(&ranges, &ParamVector::single(b1.clone()), &ModelSpec::carr(1, 1, exp)).unwrap();
        let same = ParamVector::two_branch(b0.clone(), b0.clone());
        let ta = lambda_tacarr(&ranges, &same, &ModelSpec::tacarr(1, 1, 1, exp)).unwrap();
        worst[0] = worst[0].max(diff(&ta.values, &carr0.values));

        let two = ParamVector::two_branch(b0.clone(), b1.clone());
        let (au, ad) = lambda_acarr(&ranges, &two, &ModelSpec::acarr(1, 1, exp)).unwrap();
        let flat = two.clone().with_gamma(vec![0.0], vec![0.0]);
        let (fu, fd) = lambda_facarr(&ranges, &flat, &ModelSpec::facarr(1, 1, 1, exp)).unwrap();
        worst[1] = worst[1].max(diff(&au.values, &fu.values).max(diff(&ad.values, &fd.values)));

        let low = lambda_tarr(&ranges, &two, &ModelSpec::tarr(1, 1, 1, Some(0.0), exp)).unwrap();
        let high = lambda_tarr(&ranges, &two, &ModelSpec::tarr(1, 1, 1, Some(f64::INFINITY), exp)).unwrap();
        worst[2] = worst[2].max(diff(&low.values, &carr0.values));
        worst[3] = worst[3].max(diff(&high.values, &carr1.values));
    }
    let ok = worst.iter().all(|&w| w <= 1e-12);
    verdict(
        ok,
        format!(
            "TACARR=CARR {:.1e}, FACARR(0)=ACARR {:.1e}, TARR(0) {:.1e}, TARR(inf) {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn c7_size() -> Verdict {
    let n_sim = 500;
    let spec = ModelSpec::tacarr(1, 1, 1, Innovation::Lognormal);
    let truth = lntacarr_reference().truth;
    let cfg = SimConfig::new(spec, truth.clone(), 1000, n_sim, 7);
    let rejections: Vec<(bool, bool)> = (0..n_sim)
        .into_par_iter()
        .map(|rep| {
            let path = simulate_path(&cfg, rep).unwrap();
            let at_truth = evaluate(&spec, &truth, &path.ranges).unwrap();
            let ks = ks_test(&at_truth.residuals, &fitted_law(&at_truth), KsMode::PooledPit).unwrap();
            let lb = ljung_box(&at_truth.residuals.values, 10).unwrap();
            (ks.rejects(0.05), lb.rejects(0.05))
        })
        .collect();
    let ks_rate = rejections.iter().filter(|r| r.0).count() as f64 / n_sim as f64;
    let lb_rate = rejections.iter().filter(|r| r.1).count() as f64 / n_sim as f64;

    // Equal-skill forecasters sharing a common error component.
    let dm_rate = (0..n_sim)
        .into_par_iter()
        .filter(|&rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(70);
            rng.set_stream(rep as u64);
            let mut ea = Vec::with_capacity(100);
            let mut eb = Vec::with_capacity(100);
            for _ in 0..100 {
                let z: f64 = rng.sample(StandardNormal);
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                ea.push(z + a);
                eb.push(z + b);
            }
            dm_test(&ea, &eb, Loss::Squared, LongRunVariance::Sample).unwrap().rejects(0.05)
        })
        .count() as f64
        / n_sim as f64;
    let band = 0.02..=0.09;
    verdict(
        band.contains(&ks_rate) && band.contains(&lb_rate) && band.contains(&dm_rate),
        format!(
            "5% rejection rates over {n_sim}: KS {:.1}%, Ljung-Box(10) {:.1}%, DM {:.1}%",
            100.0 * ks_rate,
            100.0 * lb_rate,
            100.0 * dm_rate
        ),
    )
}

fn c8_power() -> Verdict {
    let truth = lntacarr_reference().truth;
    let spec = ModelSpec::tacarr(1, 1, 1, Innovation::Lognormal);
    let path = simulate_path(&SimConfig::new(spec, truth, 3000, 1, 8), 0).unwrap();
    let opts = FitOptions {
        std_errors: false,
        ..FitOptions::default()
    };
    let e = fit(&ModelSpec::tacarr(1, 1, 1, Innovation::Exponential), &path.ranges, &opts).unwrap();
    let ks_e = ks_test(&e.residuals, &fitted_law(&e), KsMode::PooledPit).unwrap();
    let ln = fit(&spec, &path.ranges, &opts).unwrap();
    let ks_ln = ks_test(&ln.residuals, &fitted_law(&ln), KsMode::PooledPit).unwrap();
    verdict(
        ks_e.p_value < 0.01,
        format!(
            "ETACARR KS D={:.4} p={:.2e}; LNTACARR KS D={:.4} p={:.3}",
            ks_e.statistic, ks_e.p_value, ks_ln.statistic, ks_ln.p_value
        ),
    )
}

fn c9_workflow(dir: &Path) -> Verdict {
    let dgp = ParamVector::two_branch(b11(0.05, 0.05, 0.85), b11(1.0, 0.20, 0.50)).with_theta2(vec![0.03, 0.03]);
    let spec = ModelSpec::tacarr(1, 1, 1, Innovation::Lognormal);
    let mut best = 0;
    let mut rejects = 0;
    let mut failures = Vec::new();
    for seed in 0..20u64 {
        let ranges = simulate_path(&SimConfig::new(spec, dgp.clone(), 4500, 1, 900 + seed), 0).unwrap().ranges;
        let csv = write_csv(dir, &format!("wf_{seed}.csv"), &ranges);
        let out = dir.join(format!("wf_{seed}"));
        let seed_s = seed.to_string();
        let res = run(&[
            "--seed", &seed_s, "compare", "-i", s(&csv), "--horizon", "50", "--refit-every", "5", "--n-start", "2",
            "--output-dir", s(&out),
        ]);
        if !res.status.success() {
            failures.push(format!("seed {seed}: {}", String::from_utf8_lossy(&res.stderr).trim()));
            continue;
        }
        let report = common::read_json(&out.join("compare.json"));
        if report["best_rmse"].as_str().unwrap().starts_with("LNTACARR") {
            best += 1;
        }
        let row = report["dm"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["model"].as_str().unwrap().starts_with("LNTACARR"))
            .unwrap();
        if row["p_value"].as_f64().is_some_and(|p| p < 0.05) {
            rejects += 1;
        }
    }
    verdict(
        best >= 16 && rejects >= 10 && failures.is_empty(),
        format!(
            "LNTACARR best RMSE in {best}/20, DM vs LNCARR rejects in {rejects}/20{}",
            if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join("; ")) }
        ),
    )
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn c10_determinism(dir: &Path) -> Verdict {
    let params = common::default_params();
    let csv = write_csv(dir, "det.csv", &common::simulated(&params, 900, 10));
    let lambda_name = "lambda_lntacarr_1_1_1.csv";
    let mut trees = Vec::new();
    let mut errors = Vec::new();
    for (tag, jobs) in [("a", "1"), ("b", "3")] {
        let out = dir.join(format!("det_{tag}"));
        let o = s(&out).to_string();
        let i = s(&csv).to_string();
        let lambda = out.join(lambda_name);
        let report = out.join("fit_lntacarr_1_1_1.json");
        let base = ["--seed", "42", "--jobs", jobs, "--output-dir", &o];
        let commands: Vec<Vec<&str>> = vec![
            vec!["ranges", "-i", &i],
            vec!["fit", "-i", &i, "-m", "LNTACARR,ETACARR,LNTARR", "--n-start", "3"],
            vec![
                "simulate", "-m", "LNTACARR", "--params", "0.05,0.1,0.8,0.1,0.2,0.7,0.15,0.15", "--t-len", "300,600",
                "--reps", "6", "--n-start", "2",
            ],
            vec!["forecast", "-i", &i, "-m", "LNTACARR", "--horizon", "20", "--refit-every", "5"],
            vec!["compare", "-i", &i, "-m", "LNCARR,LNTACARR", "--horizon", "20", "--refit-every", "10"],
            vec!["diagnose", "--lambda", s(&lambda), "--fit-report", s(&report)],
        ];
        for c in commands {
            let mut args: Vec<&str> = base.to_vec();
            args.extend(c.iter());
            let r = run(&args);
            if !r.status.success() {
                errors.push(format!("{}: {}", c[0], String::from_utf8_lossy(&r.stderr).trim()));
            }
        }
        trees.push(tree(&out));
    }
    let differing: Vec<&String> = trees[0]
        .iter()
        .filter(|(k, v)| trees[1].get(*k) != Some(*v))
        .map(|(k, _)| k)
        .collect();
    let same_set = trees[0].len() == trees[1].len();

    // Library level: a recovery study is independent of the thread count.
    let cfg = SimConfig::new(common::lntacarr(), params, 400, 6, 5);
    let opts = FitOptions {
        n_start: 2,
        std_errors: false,
        ..FitOptions::default()
    };
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let one = pool(1).install(|| recovery_study(&cfg, &opts).unwrap());
    let four = pool(4).install(|| recovery_study(&cfg, &opts).unwrap());

    verdict(
        errors.is_empty() && differing.is_empty() && same_set && one == four,
        format!(
            "{} output files compared across reruns (jobs 1 vs 3), {} differ; recovery 1 vs 4 threads {}{}",
            trees[0].len(),
            differing.len(),
            if one == four { "identical" } else { "DIFFER" },
            if errors.is_empty() { String::new() } else { format!("; errors: {}", errors.join("; ")) }
        ),
    )
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let mut all_pass = true;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = f();
        all_pass &= v.pass;
        println!(
            "criterion {n:>2} {:<26} {}  ({:.1}s) {}",
            name,
            if v.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            v.detail
        );
    };
    report(1, "likelihood oracle", &mut c1_likelihood_oracle);
    report(2, "recursion identity", &mut c2_recursion_identity);

    let t = Instant::now();
    let eta = etacarr_reference().truth;
    let ln = lntacarr_reference().truth;
    let st = Studies {
        eta_3000: study(ModelSpec::tacarr(1, 1, 1, Innovation::Exponential), &eta, 3000, 3),
        eta_1000: study(ModelSpec::tacarr(1, 1, 1, Innovation::Exponential), &eta, 1000, 31),
        ln_3000: study(ModelSpec::tacarr(1, 1, 1, Innovation::Lognormal), &ln, 3000, 4),
        ln_1000: study(ModelSpec::tacarr(1, 1, 1, Innovation::Lognormal), &ln, 1000, 41),
    };
    println!("   (recovery studies, {REPS} replications each: {:.1}s)", t.elapsed().as_secs_f64());
    report(3, "ETACARR recovery", &mut || c3_etacarr(&st));
    report(4, "LNTACARR recovery", &mut || c4_lntacarr(&st));
    report(5, "MADE shrinks with T", &mut || c5_monotone(&st));
    report(6, "nesting and degeneracy", &mut c6_nesting);
    report(7, "diagnostics size", &mut c7_size);
    report(8, "diagnostics power", &mut c8_power);
    report(9, "end-to-end comparison", &mut || c9_workflow(dir.path()));
    report(10, "determinism", &mut || c10_determinism(dir.path()));
    if !all_pass {
        std::process::exit(1);
    }
}
