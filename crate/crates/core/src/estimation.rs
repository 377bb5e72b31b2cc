//! Constrained maximum-likelihood estimation.
//!
//! The negative log-likelihood is minimized with Nelder-Mead over the free
//! parameters. Proposals outside the feasible set are projected onto it and
//! charged a quadratic penalty on the projection distance, so the simplex is
//! pulled back towards the boundary instead of stalling on an infinite wall.
//! Several starts (the moment-based initial point plus seeded jitters of it)
//! run independently; the best feasible optimum wins, ties going to the
//! lower start index.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{self, StandardizedResiduals};
use crate::model::{mean, ConditionalMean, Design, Innovation, ModelSpec, ParamVector};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::range::RangeObs;

const PENALTY: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Seed for the multi-start jitter.
    pub seed: u64,
    pub n_start: usize,
    /// Objective-evaluation budget per start.
    pub max_iter: usize,
    /// Parameter tolerance.
    pub xtol: f64,
    /// Log-likelihood tolerance.
    pub ftol: f64,
    /// Relative half-width of the uniform multi-start jitter.
    pub jitter: f64,
    /// Minimum likelihood terms per free parameter; `None` disables the check.
    pub min_obs_per_param: Option<usize>,
    /// Replaces the moment-based starting point (warm start).
    pub initial: Option<ParamVector>,
    /// Parameters held fixed, by name.
    pub fixed: BTreeMap<String, f64>,
    pub std_errors: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            n_start: 8,
            max_iter: 20_000,
            xtol: 1e-8,
            ftol: 1e-10,
            jitter: 0.5,
            min_obs_per_param: Some(10),
            initial: None,
            fixed: BTreeMap::new(),
            std_errors: true,
        }
    }
}

/// Standard errors (or the reason they are unavailable).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdErrors {
    /// Aligned with the spec's parameter names; `None` for fixed parameters
    /// or when the Hessian is not positive definite.
    pub values: Vec<Option<f64>>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub param_names: Vec<String>,
    pub params: ParamVector,
    pub std_errors: StdErrors,
    pub llf: f64,
    pub aic: f64,
    pub bic: f64,
    /// Free-parameter count.
    pub k: usize,
    /// Number of likelihood terms.
    pub n_eff: usize,
    pub converged: bool,
    pub best_start: usize,
    pub evaluations: usize,
    /// TARR threshold actually used.
    pub threshold: Option<f64>,
    /// First recursion index.
    pub start: usize,
    /// Conditional mean of the total range, full series length.
    pub lambda: Vec<f64>,
    /// Upward/downward conditional means (directional families).
    pub components: Option<(Vec<f64>, Vec<f64>)>,
    pub residuals: StandardizedResiduals,
}

impl FitResult {
    pub fn fixed_names(&self) -> Vec<&str> {
        self.param_names
            .iter()
            .zip(&self.std_errors.values)
            .filter(|(_, s)| s.is_none())
            .map(|(n, _)| n.as_str())
            .collect()
    }

    /// Branch per likelihood term.
    pub fn branch_path(&self) -> &[usize] {
        &self.residuals.branch
    }

    pub fn fitted(&self) -> &[f64] {
        &self.lambda[self.start..]
    }
}

/// `(aic, bic)` from the maximized log-likelihood.
pub fn information_criteria(llf: f64, k: usize, n_eff: usize) -> (f64, f64) {
    let k = k as f64;
    (-2.0 * llf + 2.0 * k, -2.0 * llf + k * (n_eff as f64).ln())
}

/// Negative log-likelihood over a fixed data set.
pub(crate) struct Objective {
    pub design: Design,
    ln_r: Vec<f64>,
    ln_ru: Vec<f64>,
    ln_rd: Vec<f64>,
}

impl Objective {
    pub fn new(spec: &ModelSpec, ranges: &[RangeObs]) -> Result<Self> {
        let design = Design::new(spec, ranges, false)?;
        let start = design.start;
        let ln = |xs: &[f64], what: &str| -> Result<Vec<f64>> {
            if spec.innovation == Innovation::Exponential {
                return Ok(Vec::new());
            }
            xs[start..]
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    if v > 0.0 {
                        Ok(v.ln())
                    } else {
                        Err(Error::Domain(format!(
                            "lognormal {spec} needs positive {what}, found {v} at t={}; apply a zero-range floor",
                            start + i
                        )))
                    }
                })
                .collect()
        };
        let (ln_r, ln_ru, ln_rd) = if spec.family.is_directional() {
            (Vec::new(), ln(&design.ru, "upward ranges")?, ln(&design.rd, "downward ranges")?)
        } else {
            (ln(&design.r, "ranges")?, Vec::new(), Vec::new())
        };
        Ok(Self {
            design,
            ln_r,
            ln_ru,
            ln_rd,
        })
    }

    pub fn n_eff(&self) -> usize {
        self.design.r.len() - self.design.start
    }

    /// Log-likelihood without parameter validation (shapes must match).
    pub fn loglik(&self, params: &ParamVector) -> f64 {
        if params.theta2.iter().any(|&t| !(t > 0.0)) {
            return f64::NEG_INFINITY;
        }
        let d = &self.design;
        let s = d.start;
        let paths = d.values(params);
        match d.spec.innovation {
            Innovation::Exponential => {
                if d.spec.family.is_directional() {
                    likelihood::exponential_sum(&d.ru[s..], &paths[0][s..])
                        + likelihood::exponential_sum(&d.rd[s..], &paths[1][s..])
                } else {
                    likelihood::exponential_sum(&d.r[s..], &paths[0][s..])
                }
            }
            Innovation::Lognormal => {
                if d.spec.family.is_directional() {
                    let zeros = vec![0usize; self.ln_ru.len()];
                    likelihood::lognormal_sum(&self.ln_ru, &paths[0][s..], &zeros, &params.theta2[..1])
                        + likelihood::lognormal_sum(&self.ln_rd, &paths[1][s..], &zeros, &params.theta2[1..])
                } else {
                    likelihood::lognormal_sum(&self.ln_r, &paths[0][s..], &d.select[s..d.r.len()], &params.theta2)
                }
            }
        }
    }
}

/// Moment-based starting values.
pub fn initial_params(spec: &ModelSpec, ranges: &[RangeObs]) -> ParamVector {
    let r: Vec<f64> = ranges.iter().map(|o| o.r).collect();
    let level = |xs: &[f64]| mean(xs).max(1e-6);
    let levels: Vec<f64> = if spec.family.is_directional() {
        vec![
            level(&ranges.iter().map(|o| o.ru).collect::<Vec<_>>()),
            level(&ranges.iter().map(|o| o.rd).collect::<Vec<_>>()),
        ]
    } else {
        vec![level(&r); spec.n_branches()]
    };
    let mut flat = Vec::with_capacity(spec.n_params());
    for lv in &levels {
        flat.push(0.1 * lv);
        flat.extend(std::iter::repeat_n(0.2 / spec.p as f64, spec.p));
        flat.extend(std::iter::repeat_n(0.6 / spec.q as f64, spec.q));
    }
    flat.extend(std::iter::repeat_n(0.05 / spec.l as f64, 2 * spec.n_gamma()));
    if spec.n_theta2() > 0 {
        let m = level(&r);
        let logs: Vec<f64> = r.iter().filter(|&&v| v > 0.0).map(|v| (v / m).ln()).collect();
        let lm = mean(&logs);
        let var = logs.iter().map(|x| (x - lm).powi(2)).sum::<f64>() / (logs.len().max(2) - 1) as f64;
        let t2 = if var.is_finite() && var > 1e-6 { var } else { 0.25 };
        flat.extend(std::iter::repeat_n(t2, spec.n_theta2()));
    }
    ParamVector::from_flat(spec, &flat).expect("shape built from spec")
}

/// Layout of free versus fixed coordinates.
struct Layout {
    template: Vec<f64>,
    free: Vec<usize>,
}

impl Layout {
    fn new(spec: &ModelSpec, base: &ParamVector, fixed: &BTreeMap<String, f64>) -> Result<Self> {
        let names = spec.param_names();
        let mut template = base.to_flat();
        for (name, &v) in fixed {
            let i = names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Argument(format!("{spec} has no parameter named '{name}'")))?;
            template[i] = v;
        }
        let free = (0..names.len()).filter(|i| !fixed.contains_key(&names[*i])).collect();
        Ok(Self { template, free })
    }

    fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut full = self.template.clone();
        for (&i, &v) in self.free.iter().zip(x) {
            full[i] = v;
        }
        full
    }

    fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| full[i]).collect()
    }
}

struct StartOutcome {
    index: usize,
    x: Vec<f64>,
    nll: f64,
    evals: usize,
    converged: bool,
}

/// Maximum-likelihood fit of `spec` to `ranges`.
pub fn fit(spec: &ModelSpec, ranges: &[RangeObs], options: &FitOptions) -> Result<FitResult> {
    let objective = Objective::new(spec, ranges)?;
    let n_eff = objective.n_eff();
    let names = spec.param_names();

    let base = match &options.initial {
        Some(p) => {
            if ParamVector::from_flat(spec, &p.to_flat()).map(|q| q != *p).unwrap_or(true) {
                return Err(Error::Argument(format!("initial parameters do not match {spec}")));
            }
            p.clone()
        }
        None => initial_params(spec, ranges),
    };
    let layout = Layout::new(spec, &base, &options.fixed)?;
    let k = layout.free.len();
    if let Some(m) = options.min_obs_per_param {
        if n_eff < m * k {
            return Err(Error::Argument(format!(
                "{spec}: {n_eff} likelihood terms for {k} free parameters (need at least {})",
                m * k
            )));
        }
    }

    let penalized = |x: &[f64]| -> f64 {
        let full = layout.expand(x);
        let mut p = ParamVector::from_flat(spec, &full).expect("layout shape");
        p.project(spec);
        let proj = p.to_flat();
        let dist: f64 = full.iter().zip(&proj).map(|(a, b)| (a - b) * (a - b)).sum();
        -objective.loglik(&p) + PENALTY * dist
    };

    let nm = NelderMeadOptions {
        max_evals: options.max_iter,
        xtol: options.xtol,
        ftol: options.ftol,
        ..NelderMeadOptions::default()
    };
    let x_base = {
        let mut p = ParamVector::from_flat(spec, &layout.template).expect("layout shape");
        p.project(spec);
        layout.restrict(&p.to_flat())
    };
    let n_start = options.n_start.max(1);
    let starts: Vec<Vec<f64>> = (0..n_start)
        .map(|s| {
            if s == 0 {
                return x_base.clone();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(s as u64);
            let jittered: Vec<f64> = x_base
                .iter()
                .map(|v| v * (1.0 + rng.random_range(-options.jitter..=options.jitter)))
                .collect();
            let mut p = ParamVector::from_flat(spec, &layout.expand(&jittered)).expect("layout shape");
            p.project(spec);
            layout.restrict(&p.to_flat())
        })
        .collect();

    let outcomes: Vec<StartOutcome> = starts
        .into_par_iter()
        .enumerate()
        .map(|(index, x0)| {
            let res = nelder_mead(&penalized, &x0, &nm);
            StartOutcome {
                index,
                x: res.x,
                nll: res.f,
                evals: res.evals,
                converged: res.converged,
            }
        })
        .collect();
    let evaluations = outcomes.iter().map(|o| o.evals).sum();
    let best = outcomes
        .iter()
        .min_by(|a, b| a.nll.total_cmp(&b.nll).then(a.index.cmp(&b.index)))
        .expect("at least one start");

    let mut params = ParamVector::from_flat(spec, &layout.expand(&best.x))?;
    params.project(spec);
    if !objective.loglik(&params).is_finite() {
        return Err(Error::Numeric(format!("{spec}: no start reached a finite log-likelihood")));
    }

    let mut result = assemble(spec, ranges, &objective, params, n_eff, k)?;
    result.converged = best.converged;
    result.best_start = best.index;
    result.evaluations = evaluations;
    result.std_errors = StdErrors {
        values: vec![None; names.len()],
        note: Some("not computed".into()),
    };
    if options.std_errors {
        result.std_errors = standard_errors_with(&objective, &result.params, &layout);
    }
    Ok(result)
}

fn assemble(
    spec: &ModelSpec,
    ranges: &[RangeObs],
    objective: &Objective,
    params: ParamVector,
    n_eff: usize,
    k: usize,
) -> Result<FitResult> {
    let cm = objective.design.evaluate(&params);
    let r: Vec<f64> = ranges.iter().map(|o| o.r).collect();
    let llf = match &cm {
        ConditionalMean::Single(path) => match spec.innovation {
            Innovation::Exponential => likelihood::loglik_exponential(&r, path)?,
            Innovation::Lognormal => likelihood::loglik_lognormal(&r, path, &params.theta2)?,
        },
        ConditionalMean::Directional { up, down } => {
            let ru: Vec<f64> = ranges.iter().map(|o| o.ru).collect();
            let rd: Vec<f64> = ranges.iter().map(|o| o.rd).collect();
            match spec.innovation {
                Innovation::Exponential => {
                    likelihood::loglik_exponential(&ru, up)? + likelihood::loglik_exponential(&rd, down)?
                }
                Innovation::Lognormal => {
                    likelihood::loglik_lognormal(&ru, up, &params.theta2[..1])?
                        + likelihood::loglik_lognormal(&rd, down, &params.theta2[1..])?
                }
            }
        }
    };
    let (aic, bic) = information_criteria(llf, k, n_eff);
    let lambda = cm.total();
    let start = cm.start();
    let mut residuals = likelihood::standardized_residuals(
        &r,
        &crate::model::LambdaPath {
            start,
            values: lambda.clone(),
            branch: cm.branch().to_vec(),
        },
    )?;
    residuals.branch.truncate(r.len() - start);
    let components = match &cm {
        ConditionalMean::Directional { up, down } => Some((up.values.clone(), down.values.clone())),
        ConditionalMean::Single(_) => None,
    };
    let threshold = (spec.family == crate::model::Family::Tarr).then(|| spec.threshold.unwrap_or_else(|| mean(&r)));
    Ok(FitResult {
        spec: *spec,
        param_names: spec.param_names(),
        params,
        std_errors: StdErrors {
            values: Vec::new(),
            note: None,
        },
        llf,
        aic,
        bic,
        k,
        n_eff,
        converged: true,
        best_start: 0,
        evaluations: 0,
        threshold,
        start,
        lambda,
        components,
        residuals,
    })
}

/// Evaluates a given parameter vector on `ranges` as if it were a fit
/// (no optimization; all parameters counted as free).
pub fn evaluate(spec: &ModelSpec, params: &ParamVector, ranges: &[RangeObs]) -> Result<FitResult> {
    params.validate(spec)?;
    let objective = Objective::new(spec, ranges)?;
    let n_eff = objective.n_eff();
    let mut res = assemble(spec, ranges, &objective, params.clone(), n_eff, spec.n_params())?;
    res.std_errors = StdErrors {
        values: vec![None; spec.n_params()],
        note: Some("not computed".into()),
    };
    Ok(res)
}

/// Hessian-based standard errors at a fitted optimum. Parameters whose
/// name is in `fixed` are excluded from the Hessian.
pub fn standard_errors(fit: &FitResult, ranges: &[RangeObs], fixed: &BTreeMap<String, f64>) -> Result<StdErrors> {
    let objective = Objective::new(&fit.spec, ranges)?;
    let layout = Layout::new(&fit.spec, &fit.params, fixed)?;
    Ok(standard_errors_with(&objective, &fit.params, &layout))
}

fn standard_errors_with(objective: &Objective, params: &ParamVector, layout: &Layout) -> StdErrors {
    let spec = objective.design.spec;
    let names = spec.param_names();
    let mut values = vec![None; names.len()];
    let x0 = layout.restrict(&params.to_flat());
    let k = x0.len();
    if k == 0 {
        return StdErrors { values, note: None };
    }
    let nll = |x: &[f64]| -> f64 {
        match ParamVector::from_flat(&spec, &layout.expand(x)) {
            Ok(p) => -objective.loglik(&p),
            Err(_) => f64::NAN,
        }
    };
    let h: Vec<f64> = x0.iter().map(|v| 1e-4 * v.abs().max(1e-3)).collect();
    let f0 = nll(&x0);
    let shifted = |moves: &[(usize, f64)]| {
        let mut x = x0.clone();
        for &(i, d) in moves {
            x[i] += d;
        }
        nll(&x)
    };
    let mut hess = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        let fp = shifted(&[(i, h[i])]);
        let fm = shifted(&[(i, -h[i])]);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let fpp = shifted(&[(i, h[i]), (j, h[j])]);
            let fpm = shifted(&[(i, h[i]), (j, -h[j])]);
            let fmp = shifted(&[(i, -h[i]), (j, h[j])]);
            let fmm = shifted(&[(i, -h[i]), (j, -h[j])]);
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    if hess.iter().any(|v| !v.is_finite()) {
        return StdErrors {
            values,
            note: Some("Hessian has non-finite entries".into()),
        };
    }
    let Some(chol) = hess.clone().cholesky() else {
        return StdErrors {
            values,
            note: Some("Hessian of the negative log-likelihood is not positive definite".into()),
        };
    };
    let inv = chol.inverse();
    for (slot, &i) in layout.free.iter().enumerate() {
        let v = inv[(slot, slot)];
        values[i] = (v > 0.0).then(|| v.sqrt());
    }
    StdErrors { values, note: None }
}
