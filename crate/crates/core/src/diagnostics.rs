//! Residual and forecast-comparison tests: Kolmogorov–Smirnov against the
//! fitted innovation law, Ljung–Box, Diebold–Mariano, and sample
//! autocorrelations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimation::{fit, FitOptions, FitResult};
use crate::likelihood::{pairwise_sum, InnovationLaw, StandardizedResiduals};
use crate::model::{Family, Innovation};
use crate::simulation::{derive_seed, simulate_path, SimConfig};

/// Residuals per regime below this are not tested.
pub const MIN_KS_SAMPLE: usize = 10;

/// Two-sided 99% normal quantile used for autocorrelation bands.
pub const Z_995: f64 = 2.575_829_303_548_901;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub lags: Option<usize>,
    pub detail: Option<String>,
    /// Per-regime components, when the test was run per regime.
    pub parts: Vec<TestReport>,
    pub warnings: Vec<String>,
}

impl TestReport {
    fn new(name: impl Into<String>, statistic: f64, p_value: f64, n: usize) -> Self {
        Self {
            name: name.into(),
            statistic,
            p_value: p_value.clamp(0.0, 1.0),
            n,
            lags: None,
            detail: None,
            parts: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// Innovation law implied by a fit.
pub fn fitted_law(fit: &FitResult) -> InnovationLaw {
    match fit.spec.innovation {
        Innovation::Exponential => InnovationLaw::Exponential,
        Innovation::Lognormal => InnovationLaw::Lognormal {
            theta2: fit.params.theta2.clone(),
        },
    }
}

/// Survival function of the Kolmogorov distribution, `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if !(x > 0.0) {
        return 1.0;
    }
    if x < 1.0 {
        // Theta-function form converges fast for small arguments.
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * x * x);
        let mut s = 0.0;
        for k in 1..=20 {
            let j = (2 * k - 1) as f64;
            s += (-j * j * c).exp();
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * x * x).exp();
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// `sup |F_n - F|` for a sample against a continuous CDF.
pub fn ks_statistic(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut u: Vec<f64> = xs.iter().map(|&x| cdf(x)).collect();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    u.iter()
        .enumerate()
        .map(|(i, &f)| {
            let lo = f - i as f64 / n;
            let hi = (i + 1) as f64 / n - f;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// One-sample KS test with the asymptotic p-value at `sqrt(n) D`.
pub fn ks_one_sample(name: &str, xs: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestReport> {
    if xs.is_empty() {
        return Err(Error::Argument("KS test needs at least one observation".into()));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite value in KS sample".into()));
    }
    let d = ks_statistic(xs, cdf);
    let n = xs.len();
    Ok(TestReport::new(name, d, kolmogorov_sf((n as f64).sqrt() * d), n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum KsMode {
    /// Each regime against its own law; the report carries the largest
    /// statistic and that regime's p-value.
    PerRegime,
    /// All residuals through their regime's CDF, tested against Uniform(0, 1).
    #[default]
    PooledPit,
}

pub fn ks_test(residuals: &StandardizedResiduals, law: &InnovationLaw, mode: KsMode) -> Result<TestReport> {
    law.validate()?;
    if residuals.values.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::Domain("standardized residuals must be finite and non-negative".into()));
    }
    match mode {
        KsMode::PooledPit => {
            let u: Vec<f64> = residuals
                .values
                .iter()
                .zip(&residuals.branch)
                .map(|(&x, &b)| law.cdf(x, b))
                .collect();
            let mut rep = ks_one_sample("KS (pooled PIT)", &u, |v| v.clamp(0.0, 1.0))?;
            rep.detail = Some(law_label(law));
            Ok(rep)
        }
        KsMode::PerRegime => {
            let n_branch = residuals.branch.iter().copied().max().map_or(0, |m| m + 1);
            let mut parts = Vec::new();
            let mut warnings = Vec::new();
            for b in 0..n_branch {
                let xs = residuals.subset(b);
                if xs.len() < MIN_KS_SAMPLE {
                    warnings.push(format!(
                        "regime {b}: {} residuals, fewer than {MIN_KS_SAMPLE}; skipped",
                        xs.len()
                    ));
                    continue;
                }
                let mut part = ks_one_sample(&format!("KS regime {b}"), &xs, |x| law.cdf(x, b))?;
                part.detail = Some(format!("branch {b}"));
                parts.push(part);
            }
            let worst = parts
                .iter()
                .max_by(|a, b| a.statistic.total_cmp(&b.statistic))
                .ok_or_else(|| Error::Argument("no regime has enough residuals for a KS test".into()))?;
            let mut rep = TestReport::new("KS (per regime)", worst.statistic, worst.p_value, worst.n);
            rep.detail = Some(law_label(law));
            rep.parts = parts;
            rep.warnings = warnings;
            Ok(rep)
        }
    }
}

fn law_label(law: &InnovationLaw) -> String {
    match law {
        InnovationLaw::Exponential => "Exp(1)".into(),
        InnovationLaw::Lognormal { theta2 } => {
            let t: Vec<String> = theta2.iter().map(|t| format!("{t}")).collect();
            format!("LN(-theta2/2, theta2), theta2 = [{}]", t.join(", "))
        }
    }
}

/// KS test of a fit's residuals with a parametric-bootstrap p-value: the
/// fitted model is simulated `n_boot` times, refitted, and the statistic
/// recomputed. Only families that can be simulated are supported.
pub fn ks_bootstrap(
    fitted: &FitResult,
    mode: KsMode,
    n_boot: usize,
    seed: u64,
    fit_options: &FitOptions,
) -> Result<TestReport> {
    let observed = ks_test(&fitted.residuals, &fitted_law(fitted), mode)?;
    if n_boot == 0 {
        return Err(Error::Argument("n_boot must be positive".into()));
    }
    let mut spec = fitted.spec;
    if spec.family == Family::Tarr {
        spec.threshold = fitted.threshold;
    }
    let t_len = fitted.lambda.len();
    let config = SimConfig::new(spec, fitted.params.clone(), t_len, n_boot, seed);
    config.validate()?;
    let stats: Vec<Option<f64>> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let path = simulate_path(&config, b).ok()?;
            let opts = FitOptions {
                seed: derive_seed(seed, b as u64),
                std_errors: false,
                initial: Some(fitted.params.clone()),
                ..fit_options.clone()
            };
            let mut fspec = fitted.spec;
            if fspec.family == Family::Tarr {
                fspec.threshold = fitted.threshold;
            }
            let f = fit(&fspec, &path.ranges, &opts).ok()?;
            ks_test(&f.residuals, &fitted_law(&f), mode).ok().map(|r| r.statistic)
        })
        .collect();
    let ok: Vec<f64> = stats.into_iter().flatten().collect();
    if ok.is_empty() {
        return Err(Error::Numeric("every bootstrap replication failed".into()));
    }
    let exceed = ok.iter().filter(|&&d| d >= observed.statistic).count();
    let mut rep = observed.clone();
    rep.name = format!("{} bootstrap", observed.name);
    rep.p_value = (1 + exceed) as f64 / (1 + ok.len()) as f64;
    if ok.len() < n_boot {
        rep.warnings.push(format!("{} of {n_boot} bootstrap replications failed", n_boot - ok.len()));
    }
    rep.detail = Some(format!("{} replications; asymptotic p = {}", ok.len(), observed.p_value));
    Ok(rep)
}

/// Sample autocorrelations at lags `1..=max_lag`.
pub fn acf(xs: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = xs.len();
    if max_lag == 0 || n <= max_lag {
        return Err(Error::Argument(format!("need more than {max_lag} observations for {max_lag} lags")));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite value in series".into()));
    }
    let m = pairwise_sum(xs) / n as f64;
    let c: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let sq: Vec<f64> = c.iter().map(|x| x * x).collect();
    let c0 = pairwise_sum(&sq);
    if !(c0 > 0.0) {
        return Err(Error::Degenerate("autocorrelation undefined for a constant series".into()));
    }
    Ok((1..=max_lag)
        .map(|k| {
            let prod: Vec<f64> = c[k..].iter().zip(&c[..n - k]).map(|(a, b)| a * b).collect();
            pairwise_sum(&prod) / c0
        })
        .collect())
}

/// Autocorrelations with the +/- band of an i.i.d. series at 99%.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlogram {
    pub values: Vec<f64>,
    pub band: f64,
}

pub fn correlogram(xs: &[f64], max_lag: usize) -> Result<Correlogram> {
    Ok(Correlogram {
        values: acf(xs, max_lag)?,
        band: Z_995 / (xs.len() as f64).sqrt(),
    })
}

/// Ljung–Box portmanteau test with `h` degrees of freedom.
pub fn ljung_box(xs: &[f64], h: usize) -> Result<TestReport> {
    let rho = acf(xs, h)?;
    let n = xs.len() as f64;
    let q = n * (n + 2.0) * rho.iter().enumerate().map(|(i, r)| r * r / (n - (i + 1) as f64)).sum::<f64>();
    let chi = ChiSquared::new(h as f64).map_err(|e| Error::Argument(e.to_string()))?;
    let mut rep = TestReport::new(format!("Q({h})"), q, chi.sf(q), xs.len());
    rep.lags = Some(h);
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Loss {
    #[default]
    Squared,
    Absolute,
}

impl Loss {
    pub fn apply(self, e: f64) -> f64 {
        match self {
            Loss::Squared => e * e,
            Loss::Absolute => e.abs(),
        }
    }
}

/// Long-run variance estimator for the loss differential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum LongRunVariance {
    /// Sample variance (n - 1 denominator); right for one-step forecasts.
    #[default]
    Sample,
    /// Bartlett-weighted autocovariances up to `lags`.
    NeweyWest { lags: usize },
}

/// Minimum sample size for [`dm_test`].
pub const MIN_DM_SAMPLE: usize = 10;

/// Diebold–Mariano test of equal accuracy against the one-sided
/// alternative that forecaster A is more accurate. The differential is
/// `L(e_B) - L(e_A)`, so a positive statistic favors A.
pub fn dm_test(e_a: &[f64], e_b: &[f64], loss: Loss, lrv: LongRunVariance) -> Result<TestReport> {
    if e_a.len() != e_b.len() {
        return Err(Error::Argument(format!(
            "forecast error lengths differ: {} vs {}",
            e_a.len(),
            e_b.len()
        )));
    }
    let n = e_a.len();
    if n < MIN_DM_SAMPLE {
        return Err(Error::Argument(format!("DM test needs at least {MIN_DM_SAMPLE} errors, got {n}")));
    }
    if e_a.iter().chain(e_b).any(|e| !e.is_finite()) {
        return Err(Error::Numeric("non-finite forecast error".into()));
    }
    let d: Vec<f64> = e_a.iter().zip(e_b).map(|(a, b)| loss.apply(*b) - loss.apply(*a)).collect();
    if d.iter().all(|&x| x == 0.0) {
        let mut rep = TestReport::new("DM", 0.0, 1.0, n);
        rep.detail = Some("no difference: identical losses".into());
        return Ok(rep);
    }
    let nf = n as f64;
    let mean = pairwise_sum(&d) / nf;
    let c: Vec<f64> = d.iter().map(|x| x - mean).collect();
    let autocov = |k: usize| -> f64 {
        let prod: Vec<f64> = c[k..].iter().zip(&c[..n - k]).map(|(a, b)| a * b).collect();
        pairwise_sum(&prod)
    };
    let var = match lrv {
        LongRunVariance::Sample => autocov(0) / (nf - 1.0),
        LongRunVariance::NeweyWest { lags } => {
            let mut s = autocov(0) / nf;
            for k in 1..=lags.min(n - 1) {
                let w = 1.0 - k as f64 / (lags as f64 + 1.0);
                s += 2.0 * w * autocov(k) / nf;
            }
            s
        }
    };
    // A differential that is constant up to rounding has no usable variance.
    if !(var > 1e-28 * mean * mean) {
        return Err(Error::Degenerate(
            "loss differential has zero variance but nonzero mean".into(),
        ));
    }
    let stat = mean / (var / nf).sqrt();
    let normal = Normal::standard();
    let mut rep = TestReport::new("DM", stat, normal.sf(stat), n);
    rep.detail = Some(match loss {
        Loss::Squared => "squared loss; positive favors A".into(),
        Loss::Absolute => "absolute loss; positive favors A".into(),
    });
    if let LongRunVariance::NeweyWest { lags } = lrv {
        rep.lags = Some(lags);
    }
    Ok(rep)
}
