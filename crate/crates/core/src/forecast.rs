//! One-step-ahead forecasting, rolling out-of-sample runs and in-sample
//! accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit, FitOptions, FitResult};
use crate::model::{conditional_mean_extended, Family, ModelSpec, ParamVector};
use crate::range::RangeObs;

/// Forecast of the next total range and the branch that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub value: f64,
    pub branch: usize,
}

/// Conditional mean one period past the end of `history`.
pub fn forecast_next(spec: &ModelSpec, params: &ParamVector, history: &[RangeObs]) -> Result<Forecast> {
    let cm = conditional_mean_extended(spec, params, history)?;
    let t = history.len();
    Ok(Forecast {
        value: cm.total_at(t),
        branch: cm.branch()[t],
    })
}

/// One-step forecast from a fitted model; `history` should be the data the
/// model was fitted on (or a window of the same shape ending at the
/// forecast origin).
pub fn one_step_forecast(fit: &FitResult, history: &[RangeObs]) -> Result<Forecast> {
    forecast_next(&frozen_spec(fit), &fit.params, history)
}

// TARR fits report the threshold they used; freeze it for forecasting.
fn frozen_spec(fit: &FitResult) -> ModelSpec {
    let mut spec = fit.spec;
    if spec.family == Family::Tarr {
        spec.threshold = fit.threshold;
    }
    spec
}

/// Root-mean-square and mean-absolute error with their denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub rmse: f64,
    pub mae: f64,
    pub n: usize,
}

pub fn accuracy(errors: &[f64]) -> Accuracy {
    let n = errors.len();
    if n == 0 {
        return Accuracy {
            rmse: f64::NAN,
            mae: f64::NAN,
            n,
        };
    }
    let sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
    let ab: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    Accuracy {
        rmse: (crate::likelihood::pairwise_sum(&sq) / n as f64).sqrt(),
        mae: crate::likelihood::pairwise_sum(&ab) / n as f64,
        n,
    }
}

/// In-sample errors `R_t - lambda_t` over the recursion span of a fit.
pub fn insample_accuracy(fit: &FitResult, ranges: &[RangeObs]) -> Result<Accuracy> {
    if ranges.len() != fit.lambda.len() {
        return Err(Error::Argument(format!(
            "fit covers {} observations, got {}",
            fit.lambda.len(),
            ranges.len()
        )));
    }
    let e: Vec<f64> = ranges[fit.start..]
        .iter()
        .zip(fit.fitted())
        .map(|(o, l)| o.r - l)
        .collect();
    Ok(accuracy(&e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingOptions {
    /// Refit every this many steps; `None` fits once on the first window.
    pub refit_every: Option<usize>,
    /// Options for the first (cold) fit.
    pub fit: FitOptions,
    /// Multi-start count for warm-started refits.
    pub warm_starts: usize,
}

impl Default for RollingOptions {
    fn default() -> Self {
        Self {
            refit_every: Some(1),
            fit: FitOptions {
                std_errors: false,
                ..FitOptions::default()
            },
            warm_starts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastStep {
    /// Index of the forecast period in the full series.
    pub index: usize,
    pub realized: f64,
    pub forecast: f64,
    pub branch: usize,
    /// Whether the parameters in use came from a converged fit.
    pub converged: bool,
    /// Estimates when this step refitted.
    pub refit: Option<ParamVector>,
    pub llf: Option<f64>,
}

impl ForecastStep {
    pub fn error(&self) -> f64 {
        self.realized - self.forecast
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRun {
    pub spec: ModelSpec,
    pub window: usize,
    pub steps: Vec<ForecastStep>,
    pub accuracy: Accuracy,
}

impl ForecastRun {
    pub fn errors(&self) -> Vec<f64> {
        self.steps.iter().map(ForecastStep::error).collect()
    }

    pub fn forecasts(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.forecast).collect()
    }
}

/// Rolling-window one-step forecasts for periods `window..series.len()`.
/// Each forecast uses only the `window` observations before it.
pub fn rolling_forecast(
    series: &[RangeObs],
    spec: &ModelSpec,
    window: usize,
    options: &RollingOptions,
) -> Result<ForecastRun> {
    if window == 0 || window >= series.len() {
        return Err(Error::Argument(format!(
            "window {window} must be positive and below the series length {}",
            series.len()
        )));
    }
    if options.refit_every == Some(0) {
        return Err(Error::Argument("refit_every must be positive".into()));
    }
    let n_steps = series.len() - window;
    let mut steps = Vec::with_capacity(n_steps);
    let mut current: Option<FitResult> = None;
    for i in 0..n_steps {
        let data = &series[i..i + window];
        let due = match (&current, options.refit_every) {
            (None, _) => true,
            (Some(_), Some(every)) => i % every == 0,
            (Some(_), None) => false,
        };
        let mut refit = None;
        let mut llf = None;
        if due {
            let opts = match &current {
                None => options.fit.clone(),
                Some(prev) => FitOptions {
                    initial: Some(prev.params.clone()),
                    n_start: options.warm_starts.max(1),
                    ..options.fit.clone()
                },
            };
            let f = fit(spec, data, &opts)?;
            refit = Some(f.params.clone());
            llf = Some(f.llf);
            current = Some(f);
        }
        let f = current.as_ref().expect("fitted above");
        let fc = one_step_forecast(f, data)?;
        steps.push(ForecastStep {
            index: i + window,
            realized: series[i + window].r,
            forecast: fc.value,
            branch: fc.branch,
            converged: f.converged,
            refit,
            llf,
        });
    }
    let errors: Vec<f64> = steps.iter().map(ForecastStep::error).collect();
    Ok(ForecastRun {
        spec: *spec,
        window,
        steps,
        accuracy: accuracy(&errors),
    })
}
