//! Conditional log-likelihoods under unit-mean exponential and lognormal
//! innovations.
//!
//! All sums run from the path's first recursion index and use pairwise
//! summation so results do not depend on evaluation order details.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::model::LambdaPath;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Innovation distribution with unit mean. Lognormal carries one variance
/// `theta2` per branch; the log-location is `-theta2 / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InnovationLaw {
    Exponential,
    Lognormal { theta2: Vec<f64> },
}

impl InnovationLaw {
    fn theta2(&self, branch: usize) -> Option<f64> {
        match self {
            InnovationLaw::Exponential => None,
            InnovationLaw::Lognormal { theta2 } => Some(theta2[branch.min(theta2.len() - 1)]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InnovationLaw::Exponential => Ok(()),
            InnovationLaw::Lognormal { theta2 } if theta2.is_empty() => {
                Err(Error::Domain("lognormal law needs at least one theta2".into()))
            }
            InnovationLaw::Lognormal { theta2 } => {
                if theta2.iter().all(|&t| t > 0.0 && t.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::Domain("theta2 must be positive".into()))
                }
            }
        }
    }

    /// CDF of the innovation in `branch`.
    pub fn cdf(&self, x: f64, branch: usize) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self.theta2(branch) {
            None => -(-x).exp_m1(),
            Some(t2) => {
                let z = (x.ln() + 0.5 * t2) / t2.sqrt();
                0.5 * erfc(-z / std::f64::consts::SQRT_2)
            }
        }
    }
}

/// Sum with pairwise reduction.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

fn check_lengths(values: &[f64], path: &LambdaPath) -> Result<()> {
    if values.len() > path.len() || path.start > values.len() {
        return Err(Error::Argument(format!(
            "series of length {} does not match lambda path of length {} (start {})",
            values.len(),
            path.len(),
            path.start
        )));
    }
    Ok(())
}

/// `-sum_t (ln lambda_t + R_t / lambda_t)` over `t >= path.start`.
pub fn loglik_exponential(values: &[f64], path: &LambdaPath) -> Result<f64> {
    check_lengths(values, path)?;
    let lam = &path.values[path.start..values.len()];
    if let Some(i) = lam.iter().position(|&l| !(l > 0.0)) {
        return Err(Error::Domain(format!("lambda at t={} is not positive", path.start + i)));
    }
    Ok(exponential_sum(&values[path.start..], lam))
}

pub(crate) fn exponential_sum(values: &[f64], lambda: &[f64]) -> f64 {
    let terms: Vec<f64> = values
        .iter()
        .zip(lambda)
        .map(|(r, l)| -(l.ln() + r / l))
        .collect();
    pairwise_sum(&terms)
}

/// Lognormal log-likelihood with `theta2[path.branch[t]]` selecting the
/// regime variance at each period.
pub fn loglik_lognormal(values: &[f64], path: &LambdaPath, theta2: &[f64]) -> Result<f64> {
    check_lengths(values, path)?;
    InnovationLaw::Lognormal { theta2: theta2.to_vec() }.validate()?;
    let obs = &values[path.start..];
    if let Some(i) = obs.iter().position(|&r| !(r > 0.0)) {
        return Err(Error::Domain(format!(
            "lognormal likelihood needs R > 0 but R at t={} is {}; apply a zero-range floor",
            path.start + i,
            obs[i]
        )));
    }
    let lam = &path.values[path.start..values.len()];
    if lam.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Domain("lambda must be positive".into()));
    }
    if path.branch[path.start..values.len()].iter().any(|&b| b >= theta2.len()) {
        return Err(Error::Argument("branch index exceeds number of theta2 values".into()));
    }
    let ln_r: Vec<f64> = obs.iter().map(|r| r.ln()).collect();
    Ok(lognormal_sum(&ln_r, lam, &path.branch[path.start..values.len()], theta2))
}

pub(crate) fn lognormal_sum(ln_r: &[f64], lambda: &[f64], branch: &[usize], theta2: &[f64]) -> f64 {
    let consts: Vec<(f64, f64)> = theta2.iter().map(|&t| ((LN_2PI + t.ln()), t)).collect();
    let terms: Vec<f64> = ln_r
        .iter()
        .zip(lambda)
        .zip(branch)
        .map(|((lr, l), &b)| {
            let (c, t2) = consts[b];
            let z = lr - l.ln() + 0.5 * t2;
            -0.5 * (c + 2.0 * lr + z * z / t2)
        })
        .collect();
    pairwise_sum(&terms)
}

/// Standardized residuals `R_t / lambda_t` from the first recursion index,
/// with the branch that produced each `lambda_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedResiduals {
    pub values: Vec<f64>,
    pub branch: Vec<usize>,
}

impl StandardizedResiduals {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Residuals belonging to one branch.
    pub fn subset(&self, branch: usize) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.branch)
            .filter(|(_, &b)| b == branch)
            .map(|(&v, _)| v)
            .collect()
    }
}

pub fn standardized_residuals(values: &[f64], path: &LambdaPath) -> Result<StandardizedResiduals> {
    check_lengths(values, path)?;
    let range = path.start..values.len();
    if path.values[range.clone()].iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Domain("lambda must be positive".into()));
    }
    Ok(StandardizedResiduals {
        values: values[range.clone()]
            .iter()
            .zip(&path.values[range.clone()])
            .map(|(r, l)| r / l)
            .collect(),
        branch: path.branch[range].to_vec(),
    })
}
