//! Descriptive statistics for range series.

use serde::{Deserialize, Serialize};

use crate::likelihood::pairwise_sum;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        pairwise_sum(xs) / xs.len() as f64
    }
}

/// Sample variance (n - 1 denominator).
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Sample skewness, `m3 / m2^{3/2}` with population moments.
pub fn skewness(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = mean(xs);
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// Summary block for one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub std_dev: f64,
    pub skewness: f64,
    pub zeros: usize,
}

pub fn summarize(xs: &[f64]) -> Summary {
    Summary {
        count: xs.len(),
        min: xs.iter().copied().fold(f64::INFINITY, f64::min),
        mean: mean(xs),
        max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        std_dev: std_dev(xs),
        skewness: skewness(xs),
        zeros: xs.iter().filter(|&&x| x == 0.0).count(),
    }
}
