//! Conditional-mean recursions for the CARR family.
//!
//! Every member shares one engine: at period `t` a branch is selected
//! (always the same branch for CARR/ACARR/FACARR, a regime for TARR and
//! TACARR) and
//!
//! ```text
//! lambda_t = omega_b + sum_i alpha_b,i * X_{t-i} + sum_j beta_b,j * lambda_{t-j}
//!            [+ sum_k gamma_k * Y_{t-k}]
//! ```
//!
//! where `X` is the total range (CARR, TARR, TACARR) or one directional
//! component (ACARR, FACARR) and `Y` is the opposite component (FACARR only).
//! Lagged `lambda` values are the realised path, whichever branch produced
//! them. Periods before the first recursion index hold the sample mean of
//! `X`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::range::{regime_indices, RangeObs};

/// Floor applied to every recursion output.
pub const LAMBDA_FLOOR: f64 = 1e-12;

/// Upper bound on `sum(alpha) + sum(beta)` used by the optimizer when the
/// stationarity constraint is active.
pub const STATIONARY_BOUND: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Carr,
    Acarr,
    Facarr,
    Tarr,
    Tacarr,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Carr => "CARR",
            Family::Acarr => "ACARR",
            Family::Facarr => "FACARR",
            Family::Tarr => "TARR",
            Family::Tacarr => "TACARR",
        }
    }

    /// ACARR and FACARR model the upward and downward ranges separately.
    pub fn is_directional(self) -> bool {
        matches!(self, Family::Acarr | Family::Facarr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Innovation {
    Exponential,
    Lognormal,
}

/// Which inequality constraints the parameters must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum ConstraintMode {
    /// Positivity plus `sum(alpha) + sum(beta) < 1` in every branch.
    #[default]
    Stationary,
    /// Positivity only.
    PositivityOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub p: usize,
    pub q: usize,
    /// Regime window (TACARR) or cross-feedback lag count (FACARR).
    pub l: usize,
    pub innovation: Innovation,
    pub constraint: ConstraintMode,
    /// Threshold delay `d` (TARR only).
    pub delay: usize,
    /// Threshold on the lagged range (TARR only). `None` uses the sample
    /// mean of the series being modelled.
    pub threshold: Option<f64>,
}

impl ModelSpec {
    pub fn new(family: Family, innovation: Innovation) -> Self {
        Self {
            family,
            p: 1,
            q: 1,
            l: 1,
            innovation,
            constraint: ConstraintMode::Stationary,
            delay: 1,
            threshold: None,
        }
    }

    pub fn carr(p: usize, q: usize, innovation: Innovation) -> Self {
        Self::new(Family::Carr, innovation).with_orders(1, p, q)
    }

    pub fn acarr(p: usize, q: usize, innovation: Innovation) -> Self {
        Self::new(Family::Acarr, innovation).with_orders(1, p, q)
    }

    pub fn facarr(p: usize, q: usize, l: usize, innovation: Innovation) -> Self {
        Self::new(Family::Facarr, innovation).with_orders(l, p, q)
    }

    pub fn tarr(p: usize, q: usize, delay: usize, threshold: Option<f64>, innovation: Innovation) -> Self {
        Self {
            delay,
            threshold,
            ..Self::new(Family::Tarr, innovation).with_orders(1, p, q)
        }
    }

    pub fn tacarr(l: usize, p: usize, q: usize, innovation: Innovation) -> Self {
        Self::new(Family::Tacarr, innovation).with_orders(l, p, q)
    }

    pub fn with_orders(mut self, l: usize, p: usize, q: usize) -> Self {
        self.l = l;
        self.p = p;
        self.q = q;
        self
    }

    pub fn with_constraint(mut self, constraint: ConstraintMode) -> Self {
        self.constraint = constraint;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 1 || self.q < 1 {
            return Err(Error::Argument(format!("orders must be positive (p={}, q={})", self.p, self.q)));
        }
        if self.l < 1 {
            return Err(Error::Argument("window l must be at least 1".into()));
        }
        if self.family == Family::Tarr {
            if self.delay < 1 {
                return Err(Error::Argument("TARR delay must be at least 1".into()));
            }
            if let Some(th) = self.threshold {
                if th.is_nan() || th < 0.0 {
                    return Err(Error::Argument(format!("TARR threshold must be non-negative, got {th}")));
                }
            }
        }
        Ok(())
    }

    /// Number of (omega, alpha, beta) blocks.
    pub fn n_branches(&self) -> usize {
        if self.family == Family::Carr {
            1
        } else {
            2
        }
    }

    pub fn n_theta2(&self) -> usize {
        match self.innovation {
            Innovation::Exponential => 0,
            Innovation::Lognormal => self.n_branches(),
        }
    }

    pub fn n_gamma(&self) -> usize {
        if self.family == Family::Facarr {
            self.l
        } else {
            0
        }
    }

    /// Total parameter count.
    pub fn n_params(&self) -> usize {
        self.n_branches() * (1 + self.p + self.q) + 2 * self.n_gamma() + self.n_theta2()
    }

    /// First period index with a recursion output; likelihoods sum from here.
    pub fn start(&self) -> usize {
        let pq = self.p.max(self.q);
        match self.family {
            Family::Carr | Family::Acarr => pq,
            Family::Facarr | Family::Tacarr => pq.max(self.l),
            Family::Tarr => pq.max(self.delay),
        }
    }

    pub fn branch_labels(&self) -> &'static [&'static str] {
        match self.family {
            Family::Carr => &[""],
            Family::Acarr | Family::Facarr => &["u", "d"],
            Family::Tarr => &["r1", "r2"],
            Family::Tacarr => &["U", "D"],
        }
    }

    /// Parameter names in flat order: branch blocks, then gamma blocks, then
    /// the lognormal variances.
    pub fn param_names(&self) -> Vec<String> {
        let labels = self.branch_labels();
        let suffix = |b: &str| if b.is_empty() { String::new() } else { format!("_{b}") };
        let mut names = Vec::with_capacity(self.n_params());
        for b in labels {
            let s = suffix(b);
            names.push(format!("omega{s}"));
            names.extend((1..=self.p).map(|i| format!("alpha{i}{s}")));
            names.extend((1..=self.q).map(|j| format!("beta{j}{s}")));
        }
        for b in labels.iter().take(if self.n_gamma() > 0 { 2 } else { 0 }) {
            names.extend((1..=self.l).map(|k| format!("gamma{k}_{b}")));
        }
        for b in labels.iter().take(self.n_theta2()) {
            names.push(format!("theta2{}", suffix(b)));
        }
        names
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match (self.innovation, self.family) {
            (Innovation::Lognormal, _) => "LN",
            (Innovation::Exponential, Family::Tacarr) => "E",
            (Innovation::Exponential, _) => "",
        };
        match self.family {
            Family::Tacarr => write!(f, "{prefix}TACARR({},{},{})", self.l, self.p, self.q),
            Family::Facarr => write!(f, "{prefix}FACARR({},{},{})", self.p, self.q, self.l),
            fam => write!(f, "{prefix}{}({},{})", fam.name(), self.p, self.q),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    /// Accepts names such as `carr`, `lncarr`, `acarr`, `facarr`, `lntarr`,
    /// `etacarr`, `lntacarr` (case-insensitive), optionally followed by the
    /// orders in display form, e.g. `LNTACARR(1,1,1)` is `(l,p,q)` and
    /// `FACARR(1,1,2)` is `(p,q,l)`. Omitted orders default to 1.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Argument(format!("unknown model name '{s}'"));
        let lower = s.trim().to_ascii_lowercase();
        let (name, orders) = match lower.split_once('(') {
            Some((name, rest)) => {
                let inner = rest.strip_suffix(')').ok_or_else(bad)?;
                let orders = inner
                    .split(',')
                    .map(|v| v.trim().parse::<usize>().map_err(|_| bad()))
                    .collect::<Result<Vec<_>>>()?;
                (name.trim(), Some(orders))
            }
            None => (lower.as_str(), None),
        };
        let (innovation, rest) = if let Some(r) = name.strip_prefix("ln") {
            (Innovation::Lognormal, r)
        } else if let Some(r) = name.strip_prefix('e').filter(|r| !r.is_empty()) {
            (Innovation::Exponential, r)
        } else {
            (Innovation::Exponential, name)
        };
        let family = match rest {
            "carr" => Family::Carr,
            "acarr" => Family::Acarr,
            "facarr" => Family::Facarr,
            "tarr" | "arr" => Family::Tarr,
            "tacarr" => Family::Tacarr,
            _ => return Err(bad()),
        };
        let spec = ModelSpec::new(family, innovation);
        Ok(match (family, orders.as_deref()) {
            (_, None) => spec,
            (Family::Tacarr, Some(&[l, p, q])) => spec.with_orders(l, p, q),
            (Family::Facarr, Some(&[p, q, l])) => spec.with_orders(l, p, q),
            (Family::Carr | Family::Acarr | Family::Tarr, Some(&[p, q])) => spec.with_orders(1, p, q),
            _ => return Err(bad()),
        })
    }
}

/// One branch's intercept and lag coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub omega: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Branch {
    pub fn new(omega: f64, alpha: Vec<f64>, beta: Vec<f64>) -> Self {
        Self { omega, alpha, beta }
    }

    pub fn persistence(&self) -> f64 {
        self.alpha.iter().sum::<f64>() + self.beta.iter().sum::<f64>()
    }

    /// `omega / (1 - persistence)`, or `None` when not stationary.
    pub fn unconditional_mean(&self) -> Option<f64> {
        let s = self.persistence();
        (s < 1.0).then(|| self.omega / (1.0 - s))
    }
}

/// Model parameters grouped by branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub branches: Vec<Branch>,
    /// Cross-feedback coefficients `[gamma_u, gamma_d]` (FACARR only).
    pub gamma: Vec<Vec<f64>>,
    /// Lognormal innovation variances, one per branch.
    pub theta2: Vec<f64>,
}

impl ParamVector {
    pub fn single(branch: Branch) -> Self {
        Self {
            branches: vec![branch],
            gamma: Vec::new(),
            theta2: Vec::new(),
        }
    }

    pub fn two_branch(first: Branch, second: Branch) -> Self {
        Self {
            branches: vec![first, second],
            gamma: Vec::new(),
            theta2: Vec::new(),
        }
    }

    pub fn with_gamma(mut self, up: Vec<f64>, down: Vec<f64>) -> Self {
        self.gamma = vec![up, down];
        self
    }

    pub fn with_theta2(mut self, theta2: Vec<f64>) -> Self {
        self.theta2 = theta2;
        self
    }

    /// Flat vector in [`ModelSpec::param_names`] order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for b in &self.branches {
            v.push(b.omega);
            v.extend_from_slice(&b.alpha);
            v.extend_from_slice(&b.beta);
        }
        for g in &self.gamma {
            v.extend_from_slice(g);
        }
        v.extend_from_slice(&self.theta2);
        v
    }

    pub fn from_flat(spec: &ModelSpec, flat: &[f64]) -> Result<Self> {
        if flat.len() != spec.n_params() {
            return Err(Error::Argument(format!(
                "{spec} has {} parameters, got {}",
                spec.n_params(),
                flat.len()
            )));
        }
        let mut it = flat.iter().copied();
        let mut take = |n: usize| -> Vec<f64> { it.by_ref().take(n).collect() };
        let branches = (0..spec.n_branches())
            .map(|_| {
                let omega = take(1)[0];
                Branch::new(omega, take(spec.p), take(spec.q))
            })
            .collect();
        let gamma = if spec.n_gamma() > 0 {
            vec![take(spec.l), take(spec.l)]
        } else {
            Vec::new()
        };
        let theta2 = take(spec.n_theta2());
        Ok(Self { branches, gamma, theta2 })
    }

    fn check_shape(&self, spec: &ModelSpec) -> Result<()> {
        let shape_ok = self.branches.len() == spec.n_branches()
            && self.branches.iter().all(|b| b.alpha.len() == spec.p && b.beta.len() == spec.q)
            && (spec.n_gamma() == 0 && self.gamma.is_empty()
                || self.gamma.len() == 2 && self.gamma.iter().all(|g| g.len() == spec.n_gamma()))
            && self.theta2.len() == spec.n_theta2();
        if shape_ok {
            Ok(())
        } else {
            Err(Error::Argument(format!("parameter blocks do not match {spec}")))
        }
    }

    /// Checks shapes, positivity and, when active, per-branch stationarity.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        self.check_shape(spec)?;
        if self.to_flat().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        for (b, label) in self.branches.iter().zip(spec.branch_labels()) {
            if b.omega <= 0.0 {
                return Err(Error::Domain(format!("omega{label} must be positive, got {}", b.omega)));
            }
            if b.alpha.iter().chain(&b.beta).any(|&c| c < 0.0) {
                return Err(Error::Domain(format!("negative alpha/beta in branch '{label}'")));
            }
            if spec.constraint == ConstraintMode::Stationary && b.persistence() >= 1.0 {
                return Err(Error::Domain(format!(
                    "branch '{label}' persistence {} violates sum(alpha)+sum(beta) < 1",
                    b.persistence()
                )));
            }
        }
        if self.gamma.iter().flatten().any(|&g| g < 0.0) {
            return Err(Error::Domain("negative gamma".into()));
        }
        if self.theta2.iter().any(|&t| t <= 0.0) {
            return Err(Error::Domain("theta2 must be positive".into()));
        }
        Ok(())
    }

    /// Nearest point (coordinate-wise clamp, then proportional shrink of
    /// alpha/beta) satisfying the active constraints with the optimizer's
    /// closed bounds.
    pub fn project(&mut self, spec: &ModelSpec) {
        const MIN_POSITIVE: f64 = 1e-8;
        for b in &mut self.branches {
            if !(b.omega >= MIN_POSITIVE) {
                b.omega = MIN_POSITIVE;
            }
            for c in b.alpha.iter_mut().chain(b.beta.iter_mut()) {
                if !(*c >= 0.0) {
                    *c = 0.0;
                }
            }
            if spec.constraint == ConstraintMode::Stationary {
                let s = b.persistence();
                if s > STATIONARY_BOUND {
                    let f = (STATIONARY_BOUND - 1e-12) / s;
                    for c in b.alpha.iter_mut().chain(b.beta.iter_mut()) {
                        *c *= f;
                    }
                }
            }
        }
        for g in self.gamma.iter_mut().flatten() {
            if !(*g >= 0.0) {
                *g = 0.0;
            }
        }
        for t in &mut self.theta2 {
            if !(*t >= MIN_POSITIVE) {
                *t = MIN_POSITIVE;
            }
        }
    }
}

/// Conditional means over a series. `values[t]` for `t < start` hold the
/// initialization value; `branch[t]` is meaningful only for `t >= start`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaPath {
    pub start: usize,
    pub values: Vec<f64>,
    pub branch: Vec<usize>,
}

impl LambdaPath {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Recursion outputs only (from `start`).
    pub fn fitted(&self) -> &[f64] {
        &self.values[self.start..]
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("empty lambda path")
    }
}

/// Output of any family: a single path or an upward/downward pair.
#[derive(Debug, Clone, PartialEq)]
pub enum ConditionalMean {
    Single(LambdaPath),
    Directional { up: LambdaPath, down: LambdaPath },
}

impl ConditionalMean {
    pub fn start(&self) -> usize {
        match self {
            ConditionalMean::Single(p) => p.start,
            ConditionalMean::Directional { up, .. } => up.start,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ConditionalMean::Single(p) => p.len(),
            ConditionalMean::Directional { up, .. } => up.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Conditional mean of the total range (`lambda_u + lambda_d` for the
    /// directional families).
    pub fn total(&self) -> Vec<f64> {
        match self {
            ConditionalMean::Single(p) => p.values.clone(),
            ConditionalMean::Directional { up, down } => {
                up.values.iter().zip(&down.values).map(|(a, b)| a + b).collect()
            }
        }
    }

    pub fn total_at(&self, t: usize) -> f64 {
        match self {
            ConditionalMean::Single(p) => p.values[t],
            ConditionalMean::Directional { up, down } => up.values[t] + down.values[t],
        }
    }

    /// Branch selection per period (all zeros for single-branch families).
    pub fn branch(&self) -> &[usize] {
        match self {
            ConditionalMean::Single(p) => &p.branch,
            ConditionalMean::Directional { up, .. } => &up.branch,
        }
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Pre-computed, parameter-independent inputs for repeated evaluation.
#[derive(Debug, Clone)]
pub(crate) struct Design {
    pub spec: ModelSpec,
    pub r: Vec<f64>,
    pub ru: Vec<f64>,
    pub rd: Vec<f64>,
    /// Branch per period, length `n_out`.
    pub select: Vec<usize>,
    pub start: usize,
    /// Output length: the series length, or one more when extended.
    pub n_out: usize,
    init: [f64; 3],
}

impl Design {
    /// Validates the data and precomputes branch selections. With
    /// `extend`, one extra period past the end of the data is produced.
    pub fn new(spec: &ModelSpec, ranges: &[RangeObs], extend: bool) -> Result<Self> {
        spec.validate()?;
        let start = spec.start();
        // A forecast needs only the lags of the first extended period.
        let needed = if extend { start.max(1) } else { start + 1 };
        if ranges.len() < needed {
            return Err(Error::Argument(format!(
                "{spec} needs at least {needed} observations, got {}",
                ranges.len()
            )));
        }
        for (i, o) in ranges.iter().enumerate() {
            if !(o.r.is_finite() && o.ru.is_finite() && o.rd.is_finite()) {
                return Err(Error::Numeric(format!("non-finite range at index {i}")));
            }
            if o.r < 0.0 || o.ru < 0.0 || o.rd < 0.0 {
                return Err(Error::Domain(format!("negative range at index {i}")));
            }
        }
        let r: Vec<f64> = ranges.iter().map(|o| o.r).collect();
        let ru: Vec<f64> = ranges.iter().map(|o| o.ru).collect();
        let rd: Vec<f64> = ranges.iter().map(|o| o.rd).collect();
        let n_out = ranges.len() + extend as usize;
        let select = match spec.family {
            Family::Tacarr => regime_indices(ranges, spec.l, start, n_out),
            Family::Tarr => {
                let th = spec.threshold.unwrap_or_else(|| mean(&r));
                (0..n_out)
                    .map(|t| if t >= spec.delay && r[t - spec.delay] >= th { 0 } else { 1 })
                    .collect()
            }
            _ => vec![0; n_out],
        };
        let init = [mean(&r), mean(&ru), mean(&rd)].map(|m| m.max(LAMBDA_FLOOR));
        Ok(Self {
            spec: *spec,
            r,
            ru,
            rd,
            select,
            start,
            n_out,
            init,
        })
    }

    /// Evaluates the recursion without validating `params`; the shapes must
    /// match the spec.
    pub fn evaluate(&self, params: &ParamVector) -> ConditionalMean {
        let wrap = |values: Vec<f64>, selected: bool| LambdaPath {
            start: self.start,
            values,
            branch: if selected { self.select.clone() } else { vec![0; self.n_out] },
        };
        let mut paths = self.values(params).into_iter();
        match self.spec.family {
            Family::Carr | Family::Tarr | Family::Tacarr => {
                ConditionalMean::Single(wrap(paths.next().unwrap(), true))
            }
            Family::Acarr | Family::Facarr => ConditionalMean::Directional {
                up: wrap(paths.next().unwrap(), false),
                down: wrap(paths.next().unwrap(), false),
            },
        }
    }

    /// Raw recursion outputs: one path, or the upward and downward paths.
    pub fn values(&self, params: &ParamVector) -> Vec<Vec<f64>> {
        match self.spec.family {
            Family::Carr | Family::Tarr | Family::Tacarr => {
                let branches: Vec<&Branch> = params.branches.iter().collect();
                vec![self.fill(&self.r, &branches, None, self.init[0], true)]
            }
            Family::Acarr | Family::Facarr => {
                let (gu, gd) = match params.gamma.as_slice() {
                    [gu, gd] => (Some((&self.rd[..], &gu[..])), Some((&self.ru[..], &gd[..]))),
                    _ => (None, None),
                };
                vec![
                    self.fill(&self.ru, &[&params.branches[0]], gu, self.init[1], false),
                    self.fill(&self.rd, &[&params.branches[1]], gd, self.init[2], false),
                ]
            }
        }
    }

    fn fill(
        &self,
        driver: &[f64],
        branches: &[&Branch],
        cross: Option<(&[f64], &[f64])>,
        init: f64,
        selected: bool,
    ) -> Vec<f64> {
        let mut values = vec![init; self.n_out];
        for t in self.start..self.n_out {
            let b = branches[if selected { self.select[t] } else { 0 }];
            let mut v = b.omega;
            for (i, a) in b.alpha.iter().enumerate() {
                v += a * driver[t - 1 - i];
            }
            for (j, be) in b.beta.iter().enumerate() {
                v += be * values[t - 1 - j];
            }
            if let Some((y, gamma)) = cross {
                for (k, g) in gamma.iter().enumerate() {
                    v += g * y[t - 1 - k];
                }
            }
            values[t] = if v > LAMBDA_FLOOR { v } else { LAMBDA_FLOOR };
        }
        values
    }
}

/// Conditional means for any family after validating data and parameters.
pub fn conditional_mean(spec: &ModelSpec, params: &ParamVector, ranges: &[RangeObs]) -> Result<ConditionalMean> {
    params.validate(spec)?;
    Ok(Design::new(spec, ranges, false)?.evaluate(params))
}

/// Like [`conditional_mean`] but with one extra period: the last entry is
/// the one-step-ahead conditional mean given all of `ranges`.
pub fn conditional_mean_extended(
    spec: &ModelSpec,
    params: &ParamVector,
    ranges: &[RangeObs],
) -> Result<ConditionalMean> {
    params.validate(spec)?;
    Ok(Design::new(spec, ranges, true)?.evaluate(params))
}

fn expect_family(spec: &ModelSpec, family: Family) -> Result<()> {
    if spec.family == family {
        Ok(())
    } else {
        Err(Error::Argument(format!("expected a {} spec, got {spec}", family.name())))
    }
}

fn single(cm: ConditionalMean) -> LambdaPath {
    match cm {
        ConditionalMean::Single(p) => p,
        ConditionalMean::Directional { .. } => unreachable!("single-path family"),
    }
}

fn pair(cm: ConditionalMean) -> (LambdaPath, LambdaPath) {
    match cm {
        ConditionalMean::Directional { up, down } => (up, down),
        ConditionalMean::Single(_) => unreachable!("directional family"),
    }
}

pub fn lambda_carr(ranges: &[RangeObs], params: &ParamVector, spec: &ModelSpec) -> Result<LambdaPath> {
    expect_family(spec, Family::Carr)?;
    conditional_mean(spec, params, ranges).map(single)
}

/// Regime-switching recursion; branch 0 is the Up regime, branch 1 Down.
pub fn lambda_tacarr(ranges: &[RangeObs], params: &ParamVector, spec: &ModelSpec) -> Result<LambdaPath> {
    expect_family(spec, Family::Tacarr)?;
    conditional_mean(spec, params, ranges).map(single)
}

/// Branch 0 applies when `R_{t-d}` is at or above the threshold.
pub fn lambda_tarr(ranges: &[RangeObs], params: &ParamVector, spec: &ModelSpec) -> Result<LambdaPath> {
    expect_family(spec, Family::Tarr)?;
    conditional_mean(spec, params, ranges).map(single)
}

/// Independent upward and downward recursions.
pub fn lambda_acarr(ranges: &[RangeObs], params: &ParamVector, spec: &ModelSpec) -> Result<(LambdaPath, LambdaPath)> {
    expect_family(spec, Family::Acarr)?;
    conditional_mean(spec, params, ranges).map(pair)
}

/// Upward and downward recursions with lagged opposite-direction ranges.
pub fn lambda_facarr(ranges: &[RangeObs], params: &ParamVector, spec: &ModelSpec) -> Result<(LambdaPath, LambdaPath)> {
    expect_family(spec, Family::Facarr)?;
    conditional_mean(spec, params, ranges).map(pair)
}

/// Largest absolute violation of the ARMA rearrangement
/// `R_t = omega + sum_{i<=k} (alpha_i + beta_i) R_{t-i} - sum_j beta_j eta_{t-j} + eta_t`
/// with `eta_t = R_t - lambda_t`, over every recursion period.
pub fn arma_residual_check(
    ranges: &[RangeObs],
    path: &LambdaPath,
    params: &ParamVector,
    spec: &ModelSpec,
) -> Result<f64> {
    if spec.family.is_directional() {
        return Err(Error::Argument("ARMA check applies to single-path families".into()));
    }
    params.validate(spec)?;
    if path.len() < ranges.len() || path.start < spec.p.max(spec.q) {
        return Err(Error::Argument("lambda path does not cover the series".into()));
    }
    let k = spec.p.max(spec.q);
    let eta: Vec<f64> = ranges.iter().zip(&path.values).map(|(o, l)| o.r - l).collect();
    let mut worst = 0.0f64;
    for t in path.start..ranges.len() {
        let b = &params.branches[path.branch[t]];
        let mut rhs = b.omega + eta[t];
        for i in 1..=k {
            let a = b.alpha.get(i - 1).copied().unwrap_or(0.0);
            let be = b.beta.get(i - 1).copied().unwrap_or(0.0);
            rhs += (a + be) * ranges[t - i].r;
        }
        for (j, be) in b.beta.iter().enumerate() {
            rhs -= be * eta[t - 1 - j];
        }
        worst = worst.max((ranges[t].r - rhs).abs());
    }
    Ok(worst)
}
