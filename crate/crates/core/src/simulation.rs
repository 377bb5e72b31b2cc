//! Path simulation and Monte Carlo parameter-recovery studies.
//!
//! Ranges are generated as `R_t = lambda_t * eps_t` with the innovation law
//! of the active branch. The upward/downward split that drives the regime
//! rule is drawn independently of everything else: `ru_t = U_t R_t`,
//! `rd_t = (1 - U_t) R_t` with `U_t ~ Uniform(0, 1)` by default or a
//! Beta(a, b) fraction. The stored total is `ru_t + rd_t`, and later
//! recursion steps use that stored value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{self, FitOptions};
use crate::model::{Branch, Family, Innovation, ModelSpec, ParamVector, LAMBDA_FLOOR};
use crate::range::RangeObs;

/// Simulated ranges beyond this are treated as divergence.
pub const OVERFLOW_LIMIT: f64 = 1e12;

/// Distribution of the upward share of each simulated range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum SplitLaw {
    #[default]
    Uniform,
    Beta { a: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub spec: ModelSpec,
    pub true_params: ParamVector,
    pub t_len: usize,
    pub n_reps: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub split: SplitLaw,
}

impl SimConfig {
    pub fn new(spec: ModelSpec, true_params: ParamVector, t_len: usize, n_reps: usize, seed: u64) -> Self {
        Self {
            spec,
            true_params,
            t_len,
            n_reps,
            burn_in: 500,
            seed,
            split: SplitLaw::Uniform,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.true_params.validate(&self.spec)?;
        if self.t_len == 0 || self.n_reps == 0 {
            return Err(Error::Argument("t_len and n_reps must be positive".into()));
        }
        if self.spec.family.is_directional() {
            return Err(Error::Argument(format!("simulation of {} is not supported", self.spec)));
        }
        if self.spec.family == Family::Tarr && self.spec.threshold.is_none() {
            return Err(Error::Argument("TARR simulation needs an explicit threshold".into()));
        }
        if let SplitLaw::Beta { a, b } = self.split {
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::Argument("Beta split parameters must be positive".into()));
            }
        }
        Ok(())
    }
}

/// A simulated series with the generating conditional means.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPath {
    pub ranges: Vec<RangeObs>,
    pub lambda: Vec<f64>,
    pub branch: Vec<usize>,
    pub innovations: Vec<f64>,
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for replication `rep`: one ChaCha stream per replication.
pub fn replication_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

fn draw_innovation<R: Rng>(rng: &mut R, innovation: Innovation, theta2: &[f64], branch: usize) -> f64 {
    match innovation {
        Innovation::Exponential => Exp1.sample(rng),
        Innovation::Lognormal => {
            let t2 = theta2[branch];
            let z: f64 = StandardNormal.sample(rng);
            (-0.5 * t2 + t2.sqrt() * z).exp()
        }
    }
}

/// Simulates replication `rep` of `config`.
pub fn simulate_path(config: &SimConfig, rep: usize) -> Result<SimPath> {
    config.validate()?;
    let mut rng = replication_rng(config.seed, rep);
    simulate_with(config, &mut rng)
}

pub fn simulate_with<R: Rng>(config: &SimConfig, rng: &mut R) -> Result<SimPath> {
    let spec = &config.spec;
    let params = &config.true_params;
    let start = spec.start();
    let total = config.burn_in + config.t_len;
    let beta_split = match config.split {
        SplitLaw::Uniform => None,
        SplitLaw::Beta { a, b } => Some(Beta::new(a, b).map_err(|e| Error::Argument(e.to_string()))?),
    };

    let means: Vec<f64> = params
        .branches
        .iter()
        .map(|b: &Branch| b.unconditional_mean().unwrap_or(b.omega))
        .collect();
    let lambda0 = means.iter().sum::<f64>() / means.len() as f64;

    let mut ranges: Vec<RangeObs> = Vec::with_capacity(total);
    let mut lambda = Vec::with_capacity(total);
    let mut branch = Vec::with_capacity(total);
    let mut innovations = Vec::with_capacity(total);
    let mut cu = 0usize;

    for t in 0..total {
        let (b, lam) = if t < start {
            (0, lambda0)
        } else {
            let b = match spec.family {
                Family::Tacarr => {
                    if 2 * cu >= spec.l {
                        0
                    } else {
                        1
                    }
                }
                Family::Tarr => {
                    let th = spec.threshold.expect("validated");
                    if ranges[t - spec.delay].r >= th {
                        0
                    } else {
                        1
                    }
                }
                _ => 0,
            };
            let br = &params.branches[b];
            let mut v = br.omega;
            for (i, a) in br.alpha.iter().enumerate() {
                v += a * ranges[t - 1 - i].r;
            }
            for (j, be) in br.beta.iter().enumerate() {
                v += be * lambda[t - 1 - j];
            }
            (b, if v > LAMBDA_FLOOR { v } else { LAMBDA_FLOOR })
        };
        let eps = draw_innovation(rng, spec.innovation, &params.theta2, b);
        let r = lam * eps;
        if !(r.is_finite() && r <= OVERFLOW_LIMIT) {
            return Err(Error::PathOverflow { step: t, value: r });
        }
        let u: f64 = match &beta_split {
            None => rng.random::<f64>(),
            Some(d) => d.sample(rng),
        };
        let obs = RangeObs::from_parts(u * r, (1.0 - u) * r)?;
        ranges.push(obs);
        lambda.push(lam);
        branch.push(b);
        innovations.push(eps);

        if spec.family == Family::Tacarr {
            cu += obs.up_dominant() as usize;
            if t >= spec.l {
                cu -= ranges[t - spec.l].up_dominant() as usize;
            }
        }
    }

    let cut = config.burn_in;
    Ok(SimPath {
        ranges: ranges.split_off(cut),
        lambda: lambda.split_off(cut),
        branch: branch.split_off(cut),
        innovations: innovations.split_off(cut),
    })
}

/// Result of one simulate-and-fit replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub rep: usize,
    /// Flat estimates, or `None` if the fit failed outright.
    pub estimates: Option<Vec<f64>>,
    pub converged: bool,
    pub llf: Option<f64>,
    /// Log-likelihood of the true parameters on the same sample.
    pub llf_true: f64,
    pub error: Option<String>,
}

pub fn run_replication(config: &SimConfig, fit_options: &FitOptions, rep: usize) -> Result<ReplicationOutcome> {
    let path = simulate_path(config, rep)?;
    let truth = estimation::evaluate(&config.spec, &config.true_params, &path.ranges)?;
    let mut opts = fit_options.clone();
    opts.seed = derive_seed(config.seed, rep as u64);
    Ok(match estimation::fit(&config.spec, &path.ranges, &opts) {
        Ok(f) => ReplicationOutcome {
            rep,
            estimates: Some(f.params.to_flat()),
            converged: f.converged,
            llf: Some(f.llf),
            llf_true: truth.llf,
            error: None,
        },
        Err(e) => ReplicationOutcome {
            rep,
            estimates: None,
            converged: false,
            llf: None,
            llf_true: truth.llf,
            error: Some(e.to_string()),
        },
    })
}

/// Means and mean absolute deviation errors of the estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub model: String,
    pub t_len: usize,
    pub n_reps: usize,
    pub n_converged: usize,
    pub convergence_rate: f64,
    /// Converged replications whose fitted log-likelihood fell below the
    /// true-parameter log-likelihood by more than 1e-6.
    pub n_below_truth: usize,
    pub names: Vec<String>,
    pub truth: Vec<f64>,
    pub mean: Vec<f64>,
    pub made: Vec<f64>,
}

/// Aggregates outcomes in replication order; non-converged replications
/// are counted but excluded from the means.
pub fn aggregate(config: &SimConfig, outcomes: &[ReplicationOutcome]) -> RecoveryReport {
    let mut sorted: Vec<&ReplicationOutcome> = outcomes.iter().collect();
    sorted.sort_by_key(|o| o.rep);
    let truth = config.true_params.to_flat();
    let used: Vec<&Vec<f64>> = sorted
        .iter()
        .filter(|o| o.converged)
        .filter_map(|o| o.estimates.as_ref())
        .collect();
    let s = used.len() as f64;
    let mean = (0..truth.len())
        .map(|j| used.iter().map(|e| e[j]).sum::<f64>() / s)
        .collect();
    let made = (0..truth.len())
        .map(|j| used.iter().map(|e| (e[j] - truth[j]).abs()).sum::<f64>() / s)
        .collect();
    let n_below_truth = sorted
        .iter()
        .filter(|o| o.converged)
        .filter(|o| o.llf.is_some_and(|l| l < o.llf_true - 1e-6))
        .count();
    RecoveryReport {
        model: config.spec.to_string(),
        t_len: config.t_len,
        n_reps: sorted.len(),
        n_converged: used.len(),
        convergence_rate: used.len() as f64 / sorted.len().max(1) as f64,
        n_below_truth,
        names: config.spec.param_names(),
        truth,
        mean,
        made,
    }
}

/// Runs every replication (in parallel) and aggregates.
pub fn recovery_study(config: &SimConfig, fit_options: &FitOptions) -> Result<RecoveryReport> {
    config.validate()?;
    let outcomes: Vec<ReplicationOutcome> = (0..config.n_reps)
        .into_par_iter()
        .map(|rep| run_replication(config, fit_options, rep))
        .collect::<Result<_>>()?;
    Ok(aggregate(config, &outcomes))
}
