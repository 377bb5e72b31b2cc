//! Range-based volatility modelling.
//!
//! Implements the conditional autoregressive range family (CARR, ACARR,
//! FACARR, TARR) and the threshold-asymmetric CARR model whose regime is
//! decided by recent upward versus downward ranges, together with maximum
//! likelihood estimation, simulation and parameter-recovery studies,
//! rolling-window forecasting, and residual / forecast diagnostics.

pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod forecast;
pub mod likelihood;
pub mod model;
pub mod optim;
pub mod range;
pub mod simulation;
pub mod stats;

pub use error::{Error, Result};
pub use estimation::{fit, information_criteria, FitOptions, FitResult};
pub use likelihood::InnovationLaw;
pub use model::{Branch, ConditionalMean, ConstraintMode, Family, Innovation, LambdaPath, ModelSpec, ParamVector};
pub use range::{extract_ranges, PriceBar, RangeObs, Regime};
