//! Densities, inverse-transform samplers, exponential tilting, and fitters
//! for the three scenario variables.
//!
//! Exponential laws are parametrized by their MEAN throughout. Nothing here
//! takes a rate.

mod empirical;
mod exponential;
mod fit;
mod pareto;

pub use empirical::EmpiricalDist;
pub use exponential::{ecm_natural_parameter, TruncatedExponential};
pub use fit::{fit_exponential_mle, fit_pareto, lsq_exponential_of_pareto, FitParams, FitReport};
pub use pareto::TruncatedPareto;
