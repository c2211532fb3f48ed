//! Demand prediction and welfare analysis for binary choice with social
//! spillovers.
//!
//! Households decide whether to adopt a good. Their utility depends on price,
//! income, covariates, and the expected adoption rate of the rest of their
//! village. The crate covers:
//!
//! * [`model`]: household/village data types, index parameters and the
//!   structural decomposition of the index coefficients.
//! * [`equilibrium`]: village-level fixed points of expected adoption.
//! * [`estimation`]: belief-regressor, fixed-point and correlated random
//!   effects likelihood estimators.
//! * [`welfare`]: distribution and mean of compensating variation under
//!   partially identified spillover splits, net welfare and deadweight loss.
//! * [`spatial`]: a spatially correlated model with heterogeneous beliefs.
//! * [`io`]: CSV/TOML input, result bundles and the pipelines behind the CLI.

pub mod dist;
pub mod equilibrium;
pub mod error;
pub mod estimation;
pub mod io;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod spatial;
pub mod welfare;

pub use dist::ErrorDist;
pub use error::{Error, Result};
pub use model::{
    Dataset, Household, IndexParams, Intercepts, MarginalUtilities, PolicyScenario, SpilloverSplit,
    Village,
};
