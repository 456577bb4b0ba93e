//! Causal effect estimation for clustered observational studies.
//!
//! Treatment is assigned to whole clusters (schools, hospitals) and outcomes
//! are measured on the units inside them. Which covariates must be adjusted
//! for depends on how units came to be in their clusters:
//!
//! * pairing fixed before treatment: cluster covariates `W` and cluster
//!   aggregates `h` of unit covariates;
//! * treatment first, pairing blind to it: `W` alone;
//! * treatment first, pairing that reacts to it: `W`, `h`, and the unit
//!   covariates `X`.
//!
//! The crate provides the pieces needed to study and apply that result:
//!
//! * [`data`] and [`io`]: the validated unit/cluster join and its CSV pair format;
//! * [`aggregates`]: cluster quantiles and means of unit covariates;
//! * [`dgp`]: simulated populations for the three pairing regimes;
//! * [`estimators`] and [`ols`]: parametric g-formula under each adjustment set;
//! * [`bootstrap`]: cluster block bootstrap;
//! * [`diagnostics`]: standardized-difference balance tables;
//! * [`study`]: the Monte Carlo grid over regimes, sizes, and adjustment sets.
//!
//! ```
//! use cos_core::{block_bootstrap, simulate, AdjustmentSet, AggregateSpec, ModelSpec, SimulationConfig, Trial};
//!
//! let sim = simulate(&SimulationConfig::new(Trial::Trial2a, 20, 800, 7))?;
//! let fit = block_bootstrap(
//!     &sim.dataset,
//!     &AggregateSpec::default(),
//!     &ModelSpec::new(AdjustmentSet::W),
//!     50,
//!     1,
//! )?;
//! assert!(fit.bootstrap.se > 0.0);
//! # Ok::<(), cos_core::Error>(())
//! ```

pub mod aggregates;
pub mod bootstrap;
pub mod data;
pub mod diagnostics;
pub mod dgp;
pub mod error;
pub mod estimators;
pub mod io;
pub mod ols;
pub mod rng;
pub mod study;

pub use aggregates::{
    attach_aggregates, compute_aggregates, Aggregate, AggregateSpec, AggregateTable, QuantileMethod,
};
pub use bootstrap::{block_bootstrap, block_bootstrap_many, resample_clusters, BootstrapResult, EstimateResult};
pub use data::{arm_partition, build_dataset, Cluster, ClusteredDataset, Covariate, CovariateKind, Unit};
pub use diagnostics::{balance_table, standardized_difference, BalanceRow, Level};
pub use dgp::{simulate, SimulatedDataset, SimulationConfig, Trial, TRUE_ATE};
pub use error::{Error, ErrorCategory, Result};
pub use estimators::{build_design, estimate_effect, g_formula, AdjustmentSet, Arm, GFormulaFit, ModelSpec};
pub use ols::least_squares;
pub use study::{run_scenario, run_scenario_group, run_table1, Scenario, ScenarioGroup, ScenarioResult};

// The guide's code listings run as doctests of this crate.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/trials.md")]
    mod trials {}
    #[doc = include_str!("../../../book/src/aggregates.md")]
    mod aggregates {}
    #[doc = include_str!("../../../book/src/g_formula.md")]
    mod g_formula {}
    #[doc = include_str!("../../../book/src/bootstrap.md")]
    mod bootstrap {}
    #[doc = include_str!("../../../book/src/balance.md")]
    mod balance {}
    #[doc = include_str!("../../../book/src/monte_carlo.md")]
    mod monte_carlo {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
