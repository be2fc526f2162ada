//! Analysis of mass-action reaction networks for the dynamical and restricted
//! complex-balance (DR) condition.
//!
//! When the DR condition holds along the deterministic solution started from
//! the Poisson means of a product-Poisson initial law, the law of the
//! stochastic model stays a product of Poissons with means `c(t)` for all
//! time. This crate decides the condition through a linear reduction of the
//! rate equations, computes `c(t)` in closed form, and provides independent
//! cross-checks: Gillespie simulation, a truncated master-equation
//! integrator, and the polynomial identities behind the product form.
//!
//! Modules:
//!
//! - [`netparse`]: the `.crn` text format.
//! - [`network`]: complexes, reactions, linkage classes, weak reversibility.
//! - [`determ`]: mass-action rate equations, RK4, pointwise complex balance.
//! - [`dranalyzer`]: linear reduction, path condition, DR verdicts.
//! - [`stochastic`]: Gillespie direct method, ensembles, truncated CME.
//! - [`poissondist`]: product-Poisson laws, `g`-functions, distances.

pub mod determ;
pub mod dranalyzer;
pub mod netparse;
pub mod network;
pub mod poissondist;
pub mod stochastic;

pub use determ::{Concentration, Trajectory};
pub use dranalyzer::{DrOptions, DrReport, LinearSystem, Verdict};
pub use netparse::{parse_network, InitialCondition, NetworkSource, ParseDiagnostic};
pub use network::{Complex, Reaction, ReactionNetwork};
pub use poissondist::ProductPoissonLaw;
pub use stochastic::{EnsembleSummary, StateVector, TruncatedPmf};
