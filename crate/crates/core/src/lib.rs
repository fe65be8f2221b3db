//! Computes the optimum query exponent (equivalently, the secret-key capacity)
//! of a multiterminal correlated source from its joint pmf or Gaussian
//! covariance, and validates the underlying constructions by brute-force
//! oracles and seeded Monte Carlo simulation at desk scale.
//!
//! Everything is exact finite-alphabet arithmetic in bits (base-2 logs).
//! Modules:
//!
//! * [`pmf`] - joint pmfs, entropies, divergences, Renyi entropy, typical sets.
//! * [`fractional`] - the subset family, the fractional-partition LP, and the
//!   query exponent in its primal and rewritten forms.
//! * [`partition`] - set-partition form of the exponent and the Gaussian
//!   log-determinant formula.
//! * [`renyi`] - high-mass subset constructions and source-coding rate bounds.
//! * [`sim`] - seeded source sampling, binning protocols, query strategies,
//!   and the converse construction for explicit finite models.
//! * [`secrecy`] - security indices and the strong-converse inequality.
//! * [`verify`] - randomized invariant suites shared by the CLI and the tests.

pub mod error;
pub mod fractional;
pub mod partition;
pub mod pmf;
pub mod renyi;
pub mod secrecy;
pub mod sim;
pub mod verify;

pub(crate) mod simplex;

pub use error::{Error, Result};
