//! Optimal bid/ask quoting for a dealer facing several client tiers and a
//! ladder of trade sizes, when clients read the dealer's quote skew and
//! their fills move the reference price.
//!
//! The crate solves the baseline (uninformed) quoting problem on a truncated
//! inventory grid, the full problem with informational terms, the
//! first-order correction in the informational scale, and a closed-form
//! quadratic approximation. A Monte Carlo simulator evaluates any feedback
//! policy against the full dynamics.

pub mod banded;
pub mod checks;
pub mod config;
pub mod error;
pub mod hamiltonians;
pub mod model;
pub mod perturbation;
pub mod presets;
pub mod quadratic;
pub mod simulator;
pub mod solver;

pub use error::{DomainBound, Error, Result};
pub use model::{InventoryGrid, MarketModel, Side};
