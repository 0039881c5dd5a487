//! Approximately envy-free combinatorial auctions.
//!
//! The mechanism implemented here allocates indivisible goods (e.g. spectrum
//! bands over a grid of geographic cells) by randomly perturbing a linear
//! relaxation of the welfare problem, solving it with a simplex method,
//! decomposing the fractional optimum into a lottery over near-feasible
//! integral allocations, and charging item prices read off the supply-row
//! duals. The lottery's expected allocation equals the LP optimum, every
//! realized allocation over-allocates each good by at most `k - 1` units
//! (`k` = the bundle size cap), and the posted prices support every outcome
//! up to an explicit utility tolerance.
//!
//! Pipeline: [`auction::perturb`] -> [`auction::build_lip`] -> [`lp::solve`]
//! -> [`lottery::construct_lottery`] -> [`pricing::popt_prices`] ->
//! [`lottery::sample`] -> verification. [`harness::run_mechanism`] wires the
//! whole thing together; [`spectrum`] generates the grid-market instances
//! used by the experiment driver.

pub mod auction;
pub mod error;
pub mod harness;
pub mod lottery;
pub mod lp;
pub mod pricing;
pub mod rounding;
pub mod spectrum;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
