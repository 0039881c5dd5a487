//! Crate-wide error type.

use thiserror::Error;

/// Everything that can go wrong while building or running the mechanism.
///
/// Statuses that are expected outcomes of an LP solve (infeasible, unbounded)
/// are *not* errors — they are carried in [`crate::lp::LpStatus`]. Errors here
/// are genuine failures: bad inputs, numerical breakdown, or a violated
/// guarantee that should have held by construction.
#[derive(Error, Debug)]
pub enum Error {
    /// A solver or projection failed to converge within its iteration cap.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// The iterative rounding loop could not make progress: no coordinate
    /// became integral and no supply row satisfied the drop condition.
    #[error("rounding stalled: {0}")]
    RoundingStall(String),

    /// The lottery construction failed to shrink the distance between the
    /// hull of collected points and the target within its iteration window.
    #[error("lottery construction diverged: {0}")]
    LotteryDivergence(String),

    /// A property that is guaranteed by construction failed a runtime check.
    #[error("verification failure: {0}")]
    VerificationFailure(String),

    /// A configuration or instance parameter is out of its legal range.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// The bundle space is larger than the configured enumeration cap.
    #[error("bundle space has {count} bundles, exceeding the cap of {cap}")]
    BundleSpaceTooLarge { count: u128, cap: u64 },

    /// The exact integer oracle exceeded its search-state budget.
    #[error("integer oracle exceeded {0} search states")]
    OracleTooLarge(u64),

    /// An input file did not match the expected schema.
    #[error("schema error in {path}: {message}")]
    Schema { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
