//! Experiment plumbing around the mechanism: end-to-end runs, an exact
//! reference solver for tiny markets, instance file I/O, typed populations
//! with a paired misreport experiment, and batch replication sweeps that
//! emit one CSV per figure.

pub mod experiment;
pub mod io;
pub mod mechanism;
pub mod oracle;
pub mod typed;

pub use experiment::{run_experiment, ExperimentConfig, InstanceSource, MetricsReport};
pub use io::{parse_input, InputFormat, ParsedInput};
pub use mechanism::{run_mechanism, run_mechanism_typed, MechanismOutcome};
pub use oracle::{ip_oracle, weighted_value_matrix, OracleSolution, DEFAULT_ORACLE_STATE_CAP};
pub use typed::{misreport_gain, MisreportOutcome, TypedPopulation};
