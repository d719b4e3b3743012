//! Verification engine for feed-forward ReLU neural networks.
//!
//! The engine decides whether a conjunction of linear constraints, variable
//! bounds, and ReLU constraints is satisfiable.  Queries are solved by a
//! complete backtracking solver built on a bounded-variable simplex core
//! ([`reluplex`]), optionally preprocessed by interval tightening ([`bounds`])
//! and phase probing ([`iterprop`]), and parallelized by splitting the query
//! into independent subqueries ([`partition`], [`snc`]).
//!
//! Networks and queries are brought into the internal representation by
//! [`ingest`], which reads the textual `.nnet` weight format and a line-based
//! property format.

pub mod bounds;
pub mod ingest;
pub mod iterprop;
pub mod partition;
pub mod reluplex;
pub mod simplex;
pub mod snc;
pub mod vnn;

pub use vnn::{
    Assignment, Bounds, LinearConstraint, LpOutcome, QueryResult, Relation, ReluConstraint,
    ReluPhase, Variable, VnnFormula,
};

/// Errors reported by the engine.
///
/// Resource exhaustion ([`Error::IterationLimit`]) is deliberately distinct
/// from a verdict: callers must never conflate "ran out of pivots" with
/// "infeasible".
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A phase was requested for a ReLU that is already fixed.
    #[error("relu {relu} is already fixed")]
    ReluAlreadyFixed { relu: usize },
    /// Polarity is only defined when the backward bounds straddle zero.
    #[error("polarity undefined for relu {relu}: bounds [{lower}, {upper}] do not straddle zero")]
    PolarityUndefined { relu: usize, lower: f64, upper: f64 },
    /// The exhaustive phase-enumeration oracle refuses huge inputs.
    #[error("too many unfixed relus for exhaustive enumeration: {count} (limit {limit})")]
    TooManyRelus { count: usize, limit: usize },
    /// Vector lengths or variable indices do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// The simplex pivot budget was exhausted without reaching a verdict.
    #[error("simplex iteration limit reached after {0} pivots")]
    IterationLimit(usize),
    /// A file could not be parsed.
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    /// A branching variable was requested but every ReLU is fixed.
    #[error("no unfixed relu available")]
    NoUnfixedRelu,
    /// Partition sizes must be powers of two, at least two.
    #[error("invalid partition size {0}: must be a power of two, at least 2")]
    BadPartitionSize(usize),
    /// A configuration value is out of range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// A worker failed in a way that is not a verdict (panic, lost channel).
    #[error("worker failure: {0}")]
    Worker(String),
    /// An underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
