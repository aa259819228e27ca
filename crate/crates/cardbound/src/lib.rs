//! Cardinality upper-bound estimation for multi-table equi-join queries.
//!
//! The pipeline splits into an offline and an online half. Offline, every
//! join-key column is summarized: keys that can be joined with each other are
//! grouped, each group's value domain is partitioned into bins, and each bin
//! keeps its total row count together with the count of its most frequent
//! value. Online, a query is translated into a factor graph whose variables
//! are the join-key groups touched by the query and whose factors hold
//! per-alias bin distributions conditioned on that alias's filters. Variable
//! elimination over this graph combines the per-bin totals and most-frequent-
//! value counts into a probabilistic upper bound on the join cardinality.
//!
//! The crate also ships the supporting cast needed to exercise the engine
//! end to end: a SQL-subset front end, exact counting for ground truth,
//! a seeded synthetic data generator, single-table selectivity estimators
//! (exact scan, uniform sample, tree-structured Bayesian model), incremental
//! maintenance of the statistics under inserts and deletes, and a versioned
//! on-disk model container behind the `cardbound` command-line tool.

pub mod binning;
pub mod catalog;
pub mod chowliu;
pub mod estimators;
pub mod factorgraph;
pub mod generator;
pub mod model;
pub mod oracle;
pub mod parser;
pub mod predicate;
pub mod queryir;

mod bytesio;

#[cfg(test)]
pub(crate) mod testsupport;

pub use catalog::Catalog;

/// Crate-wide error type. Variants carry enough context to print a usable
/// one-line diagnostic; the CLI maps them onto process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Schema descriptor problems: bad JSON, duplicate names, joins that
    /// reference unknown columns or pair incompatible column kinds.
    #[error("schema: {0}")]
    Schema(String),

    /// CSV ingest problems: shape mismatches, unparsable cells, I/O.
    #[error("ingest: {0}")]
    Ingest(String),

    /// Query text or query IR that does not parse or does not validate
    /// against the catalog.
    #[error("query: {0}")]
    Query(String),

    /// Estimation-time failures: wrong model for the query, unsupported
    /// query shape for the requested mode, arithmetic preconditions.
    #[error("estimate: {0}")]
    Estimate(String),

    /// Model file problems: version mismatch, truncated or corrupt payload,
    /// digest mismatch, lock contention.
    #[error("model: {0}")]
    Model(String),

    /// Exact-count oracle failures (memory cap, counter overflow).
    #[error("oracle: {0}")]
    Oracle(String),

    /// Synthetic data generation problems (bad generator spec).
    #[error("generator: {0}")]
    Generator(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
