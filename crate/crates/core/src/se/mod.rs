//! Ergodic SINR/SE analytics.
//!
//! `terms` holds the closed-form statistical building blocks of the
//! fading-averaged SINR expressions, `cache` estimates the expectations that
//! have no closed form (ZF precoders seen through other users' channels),
//! `props` assembles per-user SINR decompositions for every precoder and
//! user group, `oracle` validates the closed forms against raw Monte-Carlo
//! averages, and `report` rolls per-user results into experiment summaries.

pub mod cache;
pub mod oracle;
pub mod props;
pub mod report;
pub mod terms;

pub use cache::ExpectationCache;
pub use oracle::{oracle_estimate, OracleEstimate};
pub use props::{czf_sinrs, lzf_sinrs, mrt_ff_sinr, mrt_nf_sinr, scheme_sinrs, SinrTerms};
pub use report::SeReport;
pub use terms::TermCtx;
