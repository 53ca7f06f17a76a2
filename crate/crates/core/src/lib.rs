//! Simulation and optimization toolkit for a RIS-assisted XL-MIMO downlink
//! that serves a near-field user group through direct array channels and a
//! far-field group through a reflecting surface.
//!
//! Capabilities:
//! - geometry-aware channel synthesis for a subarray-partitioned planar array,
//!   a Rician surface link, and far-field steering-vector user channels
//! - per-subarray MRT, cooperative ZF, and local ZF precoders with
//!   visibility-region masking and normalized power accounting
//! - closed-form ergodic SINR/SE evaluation for all six precoder/group
//!   combinations, plus a Monte-Carlo oracle for validating them
//! - greedy visibility-region selection driven by an SINR (or SNR) retention
//!   threshold
//! - penalty-based SDP optimization of the surface phase profile
//! - successive-convex-approximation power allocation with weighted
//!   min-rate objectives, QoS floors, and a bisection fallback
//! - a deterministic experiment harness with seeded substreams, CSV/manifest
//!   emission, and byte-identical re-runs
//!
//! The conic layer is backed by the Clarabel interior-point solver; linear
//! algebra uses nalgebra throughout.

// Force the BLAS/LAPACK backend link for the SDP cone support.
extern crate openblas_src as _;

pub mod channel;
pub mod config;
pub mod conic;
pub mod error;
pub mod phase;
pub mod power;
pub mod precoding;
pub mod rng;
pub mod se;
pub mod sim;
pub mod vr;

pub use channel::{ChannelSet, Geometry};
pub use config::{SystemConfig, SolverConfig, Profile};
pub use error::Error;
pub use precoding::PrecoderKind;
pub use sim::{
    emit_reports, rerun_from_manifest, run_pipeline, sweep, ExperimentPlan, ExperimentResult,
    RunManifest, Scheme, SweepAxis,
};

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Dense complex vector/matrix aliases.
pub type CVec = nalgebra::DVector<C64>;
pub type CMat = nalgebra::DMatrix<C64>;
