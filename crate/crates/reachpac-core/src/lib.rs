//! Data-driven reachable-set estimation with PAC guarantees.
//!
//! The crate samples terminal states of a dynamical system, fits a
//! minimum-volume enclosing ellipsoid to them, and attaches Probably
//! Approximately Correct certificates through four interchangeable
//! routes: the holdout method, empirical conformal coverage, split
//! conformal calibration, and scenario optimization with sample
//! discarding. The [`equivalence`] module verifies the agreements that
//! relate those routes to each other.
//!
//! The crate is `no_std`-compatible (with `alloc`); disable default
//! features and enable `libm` for builds without the standard library.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("no_std builds need the `libm` feature for float math");

mod fmath;
mod linalg;

pub mod certify;
pub mod dynamics;
pub mod ellipsoid;
pub mod equivalence;
pub mod special;

pub use certify::{CertMethod, DiscardBound, PacCertificate, ScoreVector};
pub use dynamics::{SampleBatch, SamplingSpec, SystemSpec, VectorField};
pub use ellipsoid::Ellipsoid;
pub use equivalence::{EquivalenceReport, JointParams};
pub use special::{BetaParams, Probability};
