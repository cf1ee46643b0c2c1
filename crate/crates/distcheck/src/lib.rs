//! A laboratory for distribution testing with query-metered sampler access.
//!
//! The library provides:
//!
//! * explicit pmfs, the distance measures relating them, and the standard
//!   hard-instance families ([`dist`]);
//! * "source code" handles: seeded, query-metered samplers with channel
//!   post-processing ([`access`]);
//! * a mean-estimation contract with interchangeable simulated backends,
//!   including adversarial in-band noise ([`qme`]);
//! * three uniformity/closeness testers for the large, small, and giant
//!   threshold regimes, plus a classical collision baseline ([`testers`]);
//! * the identity-to-uniformity reduction ([`reduce`]);
//! * exhaustive rational oracles ([`exhaustive`]) and the experiment
//!   harness/validator suites driving them ([`harness`]).
//!
//! Core numeric types are generic over a [`Scalar`]: `f64` everywhere the
//! samplers run, exact rationals inside the enumeration oracles. The
//! concrete aliases below cover both.
//!
//! Every experiment is deterministic given its master seed: trial streams
//! are derived by counter-based splitting, so runs replay byte-for-byte
//! regardless of worker count.

pub mod access;
pub mod dist;
pub mod error;
pub mod exhaustive;
pub mod harness;
pub mod qme;
pub mod reduce;
pub mod scalar;
pub mod testers;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Floating-point pmf, the working type of the samplers and testers.
pub type Pmf64 = dist::Pmf<f64>;
/// Exact-rational pmf, the working type of the enumeration oracles.
pub type PmfExact = dist::Pmf<num_rational::BigRational>;
/// Floating-point random-variable table.
pub type Rv64 = qme::Rv<f64>;
/// Exact-rational random-variable table.
pub type RvExact = qme::Rv<num_rational::BigRational>;
