//! Numerical verification of synthetic Ricci curvature bounds.
//!
//! A finite metric measure space is tested against the curvature-dimension
//! condition `CD(K, N)`, its reduced and measure-contraction variants, and the
//! comparison theorems they imply, using exact optimal transport.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cdcheck;
pub mod comparison;
pub mod error;
pub mod smooth;
pub mod space;
pub mod transport;

pub use error::{Error, Result};

/// Version tag written into every JSON document.
pub const SCHEMA_VERSION: u32 = 1;
