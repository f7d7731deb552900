// `!(x > 0.0)` style comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod error;
pub mod experiment;
pub mod fast;
pub mod integrator;
pub mod models;
pub mod quadrature;
pub mod quotients;
pub mod slow;
pub mod spectral;

pub use error::{Error, Result};
