//! Physics-informed neural network training with point, region and
//! gradient-enhanced objectives.

// NaN-rejecting checks are written as `!(x >= 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod check;
pub mod error;
pub mod experiment;
pub mod models;
pub mod objectives;
pub mod par;
pub mod pde;
pub mod trainer;

pub use error::{Error, Result};
