//! Shareholder value, dividend, credit-line and investment policies for a
//! cash-constrained firm financed by a costly credit line.
//!
//! * [`model`]: parameters, spread and productivity functions, regime split.
//! * [`cauchy`] and [`free_boundary`]: the fixed-size firm, solved by
//!   shooting on the dividend boundary.
//! * [`zero_cost`]: the investment model with frictionless capital adjustment.
//! * [`hjb`]: finite differences for the two-dimensional variational inequality.
//! * [`mc`]: Monte Carlo estimators used to validate all of the above.

// Range checks are written `!(x >= 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cauchy;
pub mod config;
pub mod error;
pub mod free_boundary;
pub mod hjb;
pub mod mc;
pub mod model;
pub mod ode;
pub mod report;
pub mod roots;
pub mod series;
pub mod svg;
pub mod tasks;
pub mod validate;
pub mod zero_cost;

pub use error::{Error, Result};
pub use model::{classify_regime_1d, validate, ModelParams, ProductivitySpec, Regime1D, SpreadSpec};
