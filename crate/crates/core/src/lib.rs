// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amp;
pub mod baselines;
pub mod channel;
pub mod constellation;
pub mod denoise;
pub mod error;
pub mod harness;
pub mod optimize;
pub mod quadrature;
pub mod se;
pub mod special;
pub mod validate;

pub use error::{Error, Result};
