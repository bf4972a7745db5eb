// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod changepoint;
pub mod error;
pub mod harness;
pub mod motion_model;
pub mod pipeline;
pub mod policy;
pub mod scenario;
pub mod trajectory;
pub mod ukf;

pub use error::{Error, Result};
