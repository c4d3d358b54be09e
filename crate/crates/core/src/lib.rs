// `!(x > 0.0)` guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod quad;
pub mod specfun;
pub mod wtfit;
pub mod states;
pub mod rdsolver;
pub mod analysis;
pub mod stochastic;
pub mod cli;

pub use error::{Error, Result};
