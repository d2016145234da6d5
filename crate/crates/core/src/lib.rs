// `!(x > a)` is used throughout to reject NaN along with out-of-range input.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod connect;
pub mod error;
pub mod ode;
pub mod quad;
pub mod sinhg;
pub mod specfun;
pub mod tau;
pub mod verify;

pub use error::{Error, Result};
