#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evolver;
pub mod frobenius;
pub mod numerics;
pub mod profiles;
pub mod riccati;
pub mod semilinear;
pub mod spectrum;
pub mod transmission;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
