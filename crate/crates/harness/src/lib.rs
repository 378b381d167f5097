#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod config;
pub mod converge;
pub mod error;
pub mod oracle;
pub mod output;
pub mod run;
pub mod setup;

pub use error::{HarnessError, Result};
