#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod attendance;
pub mod distributions;
pub mod em;
pub mod error;
pub mod experiment;
pub mod microsim;
pub mod quadrature;
pub mod seed;
pub mod special;
pub mod statmodel;

pub use error::{Error, Result};
