//! Knockoff-based variable selection with simultaneous false discovery proportion bounds.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cache;
pub mod error;
pub mod inference;
pub mod io;
pub mod jer;
pub mod knockoffs;
pub mod lasso;
pub mod pipeline;
pub mod pistats;
pub mod rng;
pub mod simgen;

pub use error::{ErrorClass, KopiError, Result};
pub use rng::Stream;
