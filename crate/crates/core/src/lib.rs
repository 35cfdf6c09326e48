//! Elliptic equations with dynamic boundary conditions, solved through the
//! reduction to an evolution equation for the boundary trace.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::redundant_guards)]

pub mod banded;
pub mod diagnostics;
pub mod dynamics;
pub mod elliptic;
pub mod error;
pub mod grid;
pub mod nonlinearity;
pub mod spectral;

pub use error::{Error, Result};
