//! Meshfree Fragile Points Method solver for the cardiac monodomain equation.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod error;
pub mod geometry;
pub mod io;
pub mod ionic;
pub mod post;
pub mod shape;
pub mod sparse;
pub mod stepper;

pub use error::{FpmError, Result};
