//! Finite-element solvers for a semilinear reaction-diffusion problem in a
//! periodically perforated square, linearized with the L-scheme, together
//! with periodic homogenization of the same problem.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod experiments;
pub mod fem;
pub mod homogenize;
pub mod mesh;
pub mod micro;
pub mod reaction;
pub mod sparse;

pub use error::{Error, Result};
