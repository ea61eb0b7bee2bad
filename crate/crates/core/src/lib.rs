//! Closed-form optimal rank-constrained linear and affine encoder-decoder
//! maps, with the data generators, trained baselines, factor analysis and
//! error metrics needed to run the imaging, finance and shallow-water
//! experiments end to end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod datagen;
pub mod empirical;
pub mod error;
pub mod experiments;
pub mod factors;
pub mod io;
pub mod linalg;
pub mod mappings;
pub mod metrics;
pub mod rng;
pub mod swe;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, LinalgError};
pub use rng::SeededRng;
