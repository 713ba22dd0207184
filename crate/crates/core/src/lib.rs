// `!(x > 0.0)` style checks are intended: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod binio;
pub mod classifier;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod hsi;
pub mod lra;
pub mod pipeline;
pub mod propagation;
pub mod raster;
pub mod stages;
pub mod superpixel;

pub use error::{Error, Result};
