pub mod dataset;
pub mod dependence;
pub mod error;
pub mod explain;
pub mod gbt;
pub mod indicators;
pub mod linear;
pub mod matrix;
pub mod metrics;
pub mod multilevel;
pub mod numeric;
pub mod pipeline;
pub mod svg;

pub use error::{Error, Result};
pub use matrix::Matrix;
