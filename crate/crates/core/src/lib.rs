pub mod curve_train;
pub mod curves;
pub mod data_io;
pub mod error;
pub mod eval;
pub mod fge;
pub mod nn;
pub mod rng;
pub mod sweep;
pub mod train;
pub mod trivial;

pub use error::{Error, Result};
