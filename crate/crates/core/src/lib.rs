pub mod adapt_eval;
mod checkpoint;
pub mod data;
pub mod dsp;
mod error;
pub mod losses;
pub mod models;
pub mod rng;
pub mod simulate;
pub mod train;

pub use error::{Error, Result};
