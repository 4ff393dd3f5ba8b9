pub mod conv;
mod elementwise;
mod reduce;
pub mod spatial;
