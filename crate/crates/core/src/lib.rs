pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod gp;
pub mod inference;
pub mod optim;
pub mod predict;
pub mod seed;
pub mod sim;
pub mod spatial;

pub use error::{Error, Result};
