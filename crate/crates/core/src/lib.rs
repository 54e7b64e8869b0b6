pub mod association;
pub mod cli;
pub mod bench;
pub mod cost;
pub mod error;
pub mod eval;
pub mod io;
pub mod rectify;
pub mod types;

pub use error::{Error, Result};
