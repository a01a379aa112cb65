pub mod diagnostics;
pub mod eigensystem;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod models;
pub mod synthetic;

pub use error::{Error, Result};
