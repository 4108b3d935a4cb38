pub mod capacity;
pub mod cli;
pub mod counterexample;
pub mod criteria;
pub mod error;
pub mod grid;
pub mod isoperimetric;
pub mod levelset;
pub mod linalg;
pub mod spectral;
pub mod special;

pub use error::{Error, Result};
