pub mod constructions;
pub mod critical;
pub mod error;
pub mod landscape;
pub mod linalg;
pub mod optimizer;
mod par;
pub mod propagator;
pub mod report;
pub mod system;

pub use error::{Error, Result};
