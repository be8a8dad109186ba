//! Exact reduced density matrices of a driven quadratic bosonic mode that is
//! linearly coupled to a bosonic bath.

pub mod cli;
pub mod closedform;
pub mod coefficients;
pub mod error;
pub mod genfunc;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod report;
pub mod specfun;

pub use error::{Error, Result};
