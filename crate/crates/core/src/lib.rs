pub mod basis;
pub mod bench;
pub mod channels;
pub mod error;
pub mod estimator;
pub mod io;
pub mod linalg;
pub mod measurement;
pub mod random;
pub mod refine;

pub use error::{Error, Result};
