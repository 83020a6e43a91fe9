pub mod baselines;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod netmodel;
pub mod nlp;
pub mod partition;
pub mod quadform;
pub mod reform;
pub mod twolevel;
pub mod sparse;

pub use error::{Error, Result};
