pub mod artifact;
pub mod binio;
pub mod cli;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod ir;
pub mod neural;

pub use error::{Error, Result};
