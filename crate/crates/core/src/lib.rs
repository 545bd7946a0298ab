//! Neural summarization lab that rewrites terse e-commerce web titles into
//! short spoken voice titles.

pub mod corpus;
pub mod decoding;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod tensor;
pub mod text;

pub use error::{Error, Result};
