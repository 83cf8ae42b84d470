//! Automatic scoring of children's oral narratives.

pub mod corpus;
pub mod error;
pub mod features;
pub mod harness;
pub mod linear_models;
pub mod llm_scoring;
pub mod metrics;
mod util;

pub use error::{Error, Result};
pub use util::{derive_seed, sha256_hex};
