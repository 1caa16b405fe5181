//! Relation extraction between chemical and protein mentions, built around
//! three ideas: a Gaussian weighting of tokens by distance to the target
//! entities, attention from the document title onto the sentence, and
//! attention from a knowledge sequence of prior-association tags onto the
//! sentence. A compact trainable transformer encoder stands in for a large
//! pretrained one so the whole pipeline runs on one CPU core.

pub mod config;
pub mod corpus;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod gaussian;
pub mod kb;
pub mod numerics;

pub use error::{Error, Result};
