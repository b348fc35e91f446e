pub mod annotate;
pub mod corpus;
pub mod edeq;
pub mod embed;
pub mod emotion;
pub mod error;
pub mod features;
mod http;
pub mod lexdiv;
pub mod metrics;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod readability;
pub mod rng;
pub mod stream;
pub mod synth;

pub use error::{Error, Result};
