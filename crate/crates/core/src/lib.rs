pub mod config;
pub mod cross_entropy;
pub mod distributions;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod ingest;
pub mod numeric;
pub mod pipeline;
pub mod plant;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod tail;

pub use error::{Error, Result};
