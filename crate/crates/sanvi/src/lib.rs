//! File formats, real-network ingestion and the experiment harness around
//! [`sanvi_core`].

pub mod config;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod ingest;

pub use config::{Command, Estimator, RunConfig};
pub use error::{Error, Result};
