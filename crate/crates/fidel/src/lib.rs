//! File formats, dataset preparation, training runs and the command line
//! of the `fidel` toolkit. The numerical work lives in `fidel-core`.

pub mod checkpoint;
pub mod cli;
pub mod container;
pub mod error;
pub mod fit;
pub mod framing;
pub mod ingest;
pub mod metrics;
pub mod plot;

pub use error::{Error, Result};
