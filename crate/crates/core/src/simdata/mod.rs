//! Simulation models, lazy sample streams and tabular ingestion.

mod dgp;
mod stream;
mod tabular;

pub use dgp::{draw_sample, AlphaForm, CausalConfig, Dgp, PlmConfig, PlmDgp, SemiSynthetic};
pub use stream::{split_streams, SampleStream, StreamCounts, StreamSet};
pub use tabular::{
    ingest_csv, write_samples_csv, write_schema_csv, Ingested, InvalidRows, TabularSource, SCHEMA_W, SCHEMA_X,
};
