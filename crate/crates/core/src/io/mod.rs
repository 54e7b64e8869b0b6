pub mod config;
pub mod kv;
pub mod pipeline;
pub mod records;
pub mod stream;

pub use config::PipelineConfig;
pub use pipeline::{associate_partitioned, run_fragments, run_pipeline, PipelineOutput, RunSummary};
pub use records::{load_external, read_fragments, read_trajectories, write_fragments, write_trajectories, Dataset};
pub use stream::{stream_ingest, Ingest};
