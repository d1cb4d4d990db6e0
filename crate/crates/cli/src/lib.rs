//! Benchmark harness for the saliency-guided hierarchical tracker:
//! OTB-layout sequence ingestion, synthetic scenario generation, tracking
//! metrics and the drivers behind the `sht` command-line tool.

pub mod metrics;
pub mod run;
pub mod sequence;
pub mod synth;
