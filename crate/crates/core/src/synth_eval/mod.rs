//! Synthetic benchmarks: data generation, quality metrics, memory probes and
//! the scaling harness.

pub mod bench;
pub mod generate;
pub mod mem;
pub mod metrics;

pub use bench::{scaling_bench, suggested_config, BenchOptions, BenchReport, BenchRow};
pub use generate::{generate, GroundTruth, Regime, SynthSpec};
pub use metrics::{avg_f, sparse_degree, EvalReport};
