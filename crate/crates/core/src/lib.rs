//! Approximate localized infection immunization dynamics for dominant cluster
//! detection on large affinity graphs.

pub mod affinity;
pub mod alid;
pub mod civs;
pub mod cli;
pub mod error;
pub mod lid;
pub mod lsh;
pub mod oracle;
pub mod palid;
pub mod roi;
pub mod simplex;
pub mod synth_eval;

pub use error::{AlidError, Result};
