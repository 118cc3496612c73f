//! Statistical toolkit for sensory and consumer science data.
//!
//! The crate covers the analysis chain from raw files to result tables:
//! descriptive liking statistics, NIPALS-based PCA, PLSR and PCR with
//! leave-one-out validation, preference mapping, mixed-model conjoint
//! analysis and individual-differences analysis.

pub mod conjoint;
pub mod dataset;
pub mod error;
pub mod inddiff;
pub mod latent;
pub mod prefmap;
pub mod summary;
pub mod svg;
pub mod table;

pub use error::{Error, ImportError, Result};
