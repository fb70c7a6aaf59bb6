//! Alignment toolkit for independently trained contrastive embedding spaces.
//!
//! The crate fits a single (semi-)orthogonal or linear map between two
//! embedding spaces from paired samples of one modality, applies and composes
//! such maps, evaluates cross-model transfer (paired cosine/L2, class-level
//! retrieval, zero-shot variants, kernel CKA, modality gap, two-path
//! retrieval), and numerically checks the identifiability conditions and
//! perturbation bounds that justify the approach on planted synthetic
//! instances.
//!
//! Data-parallel inner loops (per-row application, per-query retrieval,
//! per-instance verification sweeps) run on rayon when the default
//! `parallel` feature is enabled and fall back to sequential loops without
//! it. Reductions are always sequential so results are bit-identical across
//! thread counts.

pub mod align;
pub mod embstore;
pub mod error;
pub mod metrics;
mod par;
pub mod report;
pub mod synth;
pub mod theory;
pub mod verify;

pub use error::Error;
pub use par::set_max_threads;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
