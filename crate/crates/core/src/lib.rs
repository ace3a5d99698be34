//! Learning data-dependent kernels between probability distributions.
//!
//! Each input point is an empirical distribution (a set of i.i.d. samples).
//! A trainable encoder maps samples onto the unit hypersphere, a first-level
//! *embedding kernel* turns each encoded distribution into a kernel mean
//! embedding, and a second-level *distribution kernel* compares embeddings
//! through their squared MMD. The dataset as a whole embeds into a covariance
//! operator whose Rényi-2 entropy is the training objective (MDKE): maximizing
//! it spreads the mean embeddings apart while collapsing each distribution
//! toward a point, which is exactly the geometry that makes downstream
//! classification with precomputed-Gram SVM or kernel ridge regression easy.
//!
//! The crate is organized around that pipeline:
//!
//! | Module | Role |
//! |--------|------|
//! | [`data`] | Datasets of empirical distributions, JSONL ingestion, subsampling, synthetic generators |
//! | [`kernels`] | Embedding kernel, mean-embedding inner products, MMD, distribution-kernel families, sliced Wasserstein baselines, bandwidth heuristic |
//! | [`objective`] | Rényi-2 entropy, MDKE / MDKE-R losses, distributional-variance identities, spectrum diagnostics |
//! | [`encoders`] | Table and MLP encoders onto the hypersphere, analytic loss gradients, finite-difference oracle |
//! | [`trainer`] | Mini-batch Adam loop with sphere retraction, bandwidth resolution, metric logging, checkpoints |
//! | [`downstream`] | Precomputed-Gram SVM (SMO) and kernel ridge, C-grid search with stratified splits |
//!
//! Heavy inner loops (Gram assembly, gradient accumulation, sliced-Wasserstein
//! projections) are data-parallel over independent output slots. The
//! `parallel` feature (on by default) runs them on rayon; without it the same
//! code runs sequentially. Results are bit-identical either way: every slot is
//! computed with a fixed internal summation order, and reductions happen in
//! index order.

pub mod data;
pub mod downstream;
pub mod encoders;
pub mod error;
pub mod exec;
pub mod kernels;
pub mod objective;
pub mod trainer;

mod mat;

pub use error::{Error, Result};
