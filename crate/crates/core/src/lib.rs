//! Kernel dependence toolkit for few-shot head adaptation on precomputed
//! embeddings.
//!
//! The pipeline per episode:
//!
//! 1. select kernel bandwidths by maximizing the HSIC test-power ratio
//!    `HSIC / sqrt(v + ε)` over a coefficient grid ([`hsic::select_bandwidth`]);
//! 2. fine-tune a `d × d` linear head on the support set by minimizing
//!    `-HSIC(Z, Y) + γ·HSIC(Z, Z)` with Adadelta ([`adapt::run_episode`]);
//! 3. classify the query set with a cosine nearest-centroid rule.
//!
//! [`tasks`] provides vary-way vary-shot episode sampling, synthetic data and
//! embedding file I/O; [`eval`] aggregates episodes into accuracy reports.

// `!(x > 0.0)` checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod error;
pub mod eval;
pub mod hsic;
pub mod kernels;
pub mod tasks;

pub use error::{Error, FormatError, FormatErrorKind, Result};
pub use kernels::{EmbeddingMatrix, KernelFamily, KernelMatrix, KernelSpec, LabelVector};
