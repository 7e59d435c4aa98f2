//! Finite-space toolkit for product measures of stochastic kernels, their
//! couplings, and total-variation perturbation bounds.
//!
//! * [`measure`]: signed measures, Hahn-Jordan split, meet, partitions.
//! * [`kernel`]: row-stochastic and density kernels with kernel-level distances.
//! * [`product`]: `μ ⊗ K` and finite-horizon products of history-dependent kernels.
//! * [`coupling`]: γ-couplings, sequential coupling kernels, a seeded sampler.
//! * [`bounds`]: linear and multiplicative bounds, overlap products, reports.
//! * [`twostate`]: closed-form two-state example.
//! * [`generate`]: seeded random instances.
//! * [`cli`]: configuration-driven experiment runner.

pub mod bounds;
pub mod cli;
pub mod coupling;
pub mod error;
pub mod generate;
pub mod kernel;
pub mod measure;
pub mod product;
pub mod twostate;

pub use error::{Error, Result};
