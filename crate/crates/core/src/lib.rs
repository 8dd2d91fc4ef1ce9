//! Budgeted online learning in reproducing kernel Hilbert spaces.
//!
//! Functions are kernel expansions over a dictionary of retained points.
//! Every learner here takes a functional stochastic gradient step, which
//! appends the new sample(s) to the dictionary, then compresses the result
//! with destructive kernel orthogonal matching pursuit ([`komp`]) so that the
//! compressed function stays within a Hilbert-norm budget of the dense one.
//!
//! - [`polk`]: single-learner FSGD plus compression, constant or diminishing steps.
//! - [`colk`]: risk-aware learning that trades mean loss against central
//!   moments of the loss via a stochastic quasi-gradient with a tracked mean.
//! - [`decentralized`]: networked agents coupled by consensus penalties or
//!   proximity constraints with dual variables.
//! - [`datagen`]: seeded synthetic streams; [`harness`]: configs, experiments,
//!   metrics and evaluation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod colk;
pub mod datagen;
pub mod decentralized;
mod error;
pub mod harness;
pub mod komp;
pub mod losses;
pub mod metrics;
pub mod polk;
pub mod rkhs;

pub use error::{Error, Result};
pub use komp::{komp_compress, CompressionBudget, CompressionReport};
pub use losses::{LossModel, Sample};
pub use rkhs::{KernelSpec, Points, RkhsFunction};
