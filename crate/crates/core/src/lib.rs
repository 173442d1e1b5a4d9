//! Multi-scale second-order moment descriptors and adaptive temporal
//! alignment for few-shot video classification.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the dataset
//! writer, parallel evaluation and the command line live in the `m2align`
//! companion crate.
//!
//! Pipeline overview:
//!
//! * [`descriptor`] turns a `T x C x H x W` feature clip into a sequence of
//!   vectorized, square-root normalized second-order moments, one per
//!   (scale, timestamp).
//! * [`alignment`] scores two sequences with an exact earth mover's distance
//!   whose marginal masses come from cross-referencing the other sequence.
//! * [`episode`] samples N-way K-shot tasks, builds prototypes and reports
//!   accuracy with a 95% confidence interval.
//! * [`synth`] renders clips with controlled duration warping and subaction
//!   reordering.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod alignment;
pub mod descriptor;
pub mod episode;
mod error;
pub mod linalg;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
