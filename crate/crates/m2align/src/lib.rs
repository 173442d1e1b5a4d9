//! File formats, dataset IO, parallel evaluation and the command-line
//! front end for `m2align-core`.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod manifest;
pub mod report;
pub mod seqio;
pub mod store;
