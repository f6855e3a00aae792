//! Batch experiment runner for the `nardf` library.

pub mod config;
pub mod record;
pub mod run;
