//! Core library of the tecast forecasting engine: multi-resolution time
//! series handling, source ingestion and synthesis, sample construction,
//! a reverse-mode autodiff substrate, the temporal fusion model, and the
//! training/evaluation harness.

pub mod autodiff;
pub mod config;
pub mod dataset;
pub mod timeseries;
pub mod error;
pub mod ingest;
pub mod tft;

pub use error::{Error, Result};
