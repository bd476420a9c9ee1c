//! Std companion to `ifaad-core`: dataset ingestion and preparation, the
//! forest and session file formats, the simulated-analyst experiment
//! harness, and the HTTP labeling service.

pub mod data;
mod error;
pub mod forest_io;
pub mod harness;
pub mod service;
pub mod session;

pub use error::{Error, Result};
