//! File formats, parallel execution and the command-line pipeline around
//! `shapecomp-core`.

pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod csv_out;
pub mod dataset;
pub mod error;
pub mod fs;
pub mod manifest;
pub mod mesh_io;
pub mod parallel;
pub mod partial_io;

pub use error::{Error, Result};
pub use shapecomp_core as core;
