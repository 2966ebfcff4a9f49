//! Std companion of `cftp-core`: model files, parallel sample batches with
//! CSV output and run manifests, and the `cftp` command line.

pub mod batch;
pub mod cli;
pub mod manifest;
pub mod model_file;
