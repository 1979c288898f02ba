//! Command-line companion to the skeleton-extraction core: file formats
//! (PNG masks, split manifests, checkpoints, CSV histories, text reports)
//! and the `skelex` binary's command implementations.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod corpus;
pub mod error;
pub mod png_io;
pub mod report;
