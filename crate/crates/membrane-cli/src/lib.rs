//! Library surface of the CLI: scene files, manifests, and the command
//! implementations, kept callable so the integration tests can drive them
//! without spawning processes.

pub mod commands;
pub mod manifest;
pub mod scene_file;
