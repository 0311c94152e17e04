//! Library surface behind the `forge` binary: configuration parsing and the
//! construct → analyze → verify pipeline. Exposed so integration tests can
//! drive full runs in-process.

pub mod config;
pub mod pipeline;
