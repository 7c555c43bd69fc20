//! File formats, the LLM gateway and mock server, pipeline stages and the
//! command-line front end built on `synthlabel-core`.

pub mod annotate;
pub mod cli;
pub mod config;
pub mod gateway;
pub mod io;
pub mod mock;
pub mod pipeline;

pub use synthlabel_core as core;

/// A problem with the user's input (config, files, flags) rather than with
/// this program. The CLI exits with status 1 for these.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UserError(pub String);

pub fn user_error(msg: impl Into<String>) -> anyhow::Error {
    UserError(msg.into()).into()
}
