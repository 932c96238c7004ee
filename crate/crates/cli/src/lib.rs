//! Library half of the `replab` command-line tool: configuration files,
//! subcommands, the invariant verification suite and provenance-stamped
//! output.

pub mod commands;
pub mod error;
pub mod experiment;
pub mod provenance;
pub mod verify;

pub use error::{CliError, CliResult};
