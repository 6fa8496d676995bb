//! Command-line front end, HTTP clients for the external services and a
//! host that serves the mock backends over HTTP.

mod app;
pub mod http;
pub mod serve;

pub use app::{exit_code, run, Cli, Command, UsageError, EXIT_DATA, EXIT_OK, EXIT_SERVICE, EXIT_USAGE};
