//! Command-line front end: training, evaluation, observation dumps, the
//! human bench and the play server.

pub mod cli;
pub mod server;

pub use cli::{run, Cli};
