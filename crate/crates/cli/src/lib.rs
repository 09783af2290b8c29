//! Command-line front end: JSON documents in, reports out.

pub mod commands;
pub mod doc;
pub mod report;

pub use commands::{run, Command, Options};
