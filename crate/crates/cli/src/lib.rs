//! Command-line entry points, 2D layout and the HTTP explanation service.

pub mod cli;
pub mod layout;
pub mod server;
