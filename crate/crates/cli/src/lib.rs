//! Library side of the `ahmpc` command: configuration, terminal pairs for
//! the double pendulum, and closed-loop runs with CSV logging.

pub mod config;
pub mod run;
pub mod terminal;
