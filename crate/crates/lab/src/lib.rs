//! Command-line front end, run directories, checkpoints and CSV output for
//! `realuid-core`.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod run;
pub mod table;
