//! Configuration, persistence, curriculum and the command-line front end.

pub mod bundle;
pub mod calibrate;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod curriculum;
