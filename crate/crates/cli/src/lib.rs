//! Command-line and HTTP front end for the finsql pipeline.

pub mod commands;
pub mod config;
pub mod server;
pub mod service;
pub mod traces;
