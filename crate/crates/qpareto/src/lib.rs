//! Configuration files, output formats and experiment runners for
//! `qpareto-core`. The `qpareto` binary is a thin front end over
//! [`commands`].

pub mod commands;
pub mod config;
pub mod formats;
