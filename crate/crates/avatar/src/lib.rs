//! The `avatar` command-line tool and the local studio service.

pub mod cli;
pub mod service;
