//! Configuration, presets, reports and subcommands behind the `qttf`
//! binary.

// `!(x > 0.0)` style range checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod presets;
pub mod report;

pub use config::Config;
pub use report::Report;
