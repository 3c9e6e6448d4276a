//! Scenario runner library behind the `cdcm` binary. The command functions
//! are exposed so test suites can drive scenarios in-process.

pub mod commands;
pub mod scenario;
