//! Library surface of the scenario runner: file loading and report types,
//! shared between the `tgm` binary and the verification test suites.

pub mod report;
pub mod scenario;
