//! Benchmark harness and file plumbing behind the `lrmr` command-line
//! tool; the solvers themselves live in the `lowrank-lar` crate.

pub mod generators;
pub mod harness;
pub mod io;
pub mod report;
