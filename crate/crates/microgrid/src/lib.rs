//! Cost-optimal day-ahead dispatch for an islanded residential microgrid
//! (PV, battery fleet, diesel, load curtailment), plus sample-based
//! curtailment risk metrics across demand/PV scenarios.

pub mod battery;
mod cli;
pub mod domain;
pub mod lp;
pub mod pipeline;
pub mod risk;
pub mod scenario_io;
pub mod scheduler;

/// CLI entry point; returns the process exit code.
pub fn run() -> i32 {
    cli::run()
}
