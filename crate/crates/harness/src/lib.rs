//! Config-driven runner for the SO(n) consensus experiments: single runs with
//! a per-iteration trace, multi-trial parameter sweeps, and a self-check
//! battery.

pub mod config;
pub mod experiment;
pub mod sweep;
pub mod verify;

use son_consensus::Termination;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_MAX_ITERS: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;
pub const EXIT_VERIFY_FAILED: i32 = 5;

pub fn exit_code(t: Termination) -> i32 {
    match t {
        Termination::Converged => EXIT_OK,
        Termination::MaxIterations => EXIT_MAX_ITERS,
        Termination::Diverged => EXIT_DIVERGED,
    }
}
