//! File formats and the `reassembly` command-line driver.
//!
//! An instance directory holds `pieces/piece_<k>.rlp`, `historical_data.csv`
//! and, for generated instances, `solution.sealed.json`. Solvers read the
//! first two only.

pub mod commands;
pub mod io;
pub mod pipeline;

pub use commands::{run, Cli, ExitStatus};
