//! Monte Carlo engines for the membrane process and the redistribution
//! process, with trace clocks, occupation statistics, and near-membrane
//! excursion experiments.

pub mod engine;
pub mod excursion;
pub mod streams;
pub mod x_process;
pub mod y_process;

pub use engine::{cell_slot, subtree_mask, SimulateError};
pub use excursion::{boundary_excursion_stats, trap_escape_stats, CollarExit, CollarSpec, ExcursionSummary};
pub use x_process::{run_x_to_time, run_x_to_time_many, run_x_until_absorbed, run_x_until_absorbed_many, run_x_until_hit, run_x_until_hit_many, HitEvent, HitOutcome, ParticleRunResult, XSimConfig};
pub use y_process::{run_y_many, run_y_until_hit, McY, YHit, YSimConfig};
