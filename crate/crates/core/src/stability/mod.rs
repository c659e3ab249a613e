//! Stability certification: singular-perturbation matrices, the reduced map
//! Z(v), Geršgorin scans, worst-case search, the time-scale rule, the tuning
//! catalogue and Lyapunov monitors.

mod gershgorin;
mod lyapunov;
mod spt;
mod strategy;
mod timescale;
mod worst_case;
mod zfun;

pub use gershgorin::{gershgorin_scan, GershgorinReport, GershgorinRow, OffRowMode, SearchBox};
pub use lyapunov::{
    boundary_layer_run, first_increase, first_non_decrease, lyapunov_monitor, reduced_run, spt_gap, w_s,
    BoundaryLayer, BoundaryLayerRun, GapOptions, LyapunovSeries, ReducedRun, ReducedSystem,
};
pub use spt::{build_spt_matrices, SptMatrices};
pub use strategy::{apply_strategy, strategy_from_config, TuningStrategy};
pub use timescale::{slowest_fast_constant, timescale_requirement, TimescaleReport};
pub use worst_case::{worst_case_search, SearchConfig, WorstCaseResult, WorstCaseRow};
pub use zfun::{z_jacobian, z_value, ZEvaluator};
