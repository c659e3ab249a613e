//! Simulation and stability analysis of DC microgrids under a nested
//! consensus-based current-sharing controller.
//!
//! * [`netmodel`]: electrical network, cyber graph, per-unit data.
//! * [`controller`]: voltage envelope, controller nonlinearities and dynamics.
//! * [`simulator`]: closed-loop model, event-driven RK4 runs, trace metrics.
//! * [`equilibrium`]: quasi-steady state, equilibria, KKT residuals.
//! * [`stability`]: Geršgorin certification, worst-case search, time-scale rule,
//!   tuning strategies and Lyapunov monitors.
//! * [`config`], [`presets`], [`io`]: configuration files and output formats.

pub mod config;
pub mod controller;
pub mod equilibrium;
pub mod error;
pub mod io;
pub mod model;
pub mod netmodel;
pub mod presets;
pub mod simulator;
pub mod stability;

pub use config::{load_config, RunConfig};
pub use controller::{ControllerParams, LeakageMode, VoltageEnvelope};
pub use equilibrium::{find_equilibrium, kkt_residual, EquilibriumPoint, EquilibriumReport};
pub use error::{Error, Result};
pub use model::Microgrid;
pub use netmodel::{ActiveMask, CyberGraph, PhysicalNetwork};
pub use simulator::{run_scenario, ScenarioOutput, SimulationTrace, SummaryReport};
pub use stability::{
    apply_strategy, gershgorin_scan, timescale_requirement, worst_case_search, GershgorinReport, OffRowMode,
    SearchBox, SearchConfig, TimescaleReport, TuningStrategy, WorstCaseResult, ZEvaluator,
};
