//! Critical-load restoration planning for damaged distribution feeders.
//!
//! A feeder with distributed energy resources is split into restored subtree
//! networks, one per DER, by solving a mixed-integer program that maximizes
//! picked-up critical loads while keeping each network small (and therefore
//! likely to survive). Plans are then audited with an exact power flow,
//! reliability metrics and, for small feeders, an exhaustive oracle.

pub mod feeder;
pub mod fixtures;
pub mod model;
pub mod solve;
pub mod topology;
pub mod verify;

pub use feeder::{
    apply_scenario, parse_feeder, validate_feeder, DerUnit, Diagnostic, DiagnosticKind, EdgeRecord,
    FeederError, FeederGraph, NodeRecord, ScenarioConfig,
};
pub use model::{
    build_model, compute_t_net, MilpModel, ModelError, RestorationModel, Sense, VariableKind,
};
pub use solve::{
    export_mps, extract_plan, import_mps, import_solution, solve_lp, solve_milp, MilpSolution,
    RestorationPlan, RsnPlan, SolveOptions, SolveStatus,
};
pub use topology::{build_path_catalog, enumerate_paths, find_loops, LoopSet, PathCatalog};
pub use verify::{
    audit_radiality, brute_force_restore, effective_unavailability, monte_carlo_survival,
    restoration_path_reliability, restoration_times, sweep_powerflow, verify_plan,
    VerificationReport, VerifyOptions,
};
