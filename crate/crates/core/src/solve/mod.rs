//! Embedded MILP solver, interchange files and plan extraction.

mod bnb;
mod lp;
mod mps;
mod plan;
mod solution;

pub use mps::{export_mps, import_mps, short_names};
pub use plan::{extract_plan, PlanError, RestorationPlan, RsnPlan, SelectedPath};
pub use solution::{import_solution, write_solution, ImportedSolution};

use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::model::MilpModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("problem is infeasible")]
    Infeasible,
    #[error("problem is unbounded")]
    Unbounded,
    #[error("solver limit reached")]
    Limit,
    #[error("numerical failure in the LP solver: {0}")]
    Numerical(String),
    #[error("MPS line {line}: {message}")]
    Mps { line: usize, message: String },
    #[error("solution line {line}: {message}")]
    SolutionSyntax { line: usize, message: String },
    #[error("solution names unknown variable \"{0}\"")]
    UnknownVariable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Best incumbent when a limit stopped the search.
    Feasible,
    Infeasible,
    Unbounded,
    /// A limit stopped the search before any incumbent was found.
    Limit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Relative gap at which a node is pruned against the incumbent.
    pub gap_tolerance: f64,
    /// Distance from an integer below which a binary counts as integral.
    pub integer_tolerance: f64,
    pub node_limit: Option<u64>,
    pub time_limit: Option<Duration>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            gap_tolerance: 1e-6,
            integer_tolerance: 1e-6,
            node_limit: None,
            time_limit: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    /// LP relaxations solved, the root included.
    pub nodes: u64,
    pub lp_iterations: u64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution {
    pub status: SolveStatus,
    /// Objective recomputed from `values` (NaN without an incumbent).
    pub objective: f64,
    /// One entry per model variable, binaries snapped to 0/1.
    pub values: Vec<f64>,
    pub gap: f64,
    pub stats: SolveStats,
}

impl MilpSolution {
    fn without_incumbent(status: SolveStatus, n: usize, stats: SolveStats) -> Self {
        Self {
            status,
            objective: f64::NAN,
            values: vec![0.0; n],
            gap: f64::INFINITY,
            stats,
        }
    }

    pub fn has_incumbent(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal | SolveStatus::Feasible)
    }
}

/// Solution of the continuous relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub objective: f64,
    pub values: Vec<f64>,
    pub iterations: u64,
}

/// Solves `model` with every integrality requirement dropped.
pub fn solve_lp(model: &MilpModel) -> Result<LpSolution, SolveError> {
    let relaxation = lp::Relaxation::new(model);
    let state = relaxation.solve()?;
    Ok(LpSolution {
        objective: state.objective(),
        values: (0..model.num_variables())
            .map(|j| state.value(relaxation.column(j)))
            .collect(),
        iterations: state.iterations(),
    })
}

/// Solves `model` to optimality (within `options.gap_tolerance`) by
/// branch-and-bound. Identical inputs give identical results.
pub fn solve_milp(model: &MilpModel, options: &SolveOptions) -> MilpSolution {
    let solution = bnb::branch_and_bound(model, options);
    log::info!(
        "{:?} objective {} after {} nodes, {} LP iterations",
        solution.status,
        solution.objective,
        solution.stats.nodes,
        solution.stats.lp_iterations
    );
    solution
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Sense;

    fn fx8_plan(graph: crate::feeder::FeederGraph, faults: &[&str]) -> RestorationPlan {
        let scenario = crate::feeder::ScenarioConfig {
            faulted_edges: faults.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        };
        let applied = crate::feeder::apply_scenario(&graph, &scenario).unwrap();
        let model = crate::model::build_model(&applied, &scenario).unwrap();
        let sol = solve_milp(&model.milp, &SolveOptions::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        extract_plan(&model, &sol, &applied).unwrap()
    }

    #[test]
    fn fx8_optimum() {
        let plan = fx8_plan(crate::fixtures::fx8(), &[]);
        assert!((plan.objective + 15.7).abs() < 1e-9, "{}", plan.objective);
        assert_eq!(plan.rsns[0].nodes, ["1", "2", "3", "4", "5", "7"]);
        assert_eq!(plan.rsns[0].t_hours, Some(4.0));
        assert!((plan.rsns[0].u_r - 0.3).abs() < 1e-12);
    }

    #[test]
    fn fx8_damaged_uses_the_tie() {
        let plan = fx8_plan(crate::fixtures::fx8(), &["3-4"]);
        assert!((plan.objective + 15.65).abs() < 1e-9, "{}", plan.objective);
        assert_eq!(plan.rsns[0].nodes, ["1", "2", "4", "5", "6", "7", "8"]);
    }

    #[test]
    fn fx8_small_der_picks_only_load_7() {
        let plan = fx8_plan(crate::fixtures::fx8_with_p_max(25.0), &[]);
        assert_eq!(plan.rsns[0].critical_loads, ["7"]);
        assert!((plan.objective + 7.8).abs() < 1e-9);
    }

    #[test]
    fn one_variable_lp() {
        let mut m = MilpModel::new();
        let s = m.add_variable("s", 0.0, 10.0, false);
        m.add_constraint("cap", vec![(s, 1.0)], Sense::Le, 1.0);
        m.set_objective(vec![(s, -1.0)]);
        let lp = solve_lp(&m).unwrap();
        assert_eq!(lp.values, vec![1.0]);
        assert_eq!(lp.objective, -1.0);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut m = MilpModel::new();
        let v = m.add_variable("v", 0.0, 1.0, true);
        m.add_constraint("one", vec![(v, 1.0)], Sense::Eq, 1.0);
        m.add_constraint("zero", vec![(v, 1.0)], Sense::Eq, 0.0);
        assert_eq!(solve_lp(&m).unwrap_err(), SolveError::Infeasible);
        assert_eq!(
            solve_milp(&m, &SolveOptions::default()).status,
            SolveStatus::Infeasible
        );
    }

    #[test]
    fn empty_row_contradiction() {
        let mut m = MilpModel::new();
        m.add_variable("v", 0.0, 1.0, true);
        m.add_constraint("never", vec![], Sense::Ge, 1.0);
        assert_eq!(solve_lp(&m).unwrap_err(), SolveError::Infeasible);
    }

    /// Knapsack whose LP optimum is fractional; checked against enumeration.
    #[test]
    fn knapsack_matches_enumeration() {
        let weights = [5.0, 4.0, 6.0, 3.0, 7.0, 2.0];
        let values = [10.0, 7.0, 12.0, 5.0, 13.0, 3.0];
        let cap = 14.0;
        let mut m = MilpModel::new();
        let xs: Vec<usize> = (0..6)
            .map(|i| m.add_variable(format!("x{i}"), 0.0, 1.0, true))
            .collect();
        m.add_constraint(
            "cap",
            xs.iter().zip(weights).map(|(&x, w)| (x, w)).collect(),
            Sense::Le,
            cap,
        );
        m.set_objective(xs.iter().zip(values).map(|(&x, v)| (x, -v)).collect());
        let sol = solve_milp(&m, &SolveOptions::default());
        let best = (0u32..64)
            .filter(|mask| {
                (0..6)
                    .filter(|i| mask >> i & 1 == 1)
                    .map(|i| weights[i])
                    .sum::<f64>()
                    <= cap
            })
            .map(|mask| {
                -(0..6)
                    .filter(|i| mask >> i & 1 == 1)
                    .map(|i| values[i])
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - best).abs() < 1e-9);
        assert!(sol.values.iter().all(|&x| x == 0.0 || x == 1.0));
        assert!(sol.stats.nodes > 1);
    }

    #[test]
    fn node_limit_reports_limit_or_feasible() {
        let mut m = MilpModel::new();
        let xs: Vec<usize> = (0..8)
            .map(|i| m.add_variable(format!("x{i}"), 0.0, 1.0, true))
            .collect();
        m.add_constraint(
            "cap",
            xs.iter().map(|&x| (x, 2.0)).collect(),
            Sense::Le,
            7.0,
        );
        m.set_objective(
            xs.iter()
                .enumerate()
                .map(|(i, &x)| (x, -1.0 - i as f64 * 0.01))
                .collect(),
        );
        let options = SolveOptions {
            node_limit: Some(1),
            ..Default::default()
        };
        let sol = solve_milp(&m, &options);
        assert!(matches!(
            sol.status,
            SolveStatus::Limit | SolveStatus::Feasible
        ));
    }

    #[test]
    fn unbounded_is_reported() {
        let mut m = MilpModel::new();
        let x = m.add_variable("x", 0.0, f64::INFINITY, false);
        m.set_objective(vec![(x, -1.0)]);
        assert_eq!(
            solve_milp(&m, &SolveOptions::default()).status,
            SolveStatus::Unbounded
        );
    }
}
