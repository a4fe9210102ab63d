//! LP relaxation backed by a bounded-variable simplex with warm-started
//! re-solves after bound fixings.

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome};

use crate::model::{MilpModel, Sense};

use super::SolveError;

/// The continuous relaxation of a [`MilpModel`], ready to be solved.
pub(crate) struct Relaxation {
    problem: Problem,
    columns: Vec<microlp::Variable>,
    /// An empty row with an unsatisfiable right-hand side.
    contradiction: bool,
}

/// A solved relaxation that can be re-solved with extra fixings.
#[derive(Clone)]
pub(crate) struct LpState {
    solution: microlp::Solution,
}

impl Relaxation {
    pub(crate) fn new(model: &MilpModel) -> Self {
        let mut problem = Problem::new(OptimizationDirection::Minimize);
        let mut cost = vec![0.0; model.num_variables()];
        for &(j, c) in &model.objective {
            cost[j] = c;
        }
        let columns = model
            .variables
            .iter()
            .zip(&cost)
            .map(|(v, &c)| problem.add_var(c, (v.lower, v.upper)))
            .collect::<Vec<_>>();
        let mut contradiction = false;
        for row in &model.constraints {
            if row.terms.is_empty() {
                contradiction |= row.violation(&[]) > 1e-9;
                continue;
            }
            let terms: Vec<(microlp::Variable, f64)> =
                row.terms.iter().map(|&(j, a)| (columns[j], a)).collect();
            let op = match row.sense {
                Sense::Le => ComparisonOp::Le,
                Sense::Eq => ComparisonOp::Eq,
                Sense::Ge => ComparisonOp::Ge,
            };
            problem.add_constraint(terms, op, row.rhs);
        }
        Self {
            problem,
            columns,
            contradiction,
        }
    }

    pub(crate) fn solve(&self) -> Result<LpState, SolveError> {
        if self.contradiction {
            return Err(SolveError::Infeasible);
        }
        outcome(self.problem.solve())
    }

    pub(crate) fn column(&self, j: usize) -> microlp::Variable {
        self.columns[j]
    }
}

fn outcome(result: Result<SolveOutcome, microlp::Error>) -> Result<LpState, SolveError> {
    match result {
        Ok(SolveOutcome::Solution(solution)) => Ok(LpState { solution }),
        Ok(SolveOutcome::Interrupted(_)) => Err(SolveError::Limit),
        Err(microlp::Error::Infeasible) => Err(SolveError::Infeasible),
        Err(microlp::Error::Unbounded) => Err(SolveError::Unbounded),
        Err(other) => Err(SolveError::Numerical(other.to_string())),
    }
}

impl LpState {
    pub(crate) fn objective(&self) -> f64 {
        self.solution.objective()
    }

    pub(crate) fn value(&self, column: microlp::Variable) -> f64 {
        self.solution.var_value_raw(column)
    }

    pub(crate) fn iterations(&self) -> u64 {
        self.solution.stats().lp_iterations
    }

    /// Re-solves with `column` fixed to `value`, starting from this basis.
    pub(crate) fn fix(self, column: microlp::Variable, value: f64) -> Result<LpState, SolveError> {
        outcome(self.solution.fix_var(column, value))
    }
}
