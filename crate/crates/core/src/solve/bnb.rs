//! Best-bound branch-and-bound over the LP relaxation.
//!
//! Until the first incumbent is found the search dives depth-first, taking
//! the up-branch first. Afterwards open nodes are processed in order of
//! (parent bound, creation index), so the result never depends on timing.

use std::rc::Rc;
use std::time::Instant;

use crate::model::MilpModel;

use super::lp::{LpState, Relaxation};
use super::{MilpSolution, SolveError, SolveOptions, SolveStats, SolveStatus};

struct OpenNode {
    id: u64,
    /// Relaxation bound inherited from the parent.
    bound: f64,
    parent: Rc<LpState>,
    column: usize,
    value: f64,
}

struct Incumbent {
    objective: f64,
    values: Vec<f64>,
}

pub(crate) fn branch_and_bound(model: &MilpModel, options: &SolveOptions) -> MilpSolution {
    let started = Instant::now();
    let relaxation = Relaxation::new(model);
    let binaries: Vec<usize> = model.binaries().collect();
    let mut stats = SolveStats::default();

    let root = match relaxation.solve() {
        Ok(state) => state,
        Err(err) => {
            let status = match err {
                SolveError::Unbounded => SolveStatus::Unbounded,
                SolveError::Infeasible => SolveStatus::Infeasible,
                _ => SolveStatus::Limit,
            };
            stats.wall_time = started.elapsed();
            return MilpSolution::without_incumbent(status, model.num_variables(), stats);
        }
    };
    stats.nodes = 1;
    stats.lp_iterations = root.iterations();

    let mut incumbent: Option<Incumbent> = None;
    let mut open: Vec<OpenNode> = Vec::new();
    let mut next_id = 0u64;
    let mut limited = false;

    let mut pending = Some(root);
    loop {
        if let Some(state) = pending.take() {
            let bound = state.objective();
            if !dominated(bound, incumbent.as_ref(), options) {
                let values: Vec<f64> = (0..model.num_variables())
                    .map(|j| state.value(relaxation.column(j)))
                    .collect();
                match branching_column(&values, &binaries, options.integer_tolerance) {
                    None => {
                        let snapped = snap(model, values, &binaries);
                        let objective = model.objective_value(&snapped);
                        log::debug!("incumbent {objective} after {} nodes", stats.nodes);
                        incumbent = Some(Incumbent {
                            objective,
                            values: snapped,
                        });
                        open.retain(|n| !dominated(n.bound, incumbent.as_ref(), options));
                    }
                    Some(column) => {
                        let parent = Rc::new(state);
                        for value in [0.0, 1.0] {
                            open.push(OpenNode {
                                id: next_id,
                                bound,
                                parent: Rc::clone(&parent),
                                column,
                                value,
                            });
                            next_id += 1;
                        }
                    }
                }
            }
        }

        let Some(node) = select(&mut open, incumbent.is_some()) else {
            break;
        };
        if dominated(node.bound, incumbent.as_ref(), options) {
            continue;
        }
        if options.node_limit.is_some_and(|limit| stats.nodes >= limit)
            || options
                .time_limit
                .is_some_and(|limit| started.elapsed() >= limit)
        {
            open.push(node);
            limited = true;
            break;
        }
        stats.nodes += 1;
        let before = node.parent.iterations();
        let parent = Rc::try_unwrap(node.parent).unwrap_or_else(|shared| (*shared).clone());
        match parent.fix(relaxation.column(node.column), node.value) {
            Ok(state) => {
                stats.lp_iterations += state.iterations().saturating_sub(before);
                pending = Some(state);
            }
            Err(SolveError::Infeasible) => {}
            Err(err) => {
                log::warn!("node {} abandoned: {err}", node.id);
                limited = true;
            }
        }
    }

    stats.wall_time = started.elapsed();
    let open_bound = open.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    match incumbent {
        Some(best) => {
            let (status, gap) = if limited {
                let bound = open_bound.min(best.objective);
                (SolveStatus::Feasible, relative_gap(best.objective, bound))
            } else {
                (SolveStatus::Optimal, 0.0)
            };
            MilpSolution {
                status,
                objective: best.objective,
                values: best.values,
                gap,
                stats,
            }
        }
        None => {
            let status = if limited {
                SolveStatus::Limit
            } else {
                SolveStatus::Infeasible
            };
            MilpSolution::without_incumbent(status, model.num_variables(), stats)
        }
    }
}

fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    ((incumbent - bound) / incumbent.abs().max(1e-10)).max(0.0)
}

/// A node whose bound cannot improve the incumbent by more than the gap
/// tolerance is pruned.
fn dominated(bound: f64, incumbent: Option<&Incumbent>, options: &SolveOptions) -> bool {
    match incumbent {
        Some(best) => {
            best.objective - bound <= options.gap_tolerance * best.objective.abs().max(1e-10)
        }
        None => false,
    }
}

/// Depth-first (last created) until an incumbent exists, then the smallest
/// inherited bound with ties broken by creation order.
fn select(open: &mut Vec<OpenNode>, best_bound: bool) -> Option<OpenNode> {
    if !best_bound {
        return open.pop();
    }
    let (pos, _) = open
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.bound.total_cmp(&b.bound).then(a.id.cmp(&b.id)))?;
    Some(open.swap_remove(pos))
}

/// Most fractional binary, lowest index on ties.
fn branching_column(values: &[f64], binaries: &[usize], tolerance: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in binaries {
        let x = values[j];
        let frac = (x - x.round()).abs();
        if frac <= tolerance {
            continue;
        }
        let distance = (x - x.floor() - 0.5).abs();
        if best.is_none_or(|(_, d)| distance < d - 1e-12) {
            best = Some((j, distance));
        }
    }
    best.map(|(j, _)| j)
}

fn snap(model: &MilpModel, mut values: Vec<f64>, binaries: &[usize]) -> Vec<f64> {
    for &j in binaries {
        values[j] = values[j].round();
    }
    for (x, v) in values.iter_mut().zip(&model.variables) {
        if !v.integer {
            *x = x.clamp(v.lower, v.upper);
        }
    }
    values
}
