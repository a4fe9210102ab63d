//! Exhaustive restoration search for small feeders.
//!
//! Every connected bus set around each DER is enumerated as a bitmask and
//! checked directly against the restoration rules; the best combination of
//! disjoint sets is then found by a pruned product search. Nothing here goes
//! through the MILP, so the result is an independent reference.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::feeder::{apply_scenario, FeederError, FeederGraph, ScenarioConfig};
use crate::model::{compute_t_net, ModelError};
use crate::solve::{RestorationPlan, RsnPlan};

use super::label_supply_paths;

pub const MAX_NODES: usize = 14;
pub const MAX_DERS: usize = 3;

const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("exhaustive search is limited to {MAX_NODES} buses and {MAX_DERS} DERs, got {nodes} and {ders}")]
    TooLarge { nodes: usize, ders: usize },
    #[error(transparent)]
    Feeder(#[from] FeederError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no assignment satisfies every restoration rule")]
    Infeasible,
}

/// A feasible bus set for one DER with a tree that satisfies the voltage
/// limits.
#[derive(Debug, Clone)]
struct Candidate {
    mask: u32,
    cost: f64,
    tree: Vec<usize>,
}

/// Minimum-objective restoration plan by exhaustive enumeration.
///
/// Among plans of equal objective the one whose sets come first in
/// (DER order, ascending cost, ascending bitmask) order wins; ties need not
/// match the solver's choice.
pub fn brute_force_restore(
    graph: &FeederGraph,
    scenario: &ScenarioConfig,
) -> Result<RestorationPlan, OracleError> {
    if graph.node_count() > MAX_NODES || graph.der_count() > MAX_DERS {
        return Err(OracleError::TooLarge {
            nodes: graph.node_count(),
            ders: graph.der_count(),
        });
    }
    scenario.check()?;
    let g = apply_scenario(graph, scenario)?;
    let equity = if scenario.enforce_time_equity {
        let t_net = compute_t_net(&g)?;
        let eps = scenario.epsilon_hours.unwrap_or(0.0);
        if eps >= t_net {
            return Err(ModelError::DegenerateEquity {
                epsilon: eps,
                t_net,
            }
            .into());
        }
        Some((t_net, eps))
    } else {
        None
    };
    let reward = (g.der_count() * g.node_count()) as f64;
    let der_mask: u32 = (0..g.der_count()).map(|k| 1u32 << g.der_node(k)).sum();

    let per_der: Vec<Vec<Candidate>> = (0..g.der_count())
        .map(|k| {
            let root = g.der_node(k);
            let others = der_mask & !(1 << root);
            let mut found: Vec<Candidate> = (0u32..1 << g.node_count())
                .filter(|&mask| mask & (1 << root) != 0 && mask & others == 0)
                .filter(|&mask| admissible(&g, k, mask, equity))
                .filter_map(|mask| {
                    let tree = voltage_feasible_tree(&g, root, mask, scenario)?;
                    let size = mask.count_ones() as f64;
                    let picked = (0..g.node_count())
                        .filter(|&i| mask >> i & 1 == 1 && g.is_critical(i))
                        .count() as f64;
                    let cost = (1.0 - g.ders()[k].availability) * size - reward * picked;
                    Some(Candidate { mask, cost, tree })
                })
                .collect();
            found.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(a.mask.cmp(&b.mask)));
            found
        })
        .collect();

    let mut search = Search {
        lists: &per_der,
        rest_min: suffix_minima(&per_der),
        chosen: Vec::new(),
        best: None,
    };
    search.descend(0, 0, 0.0);
    let (_, picks) = search.best.ok_or(OracleError::Infeasible)?;
    Ok(assemble(&g, &picks))
}

fn suffix_minima(lists: &[Vec<Candidate>]) -> Vec<f64> {
    let mut out = vec![0.0; lists.len() + 1];
    for k in (0..lists.len()).rev() {
        out[k] = out[k + 1] + lists[k].first().map_or(f64::INFINITY, |c| c.cost);
    }
    out
}

struct Search<'a> {
    lists: &'a [Vec<Candidate>],
    rest_min: Vec<f64>,
    chosen: Vec<&'a Candidate>,
    best: Option<(f64, Vec<Candidate>)>,
}

impl<'a> Search<'a> {
    fn descend(&mut self, k: usize, used: u32, cost: f64) {
        if k == self.lists.len() {
            if self.best.as_ref().is_none_or(|(b, _)| cost < b - TOLERANCE) {
                self.best = Some((cost, self.chosen.iter().map(|&c| c.clone()).collect()));
            }
            return;
        }
        let lists = self.lists;
        for c in &lists[k] {
            let bound = cost + c.cost + self.rest_min[k + 1];
            if self
                .best
                .as_ref()
                .is_some_and(|(b, _)| bound >= b - TOLERANCE)
            {
                break;
            }
            if c.mask & used != 0 {
                continue;
            }
            self.chosen.push(c);
            self.descend(k + 1, used | c.mask, cost + c.cost);
            self.chosen.pop();
        }
    }
}

/// Connectivity over live lines, faulted-line isolation, switchless-line
/// coupling, capacity and the time-equity band.
fn admissible(g: &FeederGraph, k: usize, mask: u32, equity: Option<(f64, f64)>) -> bool {
    let inside = |i: usize| mask >> i & 1 == 1;
    let root = g.der_node(k);
    let mut seen = 1u32 << root;
    let mut stack = vec![root];
    while let Some(u) = stack.pop() {
        for (w, _) in g.live_neighbors(u) {
            if inside(w) && seen & (1 << w) == 0 {
                seen |= 1 << w;
                stack.push(w);
            }
        }
    }
    if seen != mask {
        return false;
    }
    for (e, edge) in g.edges().iter().enumerate() {
        let (a, b) = g.edge_ends(e);
        if edge.faulted && inside(a) && inside(b) {
            return false;
        }
        if !edge.switchable && !edge.faulted && !edge.normally_open && inside(a) != inside(b) {
            return false;
        }
    }
    let der = &g.ders()[k];
    let (mut p, mut q, mut any_critical) = (0.0, 0.0, false);
    for i in (0..g.node_count()).filter(|&i| inside(i)) {
        let (pi, qi) = g.restoration_demand(i);
        p += pi;
        q += qi;
        any_critical |= g.is_critical(i);
    }
    let slack = TOLERANCE * g.base_kva();
    if p > der.p_max + slack || q > der.q_max + slack {
        return false;
    }
    if let Some((t_net, eps)) = equity {
        if p > der.energy_reserve / (t_net - eps) + slack {
            return false;
        }
        if any_critical && p < der.energy_reserve / (t_net + eps) - slack {
            return false;
        }
    }
    true
}

/// First spanning tree of the set (over live lines inside it) whose linear
/// voltages stay within limits, as a list of line indices.
fn voltage_feasible_tree(
    g: &FeederGraph,
    root: usize,
    mask: u32,
    s: &ScenarioConfig,
) -> Option<Vec<usize>> {
    let inside = |i: usize| mask >> i & 1 == 1;
    let lines: Vec<usize> = (0..g.edge_count())
        .filter(|&e| {
            let (a, b) = g.edge_ends(e);
            !g.edges()[e].faulted && inside(a) && inside(b)
        })
        .collect();
    let need = mask.count_ones() as usize - 1;
    let drop = lines.len() - need;
    let mut pick: Vec<usize> = (0..drop).collect();
    loop {
        let tree: Vec<usize> = lines
            .iter()
            .enumerate()
            .filter(|(i, _)| !pick.contains(i))
            .map(|(_, &e)| e)
            .collect();
        if let Some(v) = linear_voltages(g, root, mask, &tree, s.v_ref) {
            if v.iter()
                .all(|&x| x >= s.v_min - TOLERANCE && x <= s.v_max + TOLERANCE)
            {
                return Some(tree);
            }
        }
        if !next_combination(&mut pick, lines.len()) {
            return None;
        }
    }
}

fn next_combination(pick: &mut [usize], n: usize) -> bool {
    let r = pick.len();
    for i in (0..r).rev() {
        if pick[i] < n - r + i {
            pick[i] += 1;
            for j in i + 1..r {
                pick[j] = pick[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Linear voltages when `tree` spans the set from `root`; `None` otherwise.
fn linear_voltages(
    g: &FeederGraph,
    root: usize,
    mask: u32,
    tree: &[usize],
    v_ref: f64,
) -> Option<Vec<f64>> {
    let n = g.node_count();
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut order = vec![root];
    let mut seen = 1u32 << root;
    let mut head = 0;
    while head < order.len() {
        let u = order[head];
        head += 1;
        for &(w, e) in g.neighbors(u) {
            if tree.contains(&e) && seen & (1 << w) == 0 {
                seen |= 1 << w;
                parent[w] = Some((u, e));
                order.push(w);
            }
        }
    }
    if seen != mask {
        return None;
    }
    let mut flow: Vec<(f64, f64)> = (0..n).map(|i| g.restoration_demand_pu(i)).collect();
    for &j in order.iter().rev() {
        if let Some((p, _)) = parent[j] {
            flow[p].0 += flow[j].0;
            flow[p].1 += flow[j].1;
        }
    }
    let mut v = vec![v_ref; n];
    for &j in &order {
        if let Some((p, e)) = parent[j] {
            let edge = &g.edges()[e];
            v[j] = v[p] - (edge.r * flow[j].0 + edge.x * flow[j].1) / v_ref;
        }
    }
    Some(order.iter().map(|&j| v[j]).collect())
}

fn assemble(g: &FeederGraph, picks: &[Candidate]) -> RestorationPlan {
    let reward = (g.der_count() * g.node_count()) as f64;
    let mut owned = 0u32;
    let mut rsns = Vec::new();
    for (k, c) in picks.iter().enumerate() {
        owned |= c.mask;
        let der = &g.ders()[k];
        let members: Vec<usize> = g
            .nodes_in_order()
            .into_iter()
            .filter(|&i| c.mask >> i & 1 == 1)
            .collect();
        let edges: BTreeSet<usize> = c.tree.iter().copied().collect();
        let mut rsn = RsnPlan {
            der: der.node.clone(),
            availability: der.availability,
            energy_kwh: der.energy_reserve,
            nodes: members.iter().map(|&i| g.node_id(i).to_string()).collect(),
            edges: edges
                .iter()
                .map(|&e| (g.edges()[e].from.clone(), g.edges()[e].to.clone()))
                .collect(),
            critical_loads: members
                .iter()
                .filter(|&&i| g.is_critical(i))
                .map(|&i| g.node_id(i).to_string())
                .collect(),
            selected_paths: Vec::new(),
            served_p_kw: members.iter().map(|&i| g.restoration_demand(i).0).sum(),
            served_q_kvar: members.iter().map(|&i| g.restoration_demand(i).1).sum(),
            t_hours: None,
            u_r: (1.0 - der.availability) * members.len() as f64,
        };
        rsn.t_hours = (rsn.served_p_kw > 0.0).then(|| rsn.energy_kwh / rsn.served_p_kw);
        label_supply_paths(&mut rsn, g);
        rsns.push(rsn);
    }
    let picked = rsns.iter().map(|r| r.critical_loads.len()).sum::<usize>();
    let u_r: f64 = rsns.iter().map(|r| r.u_r).sum();
    let u_rc = u_r - reward * picked as f64;
    RestorationPlan {
        rsns,
        picked_critical_loads: picked,
        unserved_critical_loads: g
            .critical_nodes()
            .into_iter()
            .filter(|&i| owned >> i & 1 == 0)
            .map(|i| g.node_id(i).to_string())
            .collect(),
        u_r,
        u_rc,
        t_net: compute_t_net(g).ok(),
        objective: u_rc,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn run(graph: FeederGraph, faults: &[&str]) -> RestorationPlan {
        let scenario = ScenarioConfig {
            faulted_edges: faults.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        };
        brute_force_restore(&graph, &scenario).unwrap()
    }

    #[test]
    fn fx8_cases() {
        let plan = run(fixtures::fx8(), &[]);
        assert!((plan.objective + 15.7).abs() < 1e-9);
        assert_eq!(plan.rsns[0].nodes, ["1", "2", "3", "4", "5", "7"]);

        let plan = run(fixtures::fx8(), &["3-4"]);
        assert!((plan.objective + 15.65).abs() < 1e-9);
        assert_eq!(plan.rsns[0].nodes, ["1", "2", "4", "5", "6", "7", "8"]);
        assert!(plan.rsns[0].edges.contains(&("8".into(), "4".into())));

        let plan = run(fixtures::fx8_with_p_max(25.0), &[]);
        assert_eq!(plan.rsns[0].critical_loads, ["7"]);
    }

    #[test]
    fn starved_der_keeps_only_its_bus() {
        let plan = run(fixtures::fx8_with_p_max(10.0), &[]);
        assert_eq!(plan.picked_critical_loads, 0);
        assert_eq!(plan.rsns[0].nodes, ["1"]);
        assert!((plan.objective - 0.05).abs() < 1e-12);
    }

    #[test]
    fn size_guard() {
        let scenario = fixtures::synthetic_123_scenario();
        assert!(matches!(
            brute_force_restore(&fixtures::synthetic_123(), &scenario),
            Err(OracleError::TooLarge { nodes: 123, .. })
        ));
    }

    #[test]
    fn combinations_visit_all_subsets() {
        let mut pick = vec![0, 1];
        let mut count = 1;
        while next_combination(&mut pick, 5) {
            count += 1;
        }
        assert_eq!(count, 10);
    }
}
