use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feeder::{natural_cmp, FeederGraph};
use crate::model::{compute_t_net, RestorationModel, VariableKind};

use super::MilpSolution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("solution has {found} values but the model has {expected} variables")]
    Mismatch { expected: usize, found: usize },
    #[error("binary {var} is fractional ({value})")]
    Fractional { var: String, value: f64 },
    #[error("node {node} is assigned to more than one DER")]
    Overlap { node: String },
    #[error("network of DER {der} is not radial: {reason}")]
    NotRadial { der: String, reason: String },
}

/// The supply path chosen for a node that can be fed around a loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedPath {
    pub node: String,
    /// 1-based index among the enumerated paths (shortest first).
    pub alpha: usize,
    pub path: Vec<String>,
}

/// One restored subtree network: a DER and the buses it energizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsnPlan {
    pub der: String,
    pub availability: f64,
    pub energy_kwh: f64,
    /// Buses in natural id order, the DER bus included.
    pub nodes: Vec<String>,
    /// Closed lines as (from, to) in feeder orientation.
    pub edges: Vec<(String, String)>,
    pub critical_loads: Vec<String>,
    pub selected_paths: Vec<SelectedPath>,
    pub served_p_kw: f64,
    pub served_q_kvar: f64,
    /// Hours the reserve lasts; `None` when no load is served.
    pub t_hours: Option<f64>,
    pub u_r: f64,
}

impl RsnPlan {
    /// Buses from the DER to `node` along the closed lines.
    pub fn supply_path(&self, node: &str) -> Option<Vec<String>> {
        let mut adjacent: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (a, b) in &self.edges {
            adjacent.entry(a).or_default().push(b);
            adjacent.entry(b).or_default().push(a);
        }
        let mut parent: BTreeMap<&str, &str> = BTreeMap::new();
        let mut queue = VecDeque::from([self.der.as_str()]);
        let mut seen = BTreeSet::from([self.der.as_str()]);
        while let Some(u) = queue.pop_front() {
            for &w in adjacent.get(u).into_iter().flatten() {
                if seen.insert(w) {
                    parent.insert(w, u);
                    queue.push_back(w);
                }
            }
        }
        if !seen.contains(node) {
            return None;
        }
        let mut path = vec![node.to_string()];
        let mut at = node;
        while let Some(&p) = parent.get(at) {
            path.push(p.to_string());
            at = p;
        }
        path.reverse();
        Some(path)
    }

    /// Energized line count `l_k`.
    pub fn line_count(&self) -> usize {
        self.edges.len()
    }
}

/// A complete restoration plan with its aggregate metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestorationPlan {
    pub rsns: Vec<RsnPlan>,
    pub picked_critical_loads: usize,
    pub unserved_critical_loads: Vec<String>,
    pub u_r: f64,
    pub u_rc: f64,
    pub t_net: Option<f64>,
    pub objective: f64,
}

impl RestorationPlan {
    pub fn rsn(&self, der: &str) -> Option<&RsnPlan> {
        self.rsns.iter().find(|r| r.der == der)
    }
}

/// Reads the restored networks off an integral solution.
pub fn extract_plan(
    model: &RestorationModel,
    solution: &MilpSolution,
    graph: &FeederGraph,
) -> Result<RestorationPlan, PlanError> {
    let milp = &model.milp;
    let x = &solution.values;
    if x.len() != milp.num_variables() {
        return Err(PlanError::Mismatch {
            expected: milp.num_variables(),
            found: x.len(),
        });
    }
    for j in milp.binaries() {
        if (x[j] - x[j].round()).abs() > 1e-6 {
            return Err(PlanError::Fractional {
                var: milp.variables[j].name.clone(),
                value: x[j],
            });
        }
    }
    let on = |j: usize| x[j] > 0.5;

    let mut owner: Vec<Option<usize>> = vec![None; graph.node_count()];
    for (i, slot) in owner.iter_mut().enumerate() {
        for k in 0..graph.der_count() {
            if on(model.assignment(i, k)) {
                if slot.is_some() {
                    return Err(PlanError::Overlap {
                        node: graph.node_id(i).to_string(),
                    });
                }
                *slot = Some(k);
            }
        }
    }

    let mut rsns = Vec::with_capacity(graph.der_count());
    let mut picked = 0;
    for (k, der) in graph.ders().iter().enumerate() {
        let o = &model.orientations[k];
        let members: Vec<usize> = graph
            .nodes_in_order()
            .into_iter()
            .filter(|&i| owner[i] == Some(k))
            .collect();
        let mut edges: BTreeSet<usize> = o
            .parent_of
            .iter()
            .filter(|(&c, &p)| owner[c] == Some(k) && owner[p] == Some(k))
            .map(|(&c, &p)| graph.edge_between(c, p).expect("oriented pair is a line"))
            .collect();
        let mut selected = Vec::new();
        for entry in model.catalog.entries.iter().filter(|e| e.der == k) {
            let y = milp
                .var(VariableKind::Path, entry.target, Some(k), Some(entry.alpha))
                .expect("path variable");
            if on(y) {
                edges.insert(entry.last_edge());
                selected.push(SelectedPath {
                    node: graph.node_id(entry.target).to_string(),
                    alpha: entry.alpha,
                    path: entry
                        .nodes
                        .iter()
                        .map(|&n| graph.node_id(n).to_string())
                        .collect(),
                });
            }
        }
        selected.sort_by(|a, b| natural_cmp(&a.node, &b.node).then(a.alpha.cmp(&b.alpha)));
        check_tree(graph, graph.der_node(k), &members, &edges)?;

        let (mut p, mut q) = (0.0, 0.0);
        for &i in &members {
            let (pi, qi) = graph.restoration_demand(i);
            p += pi;
            q += qi;
        }
        let critical_loads: Vec<String> = members
            .iter()
            .filter(|&&i| graph.is_critical(i))
            .map(|&i| graph.node_id(i).to_string())
            .collect();
        picked += critical_loads.len();
        rsns.push(RsnPlan {
            der: der.node.clone(),
            availability: der.availability,
            energy_kwh: der.energy_reserve,
            nodes: members
                .iter()
                .map(|&i| graph.node_id(i).to_string())
                .collect(),
            edges: edges
                .iter()
                .map(|&e| {
                    let edge = &graph.edges()[e];
                    (edge.from.clone(), edge.to.clone())
                })
                .collect(),
            critical_loads,
            selected_paths: selected,
            served_p_kw: p,
            served_q_kvar: q,
            t_hours: (p > 0.0).then(|| der.energy_reserve / p),
            u_r: (1.0 - der.availability) * members.len() as f64,
        });
    }

    let unserved = graph
        .critical_nodes()
        .into_iter()
        .filter(|&i| owner[i].is_none())
        .map(|i| graph.node_id(i).to_string())
        .collect();
    let u_r: f64 = rsns.iter().map(|r| r.u_r).sum();
    let reward = (graph.der_count() * graph.node_count()) as f64;
    Ok(RestorationPlan {
        rsns,
        picked_critical_loads: picked,
        unserved_critical_loads: unserved,
        u_r,
        u_rc: u_r - reward * picked as f64,
        t_net: compute_t_net(graph).ok(),
        objective: solution.objective,
    })
}

fn check_tree(
    graph: &FeederGraph,
    root: usize,
    members: &[usize],
    edges: &BTreeSet<usize>,
) -> Result<(), PlanError> {
    let fail = |reason: String| PlanError::NotRadial {
        der: graph.node_id(root).to_string(),
        reason,
    };
    if edges.len() + 1 != members.len() {
        return Err(fail(format!(
            "{} buses but {} closed lines",
            members.len(),
            edges.len()
        )));
    }
    let inside: BTreeSet<usize> = members.iter().copied().collect();
    let mut seen = BTreeSet::from([root]);
    let mut stack = vec![root];
    while let Some(u) = stack.pop() {
        for &e in edges {
            let (a, b) = graph.edge_ends(e);
            let w = if a == u {
                b
            } else if b == u {
                a
            } else {
                continue;
            };
            if inside.contains(&w) && seen.insert(w) {
                stack.push(w);
            }
        }
    }
    if seen.len() != members.len() {
        return Err(fail("closed lines do not connect every bus".into()));
    }
    Ok(())
}
