use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::feeder::FeederGraph;
use crate::solve::RsnPlan;

const TOLERANCE: f64 = 1e-8;
const MAX_ITERATIONS: usize = 100;
const COLLAPSE: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerFlowError {
    #[error("network of DER {der} is not a tree rooted at its DER")]
    NotRadial { der: String },
    #[error("unknown bus or line \"{0}\"")]
    Unknown(String),
    #[error("sweep did not converge in {iterations} iterations (last change {last_change:e} pu)")]
    NoConvergence { iterations: usize, last_change: f64 },
    #[error("voltage collapse at bus {node}: {magnitude:.4} pu")]
    Collapse { node: String, magnitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    /// Voltage magnitude per bus id, per unit.
    pub voltages: BTreeMap<String, f64>,
    pub loss_kw: f64,
    /// Active losses as a percentage of served active power (0 when nothing
    /// is served).
    pub loss_percent: f64,
    pub iterations: usize,
}

/// A network as a rooted tree over graph indices, parents before children.
struct Tree {
    order: Vec<usize>,
    parent: Vec<Option<(usize, usize)>>,
}

fn rooted_tree(rsn: &RsnPlan, graph: &FeederGraph) -> Result<Tree, PowerFlowError> {
    let root = graph
        .node_index(&rsn.der)
        .ok_or_else(|| PowerFlowError::Unknown(rsn.der.clone()))?;
    let mut closed = Vec::new();
    for (a, b) in &rsn.edges {
        let label = format!("{a}-{b}");
        closed.push(
            graph
                .find_edge(&label)
                .ok_or(PowerFlowError::Unknown(label))?,
        );
    }
    let not_radial = || PowerFlowError::NotRadial {
        der: rsn.der.clone(),
    };
    if closed.len() + 1 != rsn.nodes.len() {
        return Err(not_radial());
    }
    let mut parent = vec![None; graph.node_count()];
    let mut seen = vec![false; graph.node_count()];
    seen[root] = true;
    let mut order = vec![root];
    let mut head = 0;
    while head < order.len() {
        let u = order[head];
        head += 1;
        for &(w, e) in graph.neighbors(u) {
            if closed.contains(&e) && !seen[w] {
                seen[w] = true;
                parent[w] = Some((u, e));
                order.push(w);
            }
        }
    }
    if order.len() != rsn.nodes.len() {
        return Err(not_radial());
    }
    Ok(Tree { order, parent })
}

/// Exact AC power flow of one radial network by backward/forward sweep
/// with constant-power loads at their restoration demand.
///
/// The backward pass sums complex power toward the DER, adding the I²Z loss
/// of every branch; the forward pass recomputes voltages from `v_ref`.
pub fn sweep_powerflow(
    rsn: &RsnPlan,
    graph: &FeederGraph,
    v_ref: f64,
) -> Result<SweepResult, PowerFlowError> {
    let tree = rooted_tree(rsn, graph)?;
    let n = graph.node_count();
    let load: Vec<Complex64> = (0..n)
        .map(|i| {
            let (p, q) = graph.restoration_demand_pu(i);
            Complex64::new(p, q)
        })
        .collect();
    let impedance = |e: usize| Complex64::new(graph.edges()[e].r, graph.edges()[e].x);

    let mut v = vec![Complex64::new(v_ref, 0.0); n];
    let mut current = vec![Complex64::new(0.0, 0.0); n];
    let mut last_change = f64::INFINITY;
    for iteration in 1..=MAX_ITERATIONS {
        // power entering each bus from its parent line, receiving end
        let mut received = load.clone();
        for &j in tree.order.iter().rev() {
            let Some((p, e)) = tree.parent[j] else {
                continue;
            };
            current[j] = (received[j] / v[j]).conj();
            let sent = received[j] + impedance(e) * current[j].norm_sqr();
            received[p] += sent;
        }
        last_change = 0.0;
        for &j in &tree.order {
            let Some((p, e)) = tree.parent[j] else {
                continue;
            };
            let next = v[p] - impedance(e) * current[j];
            last_change = f64::max(last_change, (next - v[j]).norm());
            v[j] = next;
        }
        if let Some(&j) = tree.order.iter().find(|&&j| v[j].norm() < COLLAPSE) {
            return Err(PowerFlowError::Collapse {
                node: graph.node_id(j).to_string(),
                magnitude: v[j].norm(),
            });
        }
        if last_change < TOLERANCE {
            let loss_pu: f64 = tree
                .order
                .iter()
                .filter_map(|&j| {
                    tree.parent[j].map(|(_, e)| graph.edges()[e].r * current[j].norm_sqr())
                })
                .sum();
            let served_pu: f64 = tree.order.iter().map(|&j| load[j].re).sum();
            let loss_percent = if served_pu > 0.0 {
                100.0 * loss_pu / served_pu
            } else {
                0.0
            };
            return Ok(SweepResult {
                voltages: tree
                    .order
                    .iter()
                    .map(|&j| (graph.node_id(j).to_string(), v[j].norm()))
                    .collect(),
                loss_kw: loss_pu * graph.base_kva(),
                loss_percent,
                iterations: iteration,
            });
        }
    }
    Err(PowerFlowError::NoConvergence {
        iterations: MAX_ITERATIONS,
        last_change,
    })
}

/// Voltages of the lossless linear model used in the optimization:
/// `V_j = V_parent - (r P_j + x Q_j) / v_ref` with downstream sums P, Q.
pub fn lindistflow_voltages(
    rsn: &RsnPlan,
    graph: &FeederGraph,
    v_ref: f64,
) -> Result<BTreeMap<String, f64>, PowerFlowError> {
    let tree = rooted_tree(rsn, graph)?;
    let mut flow: Vec<(f64, f64)> = (0..graph.node_count())
        .map(|i| graph.restoration_demand_pu(i))
        .collect();
    for &j in tree.order.iter().rev() {
        if let Some((p, _)) = tree.parent[j] {
            flow[p].0 += flow[j].0;
            flow[p].1 += flow[j].1;
        }
    }
    let mut v = vec![v_ref; graph.node_count()];
    for &j in &tree.order {
        if let Some((p, e)) = tree.parent[j] {
            let edge = &graph.edges()[e];
            v[j] = v[p] - (edge.r * flow[j].0 + edge.x * flow[j].1) / v_ref;
        }
    }
    Ok(tree
        .order
        .iter()
        .map(|&j| (graph.node_id(j).to_string(), v[j]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{DerUnit, EdgeRecord, NodeRecord};

    fn two_bus(p: f64, q: f64) -> (FeederGraph, RsnPlan) {
        let node = |id: &str, p: f64, q: f64| NodeRecord {
            id: id.into(),
            demand_p: p,
            demand_q: q,
            is_critical: p > 0.0,
        };
        let graph = FeederGraph::new(
            1.0,
            1000.0,
            vec![node("a", 0.0, 0.0), node("b", p * 1000.0, q * 1000.0)],
            vec![EdgeRecord {
                from: "a".into(),
                to: "b".into(),
                r: 0.01,
                x: 0.02,
                switchable: true,
                normally_open: false,
                faulted: false,
                p_success: 1.0,
            }],
            vec![DerUnit {
                node: "a".into(),
                p_max: 500.0,
                q_max: 500.0,
                energy_reserve: 100.0,
                availability: 1.0,
            }],
        )
        .unwrap();
        let rsn = RsnPlan {
            der: "a".into(),
            availability: 1.0,
            energy_kwh: 100.0,
            nodes: vec!["a".into(), "b".into()],
            edges: vec![("a".into(), "b".into())],
            critical_loads: vec![],
            selected_paths: vec![],
            served_p_kw: 0.0,
            served_q_kvar: 0.0,
            t_hours: None,
            u_r: 0.0,
        };
        (graph, rsn)
    }

    #[test]
    fn two_bus_sweep_against_hand_iteration() {
        let (graph, rsn) = two_bus(0.1, 0.05);
        let exact = sweep_powerflow(&rsn, &graph, 1.0).unwrap();
        let linear = lindistflow_voltages(&rsn, &graph, 1.0).unwrap();
        assert!((linear["b"] - 0.998).abs() < 1e-12);
        assert!((exact.voltages["b"] - linear["b"]).abs() < 2e-5);

        // fixed point of V = 1 - z * conj(S / V), iterated by hand
        let z = Complex64::new(0.01, 0.02);
        let s = Complex64::new(0.1, 0.05);
        let mut vb = Complex64::new(1.0, 0.0);
        for _ in 0..50 {
            vb = Complex64::new(1.0, 0.0) - z * (s / vb).conj();
        }
        assert!((exact.voltages["b"] - vb.norm()).abs() < 1e-9);
        let loss = 0.01 * (s / vb).norm_sqr();
        assert!((exact.loss_percent - 100.0 * loss / 0.1).abs() < 1e-6);
        assert!(exact.loss_percent > 0.1 && exact.loss_percent < 0.2);
    }

    #[test]
    fn zero_demand_keeps_reference_voltage() {
        let (graph, rsn) = two_bus(0.0, 0.0);
        let r = sweep_powerflow(&rsn, &graph, 1.02).unwrap();
        assert!(r.voltages.values().all(|&v| v == 1.02));
        assert_eq!(r.loss_percent, 0.0);
    }

    #[test]
    fn overload_collapses() {
        let (graph, rsn) = two_bus(30.0, 15.0);
        assert!(matches!(
            sweep_powerflow(&rsn, &graph, 1.0),
            Err(PowerFlowError::Collapse { .. } | PowerFlowError::NoConvergence { .. })
        ));
    }

    #[test]
    fn cycle_is_rejected() {
        let (graph, mut rsn) = two_bus(0.1, 0.0);
        rsn.edges.push(("b".into(), "a".into()));
        assert!(matches!(
            sweep_powerflow(&rsn, &graph, 1.0),
            Err(PowerFlowError::NotRadial { .. })
        ));
    }
}
