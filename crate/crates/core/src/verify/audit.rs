use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::feeder::FeederGraph;
use crate::solve::{RestorationPlan, RsnPlan};
use crate::topology::{find_loops, orient};

/// A structural defect found in one restored network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AuditIssue {
    UnknownNode {
        node: String,
    },
    UnknownEdge {
        edge: String,
    },
    /// A closed line with an endpoint outside the network.
    EdgeOutsideNetwork {
        edge: String,
    },
    FaultedEdgeEnergized {
        edge: String,
    },
    MissingDer,
    ForeignDer {
        der: String,
    },
    /// More closed lines than a tree allows.
    Cycle {
        nodes: usize,
        edges: usize,
    },
    Disconnected {
        unreached: Vec<String>,
    },
    /// A line without a switch has exactly one endpoint in the network.
    CouplingBroken {
        edge: String,
    },
    SharedNode {
        node: String,
    },
    /// A loop node must have exactly one selected supply path.
    PathSelection {
        node: String,
        selected: usize,
    },
    PathNotEnergized {
        node: String,
    },
}

impl fmt::Display for AuditIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UnknownNode { node } => write!(f, "unknown node {node}"),
            Self::UnknownEdge { edge } => write!(f, "unknown line {edge}"),
            Self::EdgeOutsideNetwork { edge } => write!(f, "closed line {edge} leaves the network"),
            Self::FaultedEdgeEnergized { edge } => write!(f, "faulted line {edge} is energized"),
            Self::MissingDer => write!(f, "DER bus is not in its own network"),
            Self::ForeignDer { der } => write!(f, "network contains the DER at {der}"),
            Self::Cycle { nodes, edges } => {
                write!(f, "cycle: {edges} closed lines for {nodes} buses")
            }
            Self::Disconnected { unreached } => {
                write!(f, "buses {} are not connected", unreached.join(", "))
            }
            Self::CouplingBroken { edge } => {
                write!(f, "line {edge} has no switch but only one end is energized")
            }
            Self::SharedNode { node } => write!(f, "bus {node} belongs to more than one network"),
            Self::PathSelection { node, selected } => {
                write!(f, "loop bus {node} has {selected} selected supply paths")
            }
            Self::PathNotEnergized { node } => {
                write!(f, "selected path to {node} is not fully closed")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RsnAudit {
    pub der: String,
    pub radial_ok: bool,
    pub issues: Vec<AuditIssue>,
}

/// Checks every network of `plan` against the feeder: connected, a tree,
/// exactly its own DER, no faulted line closed, switchless lines respected,
/// one selected path per loop bus, and no bus shared between networks.
pub fn audit_radiality(plan: &RestorationPlan, graph: &FeederGraph) -> Vec<RsnAudit> {
    let mut owners: BTreeMap<&str, usize> = BTreeMap::new();
    for rsn in &plan.rsns {
        for n in &rsn.nodes {
            *owners.entry(n.as_str()).or_default() += 1;
        }
    }
    let loops = find_loops(graph);
    plan.rsns
        .iter()
        .map(|rsn| {
            let mut issues = audit_one(rsn, graph, &loops);
            for n in &rsn.nodes {
                if owners[n.as_str()] > 1 {
                    issues.push(AuditIssue::SharedNode { node: n.clone() });
                }
            }
            RsnAudit {
                der: rsn.der.clone(),
                radial_ok: issues.is_empty(),
                issues,
            }
        })
        .collect()
}

fn audit_one(
    rsn: &RsnPlan,
    graph: &FeederGraph,
    loops: &crate::topology::LoopSet,
) -> Vec<AuditIssue> {
    let mut issues = Vec::new();
    let mut members = BTreeSet::new();
    for n in &rsn.nodes {
        match graph.node_index(n) {
            Some(i) => {
                members.insert(i);
            }
            None => issues.push(AuditIssue::UnknownNode { node: n.clone() }),
        }
    }
    let der_ix = graph.node_index(&rsn.der);
    match der_ix {
        Some(i) if members.contains(&i) => {}
        _ => issues.push(AuditIssue::MissingDer),
    }
    for &i in &members {
        if graph.der_at(i).is_some() && Some(i) != der_ix {
            issues.push(AuditIssue::ForeignDer {
                der: graph.node_id(i).to_string(),
            });
        }
    }

    let mut closed = BTreeSet::new();
    for (a, b) in &rsn.edges {
        let label = format!("{a}-{b}");
        let Some(e) = graph.find_edge(&label) else {
            issues.push(AuditIssue::UnknownEdge { edge: label });
            continue;
        };
        let (x, y) = graph.edge_ends(e);
        if !members.contains(&x) || !members.contains(&y) {
            issues.push(AuditIssue::EdgeOutsideNetwork {
                edge: label.clone(),
            });
        }
        if graph.edges()[e].faulted {
            issues.push(AuditIssue::FaultedEdgeEnergized { edge: label });
        }
        closed.insert(e);
    }

    if closed.len() + 1 > members.len() {
        issues.push(AuditIssue::Cycle {
            nodes: members.len(),
            edges: closed.len(),
        });
    }
    if let Some(root) = der_ix.filter(|i| members.contains(i)) {
        let mut seen = BTreeSet::from([root]);
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            for &(w, e) in graph.neighbors(u) {
                if closed.contains(&e) && members.contains(&w) && seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        let unreached: Vec<String> = members
            .iter()
            .filter(|i| !seen.contains(i))
            .map(|&i| graph.node_id(i).to_string())
            .collect();
        if !unreached.is_empty() {
            issues.push(AuditIssue::Disconnected { unreached });
        }
    }

    for (e, edge) in graph.edges().iter().enumerate() {
        if edge.switchable || edge.faulted || edge.normally_open {
            continue;
        }
        let (a, b) = graph.edge_ends(e);
        if members.contains(&a) != members.contains(&b) {
            issues.push(AuditIssue::CouplingBroken { edge: edge.label() });
        }
    }

    if let Some(k) = der_ix.and_then(|i| graph.der_at(i)) {
        if let Ok(o) = orient(graph, k, loops) {
            for &j in o.path_handled.iter().filter(|j| members.contains(j)) {
                let id = graph.node_id(j);
                let chosen: Vec<_> = rsn.selected_paths.iter().filter(|p| p.node == id).collect();
                if chosen.len() != 1 {
                    issues.push(AuditIssue::PathSelection {
                        node: id.to_string(),
                        selected: chosen.len(),
                    });
                    continue;
                }
                let energized = chosen[0].path.windows(2).all(|w| {
                    graph
                        .find_edge(&format!("{}-{}", w[0], w[1]))
                        .is_some_and(|e| closed.contains(&e))
                });
                if !energized {
                    issues.push(AuditIssue::PathNotEnergized {
                        node: id.to_string(),
                    });
                }
            }
        }
    }
    issues
}
