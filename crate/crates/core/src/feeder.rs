//! Feeder data model: nodes, lines, DER units and the damage scenario.
//!
//! Node identifiers are kept as strings (feeder files use labels such as
//! `"152"` or `"135"`), but every algorithm downstream works on dense node
//! indices resolved once when the graph is constructed.

use std::cmp::Ordering;
use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while constructing or parsing a feeder.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeederError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at line {line}, column {column}: {message}")]
    Schema {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate node id \"{0}\"")]
    DuplicateNode(String),
    #[error("edge {edge} references unknown node \"{node}\"")]
    DanglingEndpoint { edge: String, node: String },
    #[error("duplicate edge {0}")]
    DuplicateEdge(String),
    #[error("DER references unknown node \"{0}\"")]
    UnknownDerNode(String),
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("unknown edge reference \"{0}\"")]
    UnknownEdge(String),
}

/// A bus of the feeder with its (expected, constant) demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: String,
    /// kW
    pub demand_p: f64,
    /// kVAr
    pub demand_q: f64,
    pub is_critical: bool,
}

/// A distribution line or switch between two buses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from: String,
    pub to: String,
    /// Per-unit resistance on the feeder base.
    pub r: f64,
    /// Per-unit reactance on the feeder base.
    pub x: f64,
    /// A remote-controlled switch is present on the line.
    pub switchable: bool,
    /// Normally-open tie switch.
    pub normally_open: bool,
    pub faulted: bool,
    /// Probability that the line survives the post-restoration hazard.
    pub p_success: f64,
}

impl EdgeRecord {
    /// `"from-to"` label used in scenario files and constraint names.
    pub fn label(&self) -> String {
        format!("{}-{}", self.from, self.to)
    }
}

/// A distributed energy resource able to island part of the feeder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerUnit {
    pub node: String,
    /// kW
    pub p_max: f64,
    /// kVAr
    pub q_max: f64,
    /// kWh of fuel or storage available at the time of the outage.
    pub energy_reserve: f64,
    pub availability: f64,
}

/// Damage scenario and restoration settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// `"from-to"` references; either orientation matches.
    #[serde(default)]
    pub faulted_edges: Vec<String>,
    #[serde(default)]
    pub epsilon_hours: Option<f64>,
    #[serde(default)]
    pub enforce_time_equity: bool,
    #[serde(default = "default_v_min")]
    pub v_min: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    #[serde(default = "default_v_ref")]
    pub v_ref: f64,
    /// Big-M for flow products (per-unit). `None` selects ten times the
    /// largest DER active-power rating.
    #[serde(default)]
    pub big_m: Option<f64>,
    #[serde(default = "default_max_paths")]
    pub max_paths_per_loop: usize,
    #[serde(default, rename = "p_success_override")]
    pub global_p_success_override: Option<f64>,
}

fn default_v_min() -> f64 {
    0.95
}
fn default_v_max() -> f64 {
    1.05
}
fn default_v_ref() -> f64 {
    1.0
}
fn default_max_paths() -> usize {
    8
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            faulted_edges: Vec::new(),
            epsilon_hours: None,
            enforce_time_equity: false,
            v_min: default_v_min(),
            v_max: default_v_max(),
            v_ref: default_v_ref(),
            big_m: None,
            max_paths_per_loop: default_max_paths(),
            global_p_success_override: None,
        }
    }
}

impl ScenarioConfig {
    pub fn parse(document: &str) -> Result<Self, FeederError> {
        let scenario: ScenarioConfig = serde_json::from_str(document).map_err(json_error)?;
        scenario.check()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Checks the scenario's own invariants (graph-independent).
    pub fn check(&self) -> Result<(), FeederError> {
        let invalid = |field: &str, message: String| FeederError::Invalid {
            field: field.to_string(),
            message,
        };
        if !(self.v_min > 0.0 && self.v_min < self.v_ref && self.v_ref <= self.v_max) {
            return Err(invalid(
                "v_min/v_ref/v_max",
                format!(
                    "need 0 < v_min < v_ref <= v_max, got {} / {} / {}",
                    self.v_min, self.v_ref, self.v_max
                ),
            ));
        }
        if self.enforce_time_equity {
            match self.epsilon_hours {
                Some(eps) if eps > 0.0 && eps.is_finite() => {}
                other => {
                    return Err(invalid(
                        "epsilon_hours",
                        format!("must be positive when time equity is enforced, got {other:?}"),
                    ))
                }
            }
        }
        if let Some(m) = self.big_m {
            if !(m > 0.0 && m.is_finite()) {
                return Err(invalid("big_m", format!("must be positive, got {m}")));
            }
        }
        if self.max_paths_per_loop == 0 {
            return Err(invalid("max_paths_per_loop", "must be at least 1".into()));
        }
        if let Some(p) = self.global_p_success_override {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(
                    "p_success_override",
                    format!("must lie in [0, 1], got {p}"),
                ));
            }
        }
        Ok(())
    }
}

/// The feeder as an undirected graph with resolved node indices.
///
/// Construction checks structural integrity only (unique ids, resolvable
/// endpoints, unique lines, DER nodes present). Value ranges are checked by
/// [`parse_feeder`] and reported by [`validate_feeder`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeederGraph {
    base_kv: f64,
    base_kva: f64,
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
    ders: Vec<DerUnit>,
    lookup: HashMap<String, usize>,
    ends: Vec<(usize, usize)>,
    adjacency: Vec<Vec<(usize, usize)>>,
    edge_index: HashMap<(usize, usize), usize>,
    der_nodes: Vec<usize>,
    rank: Vec<usize>,
}

impl FeederGraph {
    pub fn new(
        base_kv: f64,
        base_kva: f64,
        nodes: Vec<NodeRecord>,
        edges: Vec<EdgeRecord>,
        ders: Vec<DerUnit>,
    ) -> Result<Self, FeederError> {
        let mut lookup = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if lookup.insert(node.id.clone(), i).is_some() {
                return Err(FeederError::DuplicateNode(node.id.clone()));
            }
        }
        let mut ends = Vec::with_capacity(edges.len());
        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut edge_index = HashMap::with_capacity(edges.len());
        for (e, edge) in edges.iter().enumerate() {
            let resolve = |id: &str| {
                lookup
                    .get(id)
                    .copied()
                    .ok_or_else(|| FeederError::DanglingEndpoint {
                        edge: edge.label(),
                        node: id.to_string(),
                    })
            };
            let a = resolve(&edge.from)?;
            let b = resolve(&edge.to)?;
            if a == b {
                return Err(FeederError::Invalid {
                    field: format!("edges[{e}]"),
                    message: format!("self-loop on node \"{}\"", edge.from),
                });
            }
            if edge_index.insert((a.min(b), a.max(b)), e).is_some() {
                return Err(FeederError::DuplicateEdge(edge.label()));
            }
            ends.push((a, b));
            adjacency[a].push((b, e));
            adjacency[b].push((a, e));
        }
        let mut der_nodes = Vec::with_capacity(ders.len());
        for der in &ders {
            let ix = lookup
                .get(&der.node)
                .copied()
                .ok_or_else(|| FeederError::UnknownDerNode(der.node.clone()))?;
            der_nodes.push(ix);
        }
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by(|&a, &b| natural_cmp(&nodes[a].id, &nodes[b].id));
        let mut rank = vec![0; nodes.len()];
        for (r, &ix) in order.iter().enumerate() {
            rank[ix] = r;
        }
        for list in adjacency.iter_mut() {
            list.sort_by_key(|&(n, _)| rank[n]);
        }
        Ok(Self {
            base_kv,
            base_kva,
            nodes,
            edges,
            ders,
            lookup,
            ends,
            adjacency,
            edge_index,
            der_nodes,
            rank,
        })
    }

    pub fn base_kv(&self) -> f64 {
        self.base_kv
    }

    pub fn base_kva(&self) -> f64 {
        self.base_kva
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn ders(&self) -> &[DerUnit] {
        &self.ders
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn der_count(&self) -> usize {
        self.ders.len()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn node_id(&self, ix: usize) -> &str {
        &self.nodes[ix].id
    }

    /// Endpoint indices of edge `e` in file orientation.
    pub fn edge_ends(&self, e: usize) -> (usize, usize) {
        self.ends[e]
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_index.get(&(a.min(b), a.max(b))).copied()
    }

    /// Neighbours of `ix` as `(node, edge)` pairs, sorted by natural id order.
    pub fn neighbors(&self, ix: usize) -> &[(usize, usize)] {
        &self.adjacency[ix]
    }

    /// Neighbours over lines that are not faulted (ties included).
    pub fn live_neighbors(&self, ix: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency[ix]
            .iter()
            .copied()
            .filter(move |&(_, e)| !self.edges[e].faulted)
    }

    pub fn der_node(&self, k: usize) -> usize {
        self.der_nodes[k]
    }

    /// Index of the DER sited at node `ix`, if any.
    pub fn der_at(&self, ix: usize) -> Option<usize> {
        self.der_nodes.iter().position(|&n| n == ix)
    }

    /// Position of node `ix` in natural id order; used for deterministic
    /// tie-breaking.
    pub fn rank(&self, ix: usize) -> usize {
        self.rank[ix]
    }

    /// Node indices sorted by natural id order.
    pub fn nodes_in_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.sort_by_key(|&i| self.rank[i]);
        order
    }

    pub fn is_critical(&self, ix: usize) -> bool {
        self.nodes[ix].is_critical
    }

    pub fn critical_nodes(&self) -> Vec<usize> {
        self.nodes_in_order()
            .into_iter()
            .filter(|&i| self.nodes[i].is_critical)
            .collect()
    }

    /// Demand used during restoration in kW/kVAr. Non-critical loads are
    /// disconnected before pickup and contribute nothing.
    pub fn restoration_demand(&self, ix: usize) -> (f64, f64) {
        let node = &self.nodes[ix];
        if node.is_critical {
            (node.demand_p, node.demand_q)
        } else {
            (0.0, 0.0)
        }
    }

    /// Restoration demand on the per-unit base.
    pub fn restoration_demand_pu(&self, ix: usize) -> (f64, f64) {
        let (p, q) = self.restoration_demand(ix);
        (p / self.base_kva, q / self.base_kva)
    }

    pub fn total_critical_demand(&self) -> f64 {
        self.nodes
            .iter()
            .filter(|n| n.is_critical)
            .map(|n| n.demand_p)
            .sum()
    }

    /// Resolves a `"from-to"` reference in either orientation.
    pub fn find_edge(&self, reference: &str) -> Option<usize> {
        self.edges.iter().position(|e| {
            reference == format!("{}-{}", e.from, e.to)
                || reference == format!("{}-{}", e.to, e.from)
        })
    }

    /// Nodes reachable from `start` over non-faulted lines, as a membership
    /// mask.
    pub fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            for (w, _) in self.live_neighbors(u) {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    pub fn into_parts(self) -> (Vec<NodeRecord>, Vec<EdgeRecord>, Vec<DerUnit>) {
        (self.nodes, self.edges, self.ders)
    }

    pub fn to_json(&self) -> String {
        let file = FeederFile {
            base_kv: self.base_kv,
            base_kva: self.base_kva,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeEntry {
                    id: n.id.clone(),
                    p_kw: n.demand_p,
                    q_kvar: n.demand_q,
                    critical: n.is_critical,
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeEntry {
                    from: e.from.clone(),
                    to: e.to.clone(),
                    r_pu: e.r,
                    x_pu: e.x,
                    switchable: e.switchable,
                    normally_open: e.normally_open,
                    faulted: e.faulted,
                    p_success: e.p_success,
                })
                .collect(),
            ders: self
                .ders
                .iter()
                .map(|d| DerEntry {
                    node: d.node.clone(),
                    p_max_kw: d.p_max,
                    q_max_kvar: d.q_max,
                    energy_kwh: d.energy_reserve,
                    availability: d.availability,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("feeder serializes")
    }
}

/// Orders ids numerically when both parse as integers, otherwise as strings;
/// numeric ids sort before non-numeric ones.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeederFile {
    base_kv: f64,
    base_kva: f64,
    nodes: Vec<NodeEntry>,
    edges: Vec<EdgeEntry>,
    ders: Vec<DerEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeEntry {
    id: String,
    p_kw: f64,
    q_kvar: f64,
    critical: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeEntry {
    from: String,
    to: String,
    r_pu: f64,
    x_pu: f64,
    switchable: bool,
    normally_open: bool,
    faulted: bool,
    p_success: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DerEntry {
    node: String,
    p_max_kw: f64,
    q_max_kvar: f64,
    energy_kwh: f64,
    availability: f64,
}

fn json_error(err: serde_json::Error) -> FeederError {
    use serde_json::error::Category;
    let (line, column) = (err.line(), err.column());
    let message = err.to_string();
    match err.classify() {
        Category::Data => FeederError::Schema {
            line,
            column,
            message,
        },
        _ => FeederError::Syntax {
            line,
            column,
            message,
        },
    }
}

/// Parses a feeder document and enforces every value invariant.
pub fn parse_feeder(document: &str) -> Result<FeederGraph, FeederError> {
    let file: FeederFile = serde_json::from_str(document).map_err(json_error)?;
    let nodes = file
        .nodes
        .into_iter()
        .map(|n| NodeRecord {
            id: n.id,
            demand_p: n.p_kw,
            demand_q: n.q_kvar,
            is_critical: n.critical,
        })
        .collect();
    let edges = file
        .edges
        .into_iter()
        .map(|e| EdgeRecord {
            from: e.from,
            to: e.to,
            r: e.r_pu,
            x: e.x_pu,
            switchable: e.switchable,
            normally_open: e.normally_open,
            faulted: e.faulted,
            p_success: e.p_success,
        })
        .collect();
    let ders = file
        .ders
        .into_iter()
        .map(|d| DerUnit {
            node: d.node,
            p_max: d.p_max_kw,
            q_max: d.q_max_kvar,
            energy_reserve: d.energy_kwh,
            availability: d.availability,
        })
        .collect();
    let graph = FeederGraph::new(file.base_kv, file.base_kva, nodes, edges, ders)?;
    if let Some(first) = range_diagnostics(&graph).into_iter().next() {
        return Err(FeederError::Invalid {
            field: first.subject,
            message: first.message,
        });
    }
    Ok(graph)
}

/// Marks the scenario's faulted lines and applies the survival-probability
/// override. Topology is never changed.
pub fn apply_scenario(
    graph: &FeederGraph,
    scenario: &ScenarioConfig,
) -> Result<FeederGraph, FeederError> {
    let mut edges = graph.edges.clone();
    for reference in &scenario.faulted_edges {
        let e = graph
            .find_edge(reference)
            .ok_or_else(|| FeederError::UnknownEdge(reference.clone()))?;
        edges[e].faulted = true;
    }
    if let Some(p) = scenario.global_p_success_override {
        for edge in &mut edges {
            edge.p_success = p;
        }
    }
    FeederGraph::new(
        graph.base_kv,
        graph.base_kva,
        graph.nodes.clone(),
        edges,
        graph.ders.clone(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    /// A value lies outside its admissible range.
    Range,
    /// More than one DER sits on the same node.
    DuplicateDer,
    /// A DER has no live line to any other node.
    DerIsolated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

fn range_diagnostics(graph: &FeederGraph) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut range = |subject: String, message: String| {
        out.push(Diagnostic {
            kind: DiagnosticKind::Range,
            subject,
            message,
        })
    };
    let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
    if !(graph.base_kv.is_finite() && graph.base_kv > 0.0) {
        range(
            "base_kv".into(),
            format!("must be positive, got {}", graph.base_kv),
        );
    }
    if !(graph.base_kva.is_finite() && graph.base_kva > 0.0) {
        range(
            "base_kva".into(),
            format!("must be positive, got {}", graph.base_kva),
        );
    }
    for (i, n) in graph.nodes.iter().enumerate() {
        if !finite_nonneg(n.demand_p) {
            range(
                format!("nodes[{i}].p_kw"),
                format!("must be >= 0, got {}", n.demand_p),
            );
        }
        if !finite_nonneg(n.demand_q) {
            range(
                format!("nodes[{i}].q_kvar"),
                format!("must be >= 0, got {}", n.demand_q),
            );
        }
    }
    for (i, e) in graph.edges.iter().enumerate() {
        if !finite_nonneg(e.r) {
            range(
                format!("edges[{i}].r_pu"),
                format!("must be >= 0, got {}", e.r),
            );
        }
        if !finite_nonneg(e.x) {
            range(
                format!("edges[{i}].x_pu"),
                format!("must be >= 0, got {}", e.x),
            );
        }
        if !(0.0..=1.0).contains(&e.p_success) {
            range(
                format!("edges[{i}].p_success"),
                format!("must lie in [0, 1], got {}", e.p_success),
            );
        }
    }
    for (i, d) in graph.ders.iter().enumerate() {
        if !(d.p_max.is_finite() && d.p_max > 0.0) {
            range(
                format!("ders[{i}].p_max_kw"),
                format!("must be > 0, got {}", d.p_max),
            );
        }
        if !finite_nonneg(d.q_max) {
            range(
                format!("ders[{i}].q_max_kvar"),
                format!("must be >= 0, got {}", d.q_max),
            );
        }
        if !(d.energy_reserve.is_finite() && d.energy_reserve > 0.0) {
            range(
                format!("ders[{i}].energy_kwh"),
                format!("must be > 0, got {}", d.energy_reserve),
            );
        }
        if !(d.availability > 0.0 && d.availability <= 1.0) {
            range(
                format!("ders[{i}].availability"),
                format!("must lie in (0, 1], got {}", d.availability),
            );
        }
    }
    let mut seen = HashMap::new();
    for (k, &n) in graph.der_nodes.iter().enumerate() {
        if let Some(prev) = seen.insert(n, k) {
            out.push(Diagnostic {
                kind: DiagnosticKind::DuplicateDer,
                subject: format!("ders[{k}]"),
                message: format!("node \"{}\" already hosts ders[{prev}]", graph.node_id(n)),
            });
        }
    }
    out
}

/// Reports every invariant violation plus DERs that cannot reach any other
/// node over live lines. An empty list means the graph is usable.
pub fn validate_feeder(graph: &FeederGraph) -> Vec<Diagnostic> {
    let mut out = range_diagnostics(graph);
    for (k, &n) in graph.der_nodes.iter().enumerate() {
        if graph.live_neighbors(n).next().is_none() {
            out.push(Diagnostic {
                kind: DiagnosticKind::DerIsolated,
                subject: format!("ders[{k}]"),
                message: format!(
                    "DER isolated: node \"{}\" has no live line",
                    graph.node_id(n)
                ),
            });
        }
    }
    out
}
