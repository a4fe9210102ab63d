//! Restoration MILP: node-DER assignment, critical-load pickup and path
//! selection binaries, with a per-DER linearized branch-flow model whose
//! binary-continuous products are eliminated by big-M rows.

use crate::feeder::{FeederGraph, ScenarioConfig};
use crate::topology::{
    build_path_catalog, find_loops, orient_all, CatalogEntry, LoopSet, Orientation, PathCatalog,
    TruncationNotice,
};

use super::{MilpModel, ModelError, Sense, VarTag, VariableKind};

/// Voltage big-M (per-unit).
const VOLTAGE_BIG_M: f64 = 2.0;

/// Topology and settings the formulation is built from.
#[derive(Debug, Clone)]
pub struct ModelContext<'g> {
    pub graph: &'g FeederGraph,
    pub scenario: ScenarioConfig,
    pub loops: LoopSet,
    pub orientations: Vec<Orientation>,
    pub catalog: PathCatalog,
    pub truncations: Vec<TruncationNotice>,
    /// Big-M for flow products (per-unit).
    pub flow_big_m: f64,
    pub voltage_big_m: f64,
}

impl<'g> ModelContext<'g> {
    /// `graph` must already carry the scenario's faults.
    pub fn new(graph: &'g FeederGraph, scenario: &ScenarioConfig) -> Result<Self, ModelError> {
        scenario.check()?;
        if graph.der_count() == 0 {
            return Err(ModelError::NoDers);
        }
        let loops = find_loops(graph);
        let orientations = orient_all(graph, &loops);
        let (catalog, truncations) =
            build_path_catalog(graph, &orientations, scenario.max_paths_per_loop);
        for t in &truncations {
            log::warn!(
                "more than {} supply paths to node {} from DER {}; extra paths dropped",
                t.kept,
                graph.node_id(t.target),
                graph.node_id(graph.der_node(t.der))
            );
        }
        let largest = graph
            .ders()
            .iter()
            .map(|d| d.p_max.max(d.q_max))
            .fold(0.0, f64::max)
            / graph.base_kva();
        let flow_big_m = scenario.big_m.unwrap_or(10.0 * largest);
        Ok(Self {
            graph,
            scenario: scenario.clone(),
            loops,
            orientations,
            catalog,
            truncations,
            flow_big_m,
            voltage_big_m: VOLTAGE_BIG_M.max(scenario.v_max),
        })
    }

    fn der_id(&self, k: usize) -> &str {
        self.graph.node_id(self.graph.der_node(k))
    }

    /// Catalog entries ordered by target node, then DER, then path index.
    fn entries_in_order(&self) -> Vec<&CatalogEntry> {
        let mut entries: Vec<&CatalogEntry> = self.catalog.entries.iter().collect();
        entries.sort_by_key(|e| (self.graph.rank(e.target), e.der, e.alpha));
        entries
    }

    /// (DER, node) pairs whose node is reachable from the DER, in variable order.
    fn reachable_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in self.graph.nodes_in_order() {
            for (k, o) in self.orientations.iter().enumerate() {
                if o.is_reachable(i) {
                    out.push((i, k));
                }
            }
        }
        out
    }
}

/// A built restoration model together with the topology it was built from.
#[derive(Debug, Clone)]
pub struct RestorationModel {
    pub milp: MilpModel,
    pub loops: LoopSet,
    pub orientations: Vec<Orientation>,
    pub catalog: PathCatalog,
    pub truncations: Vec<TruncationNotice>,
}

impl RestorationModel {
    pub fn assignment(&self, node: usize, der: usize) -> usize {
        self.milp
            .var(VariableKind::Assignment, node, Some(der), None)
            .expect("assignment variables exist for every (node, DER)")
    }

    pub fn pickup(&self, node: usize) -> Option<usize> {
        self.milp.var(VariableKind::Pickup, node, None, None)
    }

    pub fn path_choice(&self, entry: &CatalogEntry) -> usize {
        self.milp
            .var(
                VariableKind::Path,
                entry.target,
                Some(entry.der),
                Some(entry.alpha),
            )
            .expect("path variables exist for every catalog entry")
    }
}

/// Pooled restoration time: total DER reserve over total critical demand.
pub fn compute_t_net(graph: &FeederGraph) -> Result<f64, ModelError> {
    if graph.der_count() == 0 {
        return Err(ModelError::NoDers);
    }
    let demand = graph.total_critical_demand();
    if demand <= 0.0 {
        return Err(ModelError::ZeroCriticalDemand);
    }
    let energy: f64 = graph.ders().iter().map(|d| d.energy_reserve).sum();
    Ok(energy / demand)
}

/// Creates every decision variable in canonical order: kind, node, DER, path.
pub fn build_variables(ctx: &ModelContext) -> MilpModel {
    let g = ctx.graph;
    let mut m = MilpModel::new();
    let order = g.nodes_in_order();
    let entries = ctx.entries_in_order();
    let pairs = ctx.reachable_pairs();
    let (mf, mv) = (ctx.flow_big_m, ctx.voltage_big_m);

    for &i in &order {
        for (k, o) in ctx.orientations.iter().enumerate() {
            let upper = if o.is_reachable(i) { 1.0 } else { 0.0 };
            let tag = VarTag {
                kind: VariableKind::Assignment,
                node: i,
                der: Some(k),
                alpha: None,
            };
            m.add_tagged(tag, &[g.node_id(i), ctx.der_id(k)], 0.0, upper);
        }
    }
    for &i in order.iter().filter(|&&i| g.is_critical(i)) {
        let tag = VarTag {
            kind: VariableKind::Pickup,
            node: i,
            der: None,
            alpha: None,
        };
        m.add_tagged(tag, &[g.node_id(i)], 0.0, 1.0);
    }
    let path_upper: Vec<f64> = entries
        .iter()
        .map(|e| if prefixes_available(ctx, e) { 1.0 } else { 0.0 })
        .collect();
    for (e, &upper) in entries.iter().zip(&path_upper) {
        add_path_var(ctx, &mut m, VariableKind::Path, e, 0.0, upper);
    }
    for kind in [VariableKind::FlowP, VariableKind::FlowQ] {
        for &(i, k) in &pairs {
            add_node_var(ctx, &mut m, kind, i, k, 0.0, mf);
        }
    }
    for kind in [VariableKind::PathFlowP, VariableKind::PathFlowQ] {
        for e in &entries {
            add_path_var(ctx, &mut m, kind, e, 0.0, mf);
        }
    }
    for &(i, k) in &pairs {
        add_node_var(ctx, &mut m, VariableKind::Voltage, i, k, 0.0, mv);
    }
    for e in &entries {
        add_path_var(ctx, &mut m, VariableKind::PathVoltage, e, -mv, mv);
    }
    m.t_net = compute_t_net(g).ok();
    m
}

fn add_node_var(
    ctx: &ModelContext,
    m: &mut MilpModel,
    kind: VariableKind,
    i: usize,
    k: usize,
    lo: f64,
    hi: f64,
) -> usize {
    let tag = VarTag {
        kind,
        node: i,
        der: Some(k),
        alpha: None,
    };
    m.add_tagged(tag, &[ctx.graph.node_id(i), ctx.der_id(k)], lo, hi)
}

fn add_path_var(
    ctx: &ModelContext,
    m: &mut MilpModel,
    kind: VariableKind,
    e: &CatalogEntry,
    lo: f64,
    hi: f64,
) -> usize {
    let tag = VarTag {
        kind,
        node: e.target,
        der: Some(e.der),
        alpha: Some(e.alpha),
    };
    let alpha = e.alpha.to_string();
    m.add_tagged(
        tag,
        &[ctx.graph.node_id(e.target), ctx.der_id(e.der), &alpha],
        lo,
        hi,
    )
}

/// The prefix of `entry` up to each intermediate path-handled node must itself
/// be a catalog path, otherwise the selection cannot form a tree.
fn prefixes_available(ctx: &ModelContext, entry: &CatalogEntry) -> bool {
    prefix_links(ctx, entry).iter().all(|link| link.is_some())
}

/// For each intermediate path-handled node on `entry`, the catalog entry
/// matching the path prefix (if enumerated).
fn prefix_links<'c>(ctx: &'c ModelContext, entry: &CatalogEntry) -> Vec<Option<&'c CatalogEntry>> {
    let o = &ctx.orientations[entry.der];
    entry.nodes[1..entry.nodes.len() - 1]
        .iter()
        .enumerate()
        .filter(|(_, n)| o.is_path_handled(**n))
        .map(|(pos, &n)| {
            let prefix = &entry.nodes[..pos + 2];
            ctx.catalog
                .paths_for(entry.der, n)
                .iter()
                .find(|p| p.nodes == prefix)
        })
        .collect()
}

fn path_var(m: &MilpModel, kind: VariableKind, e: &CatalogEntry) -> usize {
    m.var(kind, e.target, Some(e.der), Some(e.alpha))
        .expect("path variable exists")
}

fn node_var(m: &MilpModel, kind: VariableKind, i: usize, k: usize) -> usize {
    m.var(kind, i, Some(k), None).expect("node variable exists")
}

/// DER ownership, pickup coupling, switch/fault coupling, radiality of
/// oriented nodes and single-path selection for path-handled nodes.
pub fn add_connectivity_constraints(m: &mut MilpModel, ctx: &ModelContext) {
    let g = ctx.graph;
    let ders = 0..g.der_count();
    let v = |m: &MilpModel, i: usize, k: usize| node_var_any(m, VariableKind::Assignment, i, k);

    for k in ders.clone() {
        let root = g.der_node(k);
        let row = vec![(v(m, root, k), 1.0)];
        m.add_constraint(format!("eq16:{}", g.node_id(root)), row, Sense::Eq, 1.0);
    }
    for i in g.nodes_in_order() {
        let terms: Vec<(usize, f64)> = ders.clone().map(|k| (v(m, i, k), 1.0)).collect();
        if g.is_critical(i) {
            let s = m
                .var(VariableKind::Pickup, i, None, None)
                .expect("pickup exists");
            let mut terms = terms;
            terms.push((s, -1.0));
            m.add_constraint(format!("eq18:{}", g.node_id(i)), terms, Sense::Eq, 0.0);
        } else {
            m.add_constraint(format!("eq17:{}", g.node_id(i)), terms, Sense::Le, 1.0);
        }
    }
    for (e, edge) in g.edges().iter().enumerate() {
        let (a, b) = g.edge_ends(e);
        if edge.faulted {
            for k in ders.clone() {
                let row = vec![(v(m, a, k), 1.0), (v(m, b, k), 1.0)];
                m.add_constraint(
                    format!("eq19:{}:{}", edge.label(), ctx.der_id(k)),
                    row,
                    Sense::Le,
                    1.0,
                );
            }
        } else if !edge.switchable && !edge.normally_open {
            for k in ders.clone() {
                let row = vec![(v(m, a, k), 1.0), (v(m, b, k), -1.0)];
                m.add_constraint(
                    format!("swi:{}:{}", edge.label(), ctx.der_id(k)),
                    row,
                    Sense::Eq,
                    0.0,
                );
            }
        }
    }
    for (k, o) in ctx.orientations.iter().enumerate() {
        let mut pairs: Vec<(usize, usize)> = o.parent_of.iter().map(|(&c, &p)| (c, p)).collect();
        pairs.sort_by_key(|&(c, _)| g.rank(c));
        for (child, parent) in pairs {
            let row = vec![(v(m, child, k), 1.0), (v(m, parent, k), -1.0)];
            m.add_constraint(
                format!("eq20:{}:{}", g.node_id(child), ctx.der_id(k)),
                row,
                Sense::Le,
                0.0,
            );
        }
    }
    for (k, j) in ordered_targets(ctx) {
        let paths = ctx.catalog.paths_for(k, j);
        let tag = format!("{}:{}", g.node_id(j), ctx.der_id(k));
        for e in paths {
            let y = path_var(m, VariableKind::Path, e);
            let n = e.n_parents() as f64;
            let mut row = vec![(v(m, j, k), 1.0), (y, 1.0)];
            row.extend(e.parents().iter().map(|&i| (v(m, i, k), -1.0 / n)));
            m.add_constraint(format!("eq21:{tag}:{}", e.alpha), row, Sense::Le, 1.0);
        }
        let mut select: Vec<(usize, f64)> = paths
            .iter()
            .map(|e| (path_var(m, VariableKind::Path, e), 1.0))
            .collect();
        select.push((v(m, j, k), -1.0));
        m.add_constraint(format!("eq21sel:{tag}"), select, Sense::Eq, 0.0);
        for e in paths {
            for prefix in prefix_links(ctx, e).into_iter().flatten() {
                let row = vec![
                    (path_var(m, VariableKind::Path, e), 1.0),
                    (path_var(m, VariableKind::Path, prefix), -1.0),
                ];
                m.add_constraint(
                    format!("pfx:{tag}:{}:{}", e.alpha, g.node_id(prefix.target)),
                    row,
                    Sense::Le,
                    0.0,
                );
            }
        }
    }
}

fn node_var_any(m: &MilpModel, kind: VariableKind, i: usize, k: usize) -> usize {
    node_var(m, kind, i, k)
}

/// (DER, path-handled node) pairs ordered by node then DER.
fn ordered_targets(ctx: &ModelContext) -> Vec<(usize, usize)> {
    let mut targets: Vec<(usize, usize)> = ctx.catalog.targets().collect();
    targets.sort_by_key(|&(k, j)| (ctx.graph.rank(j), k));
    targets
}

/// Replaces `z = y * w` by four linear rows, creating `z` as a new variable.
///
/// For `w` in `[0, W]`: `z <= W y`, `z <= w`, `z >= w - W (1 - y)`, `z >= 0`.
/// For sign-indefinite `w` in `[-W, W]`: `-W y <= z <= W y` and
/// `w - W (1 - y) <= z <= w + W (1 - y)`.
pub fn linearize_product(
    m: &mut MilpModel,
    y: usize,
    w: usize,
    z_tag: VarTag,
    z_name: &[&str],
    big_m: f64,
) -> Result<usize, ModelError> {
    let (lo, hi) = (m.variables[w].lower, m.variables[w].upper);
    let name = m.variables[w].name.clone();
    if !lo.is_finite() || !hi.is_finite() {
        return Err(ModelError::UnboundedProduct(name));
    }
    let bound = lo.abs().max(hi.abs());
    if bound > big_m * (1.0 + 1e-12) {
        return Err(ModelError::BigMTooSmall {
            var: name,
            bound,
            big_m,
        });
    }
    let signed = lo < 0.0;
    let z_lo = if signed { -bound } else { 0.0 };
    let z = m.add_tagged(z_tag, z_name, z_lo, bound);
    let label = m.variables[z].name.clone();
    m.add_constraint(
        format!("bigm:{label}:1"),
        vec![(z, 1.0), (y, -bound)],
        Sense::Le,
        0.0,
    );
    if signed {
        m.add_constraint(
            format!("bigm:{label}:2"),
            vec![(z, 1.0), (y, bound)],
            Sense::Ge,
            0.0,
        );
        m.add_constraint(
            format!("bigm:{label}:3"),
            vec![(z, 1.0), (w, -1.0), (y, -bound)],
            Sense::Ge,
            -bound,
        );
        m.add_constraint(
            format!("bigm:{label}:4"),
            vec![(z, 1.0), (w, -1.0), (y, bound)],
            Sense::Le,
            bound,
        );
    } else {
        m.add_constraint(
            format!("bigm:{label}:2"),
            vec![(z, 1.0), (w, -1.0)],
            Sense::Le,
            0.0,
        );
        m.add_constraint(
            format!("bigm:{label}:3"),
            vec![(z, 1.0), (w, -1.0), (y, -bound)],
            Sense::Ge,
            -bound,
        );
        m.add_constraint(format!("bigm:{label}:4"), vec![(z, 1.0)], Sense::Ge, 0.0);
    }
    Ok(z)
}

/// Linearized branch-flow balance and voltage drop for every DER island,
/// with per-path flows for path-handled nodes recombined through the path
/// selection binaries.
pub fn add_powerflow_constraints(m: &mut MilpModel, ctx: &ModelContext) -> Result<(), ModelError> {
    let g = ctx.graph;
    let v0 = ctx.scenario.v_ref;
    let entries = ctx.entries_in_order();

    // aux products first, so that balance rows can reference them
    let products = [
        (
            VariableKind::PathFlowP,
            VariableKind::AuxFlowP,
            ctx.flow_big_m,
        ),
        (
            VariableKind::PathFlowQ,
            VariableKind::AuxFlowQ,
            ctx.flow_big_m,
        ),
        (
            VariableKind::PathVoltage,
            VariableKind::AuxVoltage,
            ctx.voltage_big_m,
        ),
    ];
    for (w_kind, z_kind, big_m) in products {
        for e in &entries {
            let y = path_var(m, VariableKind::Path, e);
            let w = path_var(m, w_kind, e);
            let tag = VarTag {
                kind: z_kind,
                node: e.target,
                der: Some(e.der),
                alpha: Some(e.alpha),
            };
            let alpha = e.alpha.to_string();
            let parts = [g.node_id(e.target), ctx.der_id(e.der), alpha.as_str()];
            linearize_product(m, y, w, tag, &parts, big_m)?;
        }
    }

    for (k, o) in ctx.orientations.iter().enumerate() {
        let der_id = ctx.der_id(k);
        let mut nodes: Vec<usize> = o.reachable_nodes().collect();
        nodes.sort_by_key(|&i| g.rank(i));
        for &i in &nodes {
            let (pd, qd) = g.restoration_demand_pu(i);
            let v_i = node_var(m, VariableKind::Assignment, i, k);
            // flows drawn by the children of i
            let mut child_p = Vec::new();
            let mut child_q = Vec::new();
            if let Some(children) = o.children_of.get(&i) {
                for &c in children {
                    child_p.push((node_var(m, VariableKind::FlowP, c, k), -1.0));
                    child_q.push((node_var(m, VariableKind::FlowQ, c, k), -1.0));
                }
            }
            for e in entries
                .iter()
                .filter(|e| e.der == k && e.predecessor() == i)
            {
                child_p.push((path_var(m, VariableKind::AuxFlowP, e), -1.0));
                child_q.push((path_var(m, VariableKind::AuxFlowQ, e), -1.0));
            }
            let node_tag = format!("{}:{der_id}", g.node_id(i));
            if o.is_path_handled(i) {
                for e in ctx.catalog.paths_for(k, i) {
                    let tag = format!("{node_tag}:{}", e.alpha);
                    let mut row = vec![(path_var(m, VariableKind::PathFlowP, e), 1.0), (v_i, -pd)];
                    row.extend(child_p.iter().copied());
                    m.add_constraint(format!("eq25p:{tag}"), row, Sense::Eq, 0.0);
                    let mut row = vec![(path_var(m, VariableKind::PathFlowQ, e), 1.0), (v_i, -qd)];
                    row.extend(child_q.iter().copied());
                    m.add_constraint(format!("eq25q:{tag}"), row, Sense::Eq, 0.0);

                    let edge = &g.edges()[e.last_edge()];
                    let pred = node_var(m, VariableKind::Voltage, e.predecessor(), k);
                    let row = vec![
                        (path_var(m, VariableKind::PathVoltage, e), 1.0),
                        (pred, -1.0),
                        (path_var(m, VariableKind::PathFlowP, e), edge.r / v0),
                        (path_var(m, VariableKind::PathFlowQ, e), edge.x / v0),
                    ];
                    m.add_constraint(format!("eq26:{tag}"), row, Sense::Eq, 0.0);
                }
                let paths = ctx.catalog.paths_for(k, i);
                for (label, node_kind, aux_kind) in [
                    ("eq27p", VariableKind::FlowP, VariableKind::AuxFlowP),
                    ("eq27q", VariableKind::FlowQ, VariableKind::AuxFlowQ),
                    ("eq27v", VariableKind::Voltage, VariableKind::AuxVoltage),
                ] {
                    let mut row = vec![(node_var(m, node_kind, i, k), 1.0)];
                    row.extend(paths.iter().map(|e| (path_var(m, aux_kind, e), -1.0)));
                    m.add_constraint(format!("{label}:{node_tag}"), row, Sense::Eq, 0.0);
                }
            } else {
                let mut row = vec![(node_var(m, VariableKind::FlowP, i, k), 1.0), (v_i, -pd)];
                row.extend(child_p);
                m.add_constraint(format!("eq22:{node_tag}"), row, Sense::Eq, 0.0);
                let mut row = vec![(node_var(m, VariableKind::FlowQ, i, k), 1.0), (v_i, -qd)];
                row.extend(child_q);
                m.add_constraint(format!("eq23:{node_tag}"), row, Sense::Eq, 0.0);
            }

            if i == o.root {
                let row = vec![(node_var(m, VariableKind::Voltage, i, k), 1.0), (v_i, -v0)];
                m.add_constraint(format!("vref:{node_tag}"), row, Sense::Eq, 0.0);
            } else if let Some(&parent) = o.parent_of.get(&i) {
                let e = g.edge_between(parent, i).expect("oriented pair is a line");
                let edge = &g.edges()[e];
                let mv = ctx.voltage_big_m;
                let drop = [
                    (node_var(m, VariableKind::Voltage, i, k), 1.0),
                    (node_var(m, VariableKind::Voltage, parent, k), -1.0),
                    (node_var(m, VariableKind::FlowP, i, k), edge.r / v0),
                    (node_var(m, VariableKind::FlowQ, i, k), edge.x / v0),
                ];
                // exact when v_i = 1, relaxed by the voltage big-M otherwise
                let mut row = drop.to_vec();
                row.push((v_i, mv));
                m.add_constraint(format!("eq24u:{node_tag}"), row, Sense::Le, mv);
                let mut row = drop.to_vec();
                row.push((v_i, -mv));
                m.add_constraint(format!("eq24l:{node_tag}"), row, Sense::Ge, -mv);
            }
        }
    }
    Ok(())
}

/// Voltage window, DER capacity and (optionally) restoration-time equity.
pub fn add_operational_constraints(
    m: &mut MilpModel,
    ctx: &ModelContext,
) -> Result<(), ModelError> {
    let g = ctx.graph;
    let s = &ctx.scenario;
    let equity = if s.enforce_time_equity {
        let t_net = compute_t_net(g)?;
        let eps = s.epsilon_hours.expect("checked with the scenario");
        if eps >= t_net {
            return Err(ModelError::DegenerateEquity {
                epsilon: eps,
                t_net,
            });
        }
        Some((t_net, eps))
    } else {
        None
    };

    for (i, k) in ctx.reachable_pairs() {
        let tag = format!("{}:{}", g.node_id(i), ctx.der_id(k));
        let volt = node_var(m, VariableKind::Voltage, i, k);
        let v = node_var(m, VariableKind::Assignment, i, k);
        m.add_constraint(
            format!("eq28lo:{tag}"),
            vec![(volt, 1.0), (v, -s.v_min)],
            Sense::Ge,
            0.0,
        );
        m.add_constraint(
            format!("eq28hi:{tag}"),
            vec![(volt, 1.0), (v, -s.v_max)],
            Sense::Le,
            0.0,
        );
    }

    for (k, o) in ctx.orientations.iter().enumerate() {
        let der = &g.ders()[k];
        let der_id = ctx.der_id(k);
        let mut served_p = Vec::new();
        let mut served_q = Vec::new();
        let mut loads = Vec::new();
        for i in g
            .nodes_in_order()
            .into_iter()
            .filter(|&i| o.is_reachable(i))
        {
            let (pd, qd) = g.restoration_demand_pu(i);
            let v = node_var(m, VariableKind::Assignment, i, k);
            if pd != 0.0 {
                served_p.push((v, pd));
            }
            if qd != 0.0 {
                served_q.push((v, qd));
            }
            if g.is_critical(i) {
                loads.push((i, v));
            }
        }
        let base = g.base_kva();
        m.add_constraint(
            format!("eq29p:{der_id}"),
            served_p.clone(),
            Sense::Le,
            der.p_max / base,
        );
        m.add_constraint(
            format!("eq29q:{der_id}"),
            served_q,
            Sense::Le,
            der.q_max / base,
        );

        if let Some((t_net, eps)) = equity {
            let energy = der.energy_reserve / base;
            m.add_constraint(
                format!("eq31hi:{der_id}"),
                served_p.clone(),
                Sense::Le,
                energy / (t_net - eps),
            );
            // the lower band binds only when the DER picks at least one
            // critical load; an idle DER keeps just its own node
            let floor = energy / (t_net + eps);
            for (i, v) in loads {
                let mut row = served_p.clone();
                row.push((v, -floor));
                m.add_constraint(
                    format!("eq31lo:{der_id}:{}", g.node_id(i)),
                    row,
                    Sense::Ge,
                    0.0,
                );
            }
        }
    }
    Ok(())
}

/// `sum_k (1 - a_k) sum_i v_ik - n(M) n(V) sum_i s_i`, minimized.
pub fn build_objective(m: &mut MilpModel, ctx: &ModelContext) {
    let g = ctx.graph;
    let reward = (g.der_count() * g.node_count()) as f64;
    let mut terms = Vec::new();
    for (k, der) in g.ders().iter().enumerate() {
        let weight = 1.0 - der.availability;
        for i in 0..g.node_count() {
            terms.push((node_var(m, VariableKind::Assignment, i, k), weight));
        }
    }
    for i in g.critical_nodes() {
        terms.push((
            m.var(VariableKind::Pickup, i, None, None)
                .expect("pickup exists"),
            -reward,
        ));
    }
    m.set_objective(terms);
}

/// Builds the full restoration MILP. `graph` must already carry the
/// scenario's faults (see [`crate::feeder::apply_scenario`]).
pub fn build_model(
    graph: &FeederGraph,
    scenario: &ScenarioConfig,
) -> Result<RestorationModel, ModelError> {
    let ctx = ModelContext::new(graph, scenario)?;
    let mut milp = build_variables(&ctx);
    add_connectivity_constraints(&mut milp, &ctx);
    add_powerflow_constraints(&mut milp, &ctx)?;
    add_operational_constraints(&mut milp, &ctx)?;
    build_objective(&mut milp, &ctx);
    Ok(RestorationModel {
        milp,
        loops: ctx.loops,
        orientations: ctx.orientations,
        catalog: ctx.catalog,
        truncations: ctx.truncations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::apply_scenario;
    use crate::fixtures;

    fn model_for(g: &FeederGraph, scenario: &ScenarioConfig) -> RestorationModel {
        let applied = apply_scenario(g, scenario).unwrap();
        build_model(&applied, scenario).unwrap()
    }

    fn count(m: &MilpModel, kind: VariableKind) -> usize {
        m.variables
            .iter()
            .filter(|v| v.tag.map(|t| t.kind) == Some(kind))
            .count()
    }

    #[test]
    fn t_net_fx8() {
        assert_eq!(compute_t_net(&fixtures::fx8()).unwrap(), 4.0);
    }

    #[test]
    fn t_net_unit_ratio() {
        let g = fixtures::single_load(100.0, 100.0);
        assert_eq!(compute_t_net(&g).unwrap(), 1.0);
    }

    #[test]
    fn t_net_requires_critical_demand() {
        let (mut nodes, edges, ders) = fixtures::fx8().into_parts();
        for n in &mut nodes {
            n.is_critical = false;
        }
        let g = FeederGraph::new(4.16, 1000.0, nodes, edges, ders).unwrap();
        assert_eq!(compute_t_net(&g), Err(ModelError::ZeroCriticalDemand));
    }

    #[test]
    fn fx8_variable_counts() {
        let model = model_for(&fixtures::fx8(), &ScenarioConfig::default());
        let m = &model.milp;
        assert_eq!(count(m, VariableKind::Assignment), 8);
        assert_eq!(count(m, VariableKind::Pickup), 2);
        assert_eq!(count(m, VariableKind::Path), model.catalog.len());
        assert_eq!(count(m, VariableKind::Path), 10);
        assert_eq!(count(m, VariableKind::AuxFlowP), 10);
        assert_eq!(m.binaries().count(), 20);
    }

    #[test]
    fn two_node_variable_counts() {
        let model = model_for(&fixtures::two_node(), &ScenarioConfig::default());
        assert_eq!(count(&model.milp, VariableKind::Assignment), 2);
        assert_eq!(count(&model.milp, VariableKind::Pickup), 1);
        assert_eq!(count(&model.milp, VariableKind::Path), 0);
    }

    #[test]
    fn fx8_connectivity_family_counts() {
        let model = model_for(&fixtures::fx8(), &ScenarioConfig::default());
        let f = model.milp.family_counts();
        assert_eq!(f["eq16"], 1);
        assert_eq!(f["eq17"], 6);
        assert_eq!(f["eq18"], 2);
        // 5-7 is the one line without a remote switch
        assert_eq!(f["swi"], 1);
        assert!(!f.contains_key("eq19"));
        // oriented pairs: 2 <- 1 and 7 <- 5
        assert_eq!(f["eq20"], 2);
        // five path-handled nodes with two paths each
        assert_eq!(f["eq21"], 10);
        assert_eq!(f["eq21sel"], 5);
    }

    #[test]
    fn all_switchable_no_faults_has_no_coupling_rows() {
        let (nodes, mut edges, ders) = fixtures::fx8().into_parts();
        for e in &mut edges {
            e.switchable = true;
        }
        let g = FeederGraph::new(4.16, 1000.0, nodes, edges, ders).unwrap();
        let f = model_for(&g, &ScenarioConfig::default())
            .milp
            .family_counts();
        assert!(!f.contains_key("swi"));
        assert!(!f.contains_key("eq19"));
    }

    #[test]
    fn faulted_line_gets_one_row_per_der() {
        let scenario = ScenarioConfig {
            faulted_edges: vec!["3-4".into()],
            ..Default::default()
        };
        let model = model_for(&fixtures::fx8(), &scenario);
        let rows: Vec<_> = model.milp.rows_in_family("eq19").collect();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].label.starts_with("eq19:3-4"));
    }

    #[test]
    fn leaf_balance_row() {
        let g = fixtures::fx8();
        let model = model_for(&g, &ScenarioConfig::default());
        let m = &model.milp;
        let seven = g.node_index("7").unwrap();
        let row = m
            .constraints
            .iter()
            .find(|c| c.label == "eq22:7:1")
            .unwrap();
        let p7 = m.var(VariableKind::FlowP, seven, Some(0), None).unwrap();
        let v7 = model.assignment(seven, 0);
        // p_7 = 20 kW * v_7 on a 1000 kVA base, no children
        assert_eq!(row.terms.len(), 2);
        assert!(row.terms.contains(&(p7, 1.0)));
        assert!(row.terms.contains(&(v7, -0.02)));
    }

    #[test]
    fn two_path_node_recombination_uses_eight_product_rows() {
        let g = fixtures::fx8();
        let model = model_for(&g, &ScenarioConfig::default());
        let m = &model.milp;
        let rows = m
            .constraints
            .iter()
            .filter(|c| c.label.starts_with("bigm:zp_4_1_"))
            .count();
        assert_eq!(rows, 8);
        let recombine = m
            .constraints
            .iter()
            .find(|c| c.label == "eq27p:4:1")
            .unwrap();
        assert_eq!(recombine.terms.len(), 3);
    }

    #[test]
    fn fx8_capacity_row_only_sees_critical_loads() {
        let g = fixtures::fx8();
        let model = model_for(&g, &ScenarioConfig::default());
        let row = model
            .milp
            .constraints
            .iter()
            .find(|c| c.label == "eq29p:1")
            .unwrap();
        let v4 = model.assignment(g.node_index("4").unwrap(), 0);
        let v7 = model.assignment(g.node_index("7").unwrap(), 0);
        assert_eq!(
            row.terms,
            vec![(v4, 0.03), (v7, 0.02)]
                .into_iter()
                .collect::<std::collections::BTreeMap<_, _>>()
                .into_iter()
                .collect::<Vec<_>>()
        );
        assert_eq!(row.rhs, 0.1);
        assert_eq!(row.sense, Sense::Le);
    }

    #[test]
    fn fx8_equity_band() {
        let g = fixtures::fx8();
        let scenario = ScenarioConfig {
            enforce_time_equity: true,
            epsilon_hours: Some(1.0),
            ..Default::default()
        };
        let model = model_for(&g, &scenario);
        let m = &model.milp;
        let hi = m
            .constraints
            .iter()
            .find(|c| c.label == "eq31hi:1")
            .unwrap();
        // (30 v4 + 20 v7) / 200 <= 1/3, in per-unit: served <= 0.2/3
        assert!((hi.rhs - 0.2 / 3.0).abs() < 1e-15);
        let lo: Vec<_> = m.rows_in_family("eq31lo").collect();
        assert_eq!(lo.len(), 2);
        let v4 = model.assignment(g.node_index("4").unwrap(), 0);
        let row4 = lo.iter().find(|c| c.label == "eq31lo:1:4").unwrap();
        // served >= 200/5 kWh/h when CL-4 is picked: coefficient of v4 is 0.03 - 0.04
        let c4 = row4.terms.iter().find(|t| t.0 == v4).unwrap().1;
        assert!((c4 - (0.03 - 0.04)).abs() < 1e-15);
    }

    #[test]
    fn degenerate_equity_band_is_rejected() {
        let g = fixtures::fx8();
        let scenario = ScenarioConfig {
            enforce_time_equity: true,
            epsilon_hours: Some(4.0),
            ..Default::default()
        };
        let err = build_model(&g, &scenario).unwrap_err();
        assert_eq!(
            err,
            ModelError::DegenerateEquity {
                epsilon: 4.0,
                t_net: 4.0
            }
        );
    }

    #[test]
    fn fx8_objective() {
        let g = fixtures::fx8();
        let model = model_for(&g, &ScenarioConfig::default());
        let m = &model.milp;
        for i in 0..8 {
            let c = m
                .objective
                .iter()
                .find(|t| t.0 == model.assignment(i, 0))
                .unwrap()
                .1;
            assert!((c - 0.05).abs() < 1e-15);
        }
        for id in ["4", "7"] {
            let s = model.pickup(g.node_index(id).unwrap()).unwrap();
            assert_eq!(m.objective.iter().find(|t| t.0 == s).unwrap().1, -8.0);
        }
        assert_eq!(m.objective.len(), 10);
    }

    #[test]
    fn perfect_availability_leaves_pure_pickup_objective() {
        let (nodes, edges, mut ders) = fixtures::fx8().into_parts();
        ders[0].availability = 1.0;
        let g = FeederGraph::new(4.16, 1000.0, nodes, edges, ders).unwrap();
        let model = model_for(&g, &ScenarioConfig::default());
        assert_eq!(model.milp.objective.len(), 2);
        assert!(model.milp.objective.iter().all(|&(_, c)| c == -8.0));
    }

    #[test]
    fn tree_variant_has_no_path_variables() {
        let model = model_for(&fixtures::fx8_without_tie(), &ScenarioConfig::default());
        for kind in [
            VariableKind::Path,
            VariableKind::PathFlowP,
            VariableKind::PathVoltage,
            VariableKind::AuxFlowP,
        ] {
            assert_eq!(count(&model.milp, kind), 0);
        }
    }

    #[test]
    fn rebuild_is_identical() {
        let a = model_for(&fixtures::fx8(), &ScenarioConfig::default());
        let b = model_for(&fixtures::fx8(), &ScenarioConfig::default());
        assert_eq!(a.milp.canonical_form(), b.milp.canonical_form());
    }

    #[test]
    fn variables_are_in_canonical_order() {
        let model = model_for(&fixtures::fx8(), &ScenarioConfig::default());
        let kinds: Vec<VariableKind> = model
            .milp
            .variables
            .iter()
            .map(|v| v.tag.unwrap().kind)
            .collect();
        let mut sorted = kinds.clone();
        sorted.sort();
        assert_eq!(kinds, sorted);
    }

    #[test]
    fn linearize_requires_bounds() {
        let mut m = MilpModel::new();
        let y = m.add_variable("y", 0.0, 1.0, true);
        let w = m.add_variable("w", 0.0, f64::INFINITY, false);
        let tag = VarTag {
            kind: VariableKind::AuxFlowP,
            node: 0,
            der: Some(0),
            alpha: Some(1),
        };
        assert!(matches!(
            linearize_product(&mut m, y, w, tag, &["0"], 10.0),
            Err(ModelError::UnboundedProduct(_))
        ));
        let w2 = m.add_variable("w2", 0.0, 20.0, false);
        assert!(matches!(
            linearize_product(&mut m, y, w2, tag, &["0"], 10.0),
            Err(ModelError::BigMTooSmall { .. })
        ));
    }

    /// Enumerates the vertices of the 4-row polytope at y in {0, 1} and
    /// w in {0, W/2, W}: the only feasible z is y * w.
    #[test]
    fn linearized_product_is_exact_at_integral_points() {
        for signed in [false, true] {
            let mut m = MilpModel::new();
            let big_w = 3.0;
            let y = m.add_variable("y", 0.0, 1.0, true);
            let lo = if signed { -big_w } else { 0.0 };
            let w = m.add_variable("w", lo, big_w, false);
            let tag = VarTag {
                kind: VariableKind::AuxVoltage,
                node: 0,
                der: Some(0),
                alpha: Some(1),
            };
            let z = linearize_product(&mut m, y, w, tag, &["0"], big_w).unwrap();
            assert_eq!(m.num_constraints(), 4);
            let ws: Vec<f64> = if signed {
                vec![-big_w, -1.5, 0.0, 1.5, big_w]
            } else {
                vec![0.0, 1.5, big_w]
            };
            for yv in [0.0, 1.0] {
                for &wv in &ws {
                    // feasible z interval from the rows
                    let (mut lo_z, mut hi_z) = (m.variables[z].lower, m.variables[z].upper);
                    for row in &m.constraints {
                        let cz = row
                            .terms
                            .iter()
                            .find(|t| t.0 == z)
                            .map(|t| t.1)
                            .unwrap_or(0.0);
                        let rest: f64 = row
                            .terms
                            .iter()
                            .filter(|t| t.0 != z)
                            .map(|&(j, c)| c * if j == y { yv } else { wv })
                            .sum();
                        let bound = (row.rhs - rest) / cz;
                        match (row.sense, cz > 0.0) {
                            (Sense::Le, true) | (Sense::Ge, false) => hi_z = hi_z.min(bound),
                            (Sense::Ge, true) | (Sense::Le, false) => lo_z = lo_z.max(bound),
                            (Sense::Eq, _) => unreachable!(),
                        }
                    }
                    let expected = yv * wv;
                    assert!(
                        (lo_z - expected).abs() < 1e-12 && (hi_z - expected).abs() < 1e-12,
                        "signed={signed} y={yv} w={wv}: z in [{lo_z}, {hi_z}]"
                    );
                }
            }
        }
    }
}
