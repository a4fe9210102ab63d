//! Loop detection, per-DER orientation and alternate-path enumeration.
//!
//! A node reached from a DER through a unique last line is *oriented*: its
//! parent is fixed no matter how the rest of the island is switched. Nodes on
//! a cycle that can be fed from two or more neighbours are *path-handled*:
//! the optimizer picks one of their enumerated supply paths.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet, VecDeque};

use thiserror::Error;

use crate::feeder::FeederGraph;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("DER at node \"{0}\" is isolated: no live line leaves it")]
    DerIsolated(String),
}

/// One cluster of overlapping cycles.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LoopCluster {
    pub nodes: BTreeSet<usize>,
    pub edges: BTreeSet<usize>,
}

/// Cycles of the live graph (faulted lines removed, ties included), merged
/// into connected clusters.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LoopSet {
    pub clusters: Vec<LoopCluster>,
}

impl LoopSet {
    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn loop_nodes(&self) -> BTreeSet<usize> {
        self.clusters
            .iter()
            .flat_map(|c| c.nodes.iter().copied())
            .collect()
    }

    pub fn loop_edges(&self) -> BTreeSet<usize> {
        self.clusters
            .iter()
            .flat_map(|c| c.edges.iter().copied())
            .collect()
    }

    pub fn contains_node(&self, ix: usize) -> bool {
        self.clusters.iter().any(|c| c.nodes.contains(&ix))
    }

    pub fn contains_edge(&self, e: usize) -> bool {
        self.clusters.iter().any(|c| c.edges.contains(&e))
    }
}

/// Bridges of the live graph, by iterative Tarjan low-link.
fn live_bridges(graph: &FeederGraph) -> Vec<bool> {
    let n = graph.node_count();
    let mut is_bridge = vec![false; graph.edge_count()];
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut timer = 0;
    for start in 0..n {
        if disc[start] != usize::MAX {
            continue;
        }
        // (node, edge used to enter, next neighbour cursor)
        let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(start, None, 0)];
        disc[start] = timer;
        low[start] = timer;
        timer += 1;
        while let Some(&mut (u, via, ref mut cursor)) = stack.last_mut() {
            let adj = graph.neighbors(u);
            if *cursor < adj.len() {
                let (w, e) = adj[*cursor];
                *cursor += 1;
                if graph.edges()[e].faulted || Some(e) == via {
                    continue;
                }
                if disc[w] == usize::MAX {
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    stack.push((w, Some(e), 0));
                } else {
                    low[u] = low[u].min(disc[w]);
                }
            } else {
                stack.pop();
                if let (Some(e), Some(&(parent, _, _))) = (via, stack.last()) {
                    low[parent] = low[parent].min(low[u]);
                    if low[u] > disc[parent] {
                        is_bridge[e] = true;
                    }
                }
            }
        }
    }
    is_bridge
}

/// Finds every live line that lies on a cycle and groups them into clusters.
pub fn find_loops(graph: &FeederGraph) -> LoopSet {
    let bridges = live_bridges(graph);
    let cyclic: Vec<usize> = (0..graph.edge_count())
        .filter(|&e| !graph.edges()[e].faulted && !bridges[e])
        .collect();
    if cyclic.is_empty() {
        return LoopSet::default();
    }
    // union-find over nodes joined by cyclic edges
    let mut parent: Vec<usize> = (0..graph.node_count()).collect();
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &e in &cyclic {
        let (a, b) = graph.edge_ends(e);
        let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    let mut by_root: BTreeMap<usize, LoopCluster> = BTreeMap::new();
    for &e in &cyclic {
        let (a, b) = graph.edge_ends(e);
        let r = root(&mut parent, a);
        let cluster = by_root.entry(r).or_default();
        cluster.edges.insert(e);
        cluster.nodes.insert(a);
        cluster.nodes.insert(b);
    }
    let mut clusters: Vec<LoopCluster> = by_root.into_values().collect();
    clusters.sort_by_key(|c| c.nodes.iter().map(|&n| graph.rank(n)).min());
    LoopSet { clusters }
}

/// Supply structure of the island around one DER.
#[derive(Debug, Clone, PartialEq)]
pub struct Orientation {
    pub der: usize,
    pub root: usize,
    /// Unique parent of every oriented node (root excluded).
    pub parent_of: BTreeMap<usize, usize>,
    /// Oriented children of each node.
    pub children_of: BTreeMap<usize, Vec<usize>>,
    /// Reachable nodes with more than one possible parent.
    pub path_handled: BTreeSet<usize>,
    reachable: Vec<bool>,
}

impl Orientation {
    /// Orientation of a DER with no live lines: the island is its own node.
    pub fn singleton(graph: &FeederGraph, der: usize) -> Self {
        let root = graph.der_node(der);
        let mut reachable = vec![false; graph.node_count()];
        reachable[root] = true;
        Self {
            der,
            root,
            parent_of: BTreeMap::new(),
            children_of: BTreeMap::new(),
            path_handled: BTreeSet::new(),
            reachable,
        }
    }

    pub fn is_reachable(&self, ix: usize) -> bool {
        self.reachable[ix]
    }

    pub fn reachable_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.reachable
            .iter()
            .enumerate()
            .filter_map(|(i, &r)| r.then_some(i))
    }

    pub fn is_path_handled(&self, ix: usize) -> bool {
        self.path_handled.contains(&ix)
    }
}

/// Orients the live island containing DER `der`.
pub fn orient(
    graph: &FeederGraph,
    der: usize,
    loops: &LoopSet,
) -> Result<Orientation, TopologyError> {
    let root = graph.der_node(der);
    if graph.live_neighbors(root).next().is_none() {
        return Err(TopologyError::DerIsolated(graph.node_id(root).to_string()));
    }
    let reachable = graph.reachable_from(root);
    let mut bfs_parent = vec![usize::MAX; graph.node_count()];
    let mut queue = VecDeque::from([root]);
    let mut seen = vec![false; graph.node_count()];
    seen[root] = true;
    while let Some(u) = queue.pop_front() {
        for (w, _) in graph.live_neighbors(u) {
            if !seen[w] {
                seen[w] = true;
                bfs_parent[w] = u;
                queue.push_back(w);
            }
        }
    }
    let mut parent_of = BTreeMap::new();
    let mut path_handled = BTreeSet::new();
    for j in (0..graph.node_count()).filter(|&j| reachable[j] && j != root) {
        if !loops.contains_node(j) {
            parent_of.insert(j, bfs_parent[j]);
            continue;
        }
        let candidates = feeding_neighbors(graph, root, j);
        if candidates.len() == 1 {
            parent_of.insert(j, candidates[0]);
        } else {
            path_handled.insert(j);
        }
    }
    let mut children_of: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (&child, &parent) in &parent_of {
        children_of.entry(parent).or_default().push(child);
    }
    for list in children_of.values_mut() {
        list.sort_by_key(|&c| graph.rank(c));
    }
    Ok(Orientation {
        der,
        root,
        parent_of,
        children_of,
        path_handled,
        reachable,
    })
}

/// Neighbours of `j` that can reach `root` without passing through `j`.
fn feeding_neighbors(graph: &FeederGraph, root: usize, j: usize) -> Vec<usize> {
    let mut seen = vec![false; graph.node_count()];
    seen[j] = true;
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for (w, _) in graph.live_neighbors(u) {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    graph
        .live_neighbors(j)
        .filter(|&(w, _)| w == root || (seen[w] && w != j))
        .map(|(w, _)| w)
        .collect()
}

/// Lexicographically smallest (by natural id) among the fewest-hop paths
/// from `source` to `target`, avoiding banned nodes and edges.
fn shortest_path(
    graph: &FeederGraph,
    source: usize,
    target: usize,
    banned_nodes: &[bool],
    banned_edges: &HashSet<usize>,
) -> Option<Vec<usize>> {
    let n = graph.node_count();
    let allowed = |e: usize, w: usize| !banned_edges.contains(&e) && !banned_nodes[w];
    let mut dist = vec![usize::MAX; n];
    dist[target] = 0;
    let mut queue = VecDeque::from([target]);
    while let Some(u) = queue.pop_front() {
        if u == source {
            break;
        }
        for (w, e) in graph.live_neighbors(u) {
            if dist[w] == usize::MAX && allowed(e, w) {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    if dist[source] == usize::MAX {
        return None;
    }
    let mut path = vec![source];
    let mut u = source;
    while u != target {
        // neighbours are sorted by natural order, so the first match is the
        // lexicographically smallest continuation
        let (w, _) = graph
            .live_neighbors(u)
            .find(|&(w, e)| {
                dist[w] != usize::MAX && dist[w] + 1 == dist[u] && !banned_edges.contains(&e)
            })
            .expect("BFS layers are consistent");
        path.push(w);
        u = w;
    }
    Some(path)
}

/// Hop count, then natural-order node ranks.
type PathKey = (usize, Vec<usize>);

fn path_key(graph: &FeederGraph, path: &[usize]) -> PathKey {
    (path.len(), path.iter().map(|&n| graph.rank(n)).collect())
}

/// Yen's k-shortest loopless paths under hop count, ties broken by the
/// natural-order node sequence. Returns at most `k` simple paths from
/// `source` to `target` over live lines.
pub fn enumerate_paths(
    graph: &FeederGraph,
    source: usize,
    target: usize,
    k: usize,
) -> Vec<Vec<usize>> {
    if k == 0 {
        return Vec::new();
    }
    if source == target {
        return vec![vec![source]];
    }
    let no_nodes = vec![false; graph.node_count()];
    let Some(first) = shortest_path(graph, source, target, &no_nodes, &HashSet::new()) else {
        return Vec::new();
    };
    let mut accepted: Vec<Vec<usize>> = vec![first];
    let mut seen: HashSet<Vec<usize>> = accepted.iter().cloned().collect();
    let mut candidates: BinaryHeap<Reverse<(PathKey, Vec<usize>)>> = BinaryHeap::new();
    while accepted.len() < k {
        let prev = accepted.last().expect("non-empty").clone();
        for spur_at in 0..prev.len() - 1 {
            let spur = prev[spur_at];
            let root_part = &prev[..=spur_at];
            let mut banned_edges = HashSet::new();
            for p in &accepted {
                if p.len() > spur_at + 1 && &p[..=spur_at] == root_part {
                    if let Some(e) = graph.edge_between(p[spur_at], p[spur_at + 1]) {
                        banned_edges.insert(e);
                    }
                }
            }
            let mut banned_nodes = vec![false; graph.node_count()];
            for &n in &root_part[..spur_at] {
                banned_nodes[n] = true;
            }
            if let Some(tail) = shortest_path(graph, spur, target, &banned_nodes, &banned_edges) {
                let mut full = root_part[..spur_at].to_vec();
                full.extend(tail);
                if seen.insert(full.clone()) {
                    candidates.push(Reverse((path_key(graph, &full), full)));
                }
            }
        }
        match candidates.pop() {
            Some(Reverse((_, path))) => accepted.push(path),
            None => break,
        }
    }
    accepted
}

/// One enumerated supply path to a path-handled node.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub der: usize,
    pub target: usize,
    /// 1-based path index within its (DER, target) group.
    pub alpha: usize,
    /// Full node sequence from the DER node to the target.
    pub nodes: Vec<usize>,
    /// Lines along the path, in order.
    pub edges: Vec<usize>,
}

impl CatalogEntry {
    /// Nodes that must be energized to feed the target along this path.
    pub fn parents(&self) -> &[usize] {
        &self.nodes[..self.nodes.len() - 1]
    }

    pub fn n_parents(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Node feeding the target on this path.
    pub fn predecessor(&self) -> usize {
        self.nodes[self.nodes.len() - 2]
    }

    /// Last line of the path (predecessor to target).
    pub fn last_edge(&self) -> usize {
        *self
            .edges
            .last()
            .expect("paths to path-handled nodes have edges")
    }
}

/// Reported when more than `K` paths exist for a (DER, node) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationNotice {
    pub der: usize,
    pub target: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PathCatalog {
    pub entries: Vec<CatalogEntry>,
    groups: BTreeMap<(usize, usize), (usize, usize)>,
}

impl PathCatalog {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Paths for `(der, target)` in enumeration order.
    pub fn paths_for(&self, der: usize, target: usize) -> &[CatalogEntry] {
        match self.groups.get(&(der, target)) {
            Some(&(start, end)) => &self.entries[start..end],
            None => &[],
        }
    }

    /// `(der, target)` pairs with at least one entry.
    pub fn targets(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.groups.keys().copied()
    }
}

/// Enumerates up to `max_paths` supply paths for every path-handled node of
/// every orientation.
pub fn build_path_catalog(
    graph: &FeederGraph,
    orientations: &[Orientation],
    max_paths: usize,
) -> (PathCatalog, Vec<TruncationNotice>) {
    let mut catalog = PathCatalog::default();
    let mut notices = Vec::new();
    for o in orientations {
        let mut targets: Vec<usize> = o.path_handled.iter().copied().collect();
        targets.sort_by_key(|&t| graph.rank(t));
        for target in targets {
            let mut paths = enumerate_paths(graph, o.root, target, max_paths + 1);
            if paths.len() > max_paths {
                paths.truncate(max_paths);
                notices.push(TruncationNotice {
                    der: o.der,
                    target,
                    kept: max_paths,
                });
            }
            let start = catalog.entries.len();
            for (a, nodes) in paths.into_iter().enumerate() {
                let edges = nodes
                    .windows(2)
                    .map(|w| graph.edge_between(w[0], w[1]).expect("path follows lines"))
                    .collect();
                catalog.entries.push(CatalogEntry {
                    der: o.der,
                    target,
                    alpha: a + 1,
                    nodes,
                    edges,
                });
            }
            catalog
                .groups
                .insert((o.der, target), (start, catalog.entries.len()));
        }
    }
    (catalog, notices)
}

/// Orients every DER; isolated DERs get a singleton orientation.
pub fn orient_all(graph: &FeederGraph, loops: &LoopSet) -> Vec<Orientation> {
    (0..graph.der_count())
        .map(|k| orient(graph, k, loops).unwrap_or_else(|_| Orientation::singleton(graph, k)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{apply_scenario, FeederGraph, ScenarioConfig};
    use crate::fixtures;

    fn ids(g: &FeederGraph, nodes: &[usize]) -> Vec<String> {
        nodes.iter().map(|&n| g.node_id(n).to_string()).collect()
    }

    fn ix(g: &FeederGraph, id: &str) -> usize {
        g.node_index(id).unwrap()
    }

    fn faulted(g: &FeederGraph, edges: &[&str]) -> FeederGraph {
        let scenario = ScenarioConfig {
            faulted_edges: edges.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        };
        apply_scenario(g, &scenario).unwrap()
    }

    /// Independent oracle: a live edge lies on a cycle iff its endpoints stay
    /// connected once it is removed.
    fn cycle_edges_by_removal(g: &FeederGraph) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for e in 0..g.edge_count() {
            if g.edges()[e].faulted {
                continue;
            }
            let (a, b) = g.edge_ends(e);
            let mut seen = vec![false; g.node_count()];
            let mut stack = vec![a];
            seen[a] = true;
            while let Some(u) = stack.pop() {
                for (w, f) in g.live_neighbors(u) {
                    if f != e && !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            if seen[b] {
                out.insert(e);
            }
        }
        out
    }

    fn edge_labels(g: &FeederGraph, edges: &BTreeSet<usize>) -> BTreeSet<String> {
        edges.iter().map(|&e| g.edges()[e].label()).collect()
    }

    #[test]
    fn fx8_loop_matches_removal_oracle() {
        let g = fixtures::fx8();
        let loops = find_loops(&g);
        assert_eq!(loops.loop_edges(), cycle_edges_by_removal(&g));
        let expected: BTreeSet<String> = ["2-3", "3-4", "2-5", "5-6", "6-8", "8-4"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(edge_labels(&g, &loops.loop_edges()), expected);
        assert_eq!(
            ids(&g, &loops.loop_nodes().into_iter().collect::<Vec<_>>()),
            ["2", "3", "4", "5", "6", "8"]
        );
    }

    #[test]
    fn tree_variant_has_no_loops() {
        let g = fixtures::fx8_without_tie();
        assert!(find_loops(&g).is_empty());
    }

    #[test]
    fn fault_on_loop_edge_opens_the_loop() {
        let g = faulted(&fixtures::fx8(), &["3-4"]);
        assert!(find_loops(&g).is_empty());
    }

    #[test]
    fn two_disjoint_loops_are_separate_clusters() {
        let g = fixtures::two_loop_feeder();
        let loops = find_loops(&g);
        assert_eq!(loops.loop_edges(), cycle_edges_by_removal(&g));
        assert_eq!(loops.clusters.len(), 2);
        assert!(loops.clusters[0]
            .nodes
            .is_disjoint(&loops.clusters[1].nodes));
    }

    #[test]
    fn fx8_orientation() {
        let g = fixtures::fx8();
        let o = orient(&g, 0, &find_loops(&g)).unwrap();
        assert_eq!(o.parent_of[&ix(&g, "2")], ix(&g, "1"));
        assert_eq!(o.parent_of[&ix(&g, "7")], ix(&g, "5"));
        assert_eq!(o.parent_of.len(), 2);
        let handled: Vec<String> = ids(&g, &o.path_handled.iter().copied().collect::<Vec<_>>());
        assert_eq!(handled, ["3", "4", "5", "6", "8"]);
    }

    #[test]
    fn two_node_orientation() {
        let g = fixtures::two_node();
        let o = orient(&g, 0, &find_loops(&g)).unwrap();
        assert_eq!(o.parent_of.get(&1), Some(&0));
        assert!(o.path_handled.is_empty());
    }

    #[test]
    fn damaged_fx8_drops_unreachable_node() {
        let g = faulted(&fixtures::fx8(), &["2-5"]);
        let o = orient(&g, 0, &find_loops(&g)).unwrap();
        // 5 is still fed around the tie, so 7 keeps its parent
        assert_eq!(o.parent_of.get(&ix(&g, "7")), Some(&ix(&g, "5")));
        let g = faulted(&fixtures::fx8(), &["5-7"]);
        let o = orient(&g, 0, &find_loops(&g)).unwrap();
        assert!(!o.is_reachable(ix(&g, "7")));
        assert!(!o.parent_of.contains_key(&ix(&g, "7")));
    }

    #[test]
    fn isolated_der_is_an_error() {
        let g = faulted(&fixtures::fx8(), &["1-2"]);
        assert!(matches!(
            orient(&g, 0, &find_loops(&g)),
            Err(TopologyError::DerIsolated(_))
        ));
    }

    #[test]
    fn fx8_paths_to_node_4() {
        let g = fixtures::fx8();
        let paths = enumerate_paths(&g, ix(&g, "1"), ix(&g, "4"), 3);
        let as_ids: Vec<Vec<String>> = paths.iter().map(|p| ids(&g, p)).collect();
        assert_eq!(
            as_ids,
            [vec!["1", "2", "3", "4"], vec!["1", "2", "5", "6", "8", "4"]]
        );
    }

    #[test]
    fn fx8_paths_to_node_7() {
        // 7 hangs off loop node 5, so it is reachable both directly and
        // around the tie; only its last line is fixed
        let g = fixtures::fx8();
        let paths = enumerate_paths(&g, ix(&g, "1"), ix(&g, "7"), 3);
        let as_ids: Vec<Vec<String>> = paths.iter().map(|p| ids(&g, p)).collect();
        assert_eq!(
            as_ids,
            [
                vec!["1", "2", "5", "7"],
                vec!["1", "2", "3", "4", "8", "6", "5", "7"]
            ]
        );
        let tree = fixtures::fx8_without_tie();
        assert_eq!(enumerate_paths(&tree, 0, ix(&tree, "7"), 3).len(), 1);
    }

    #[test]
    fn path_to_self_is_trivial() {
        let g = fixtures::fx8();
        assert_eq!(enumerate_paths(&g, 3, 3, 4), vec![vec![3]]);
    }

    #[test]
    fn unreachable_target_has_no_paths() {
        let g = faulted(&fixtures::fx8(), &["5-7"]);
        assert!(enumerate_paths(&g, 0, ix(&g, "7"), 4).is_empty());
    }

    #[test]
    fn fx8_catalog() {
        let g = fixtures::fx8();
        let loops = find_loops(&g);
        let orientations = orient_all(&g, &loops);
        let (catalog, notices) = build_path_catalog(&g, &orientations, 8);
        assert!(notices.is_empty());
        assert_eq!(catalog.len(), 10);
        let four = catalog.paths_for(0, ix(&g, "4"));
        assert_eq!(four.len(), 2);
        assert_eq!(four[0].alpha, 1);
        assert_eq!(ids(&g, four[0].parents()), ["1", "2", "3"]);
        assert_eq!(four[0].n_parents(), 3);
        assert_eq!(four[1].alpha, 2);
        assert_eq!(ids(&g, four[1].parents()), ["1", "2", "5", "6", "8"]);
        assert_eq!(four[1].n_parents(), 5);
    }

    #[test]
    fn damaged_catalog_is_empty_once_loop_opens() {
        let g = faulted(&fixtures::fx8(), &["3-4"]);
        let loops = find_loops(&g);
        let orientations = orient_all(&g, &loops);
        let (catalog, _) = build_path_catalog(&g, &orientations, 8);
        assert!(catalog.is_empty());
        // node 4 is now oriented through the tie
        assert_eq!(orientations[0].parent_of[&ix(&g, "4")], ix(&g, "8"));
    }

    #[test]
    fn tree_feeder_catalog_is_empty() {
        let g = fixtures::fx8_without_tie();
        let loops = find_loops(&g);
        let (catalog, _) = build_path_catalog(&g, &orient_all(&g, &loops), 8);
        assert!(catalog.is_empty());
    }

    #[test]
    fn truncation_is_reported() {
        let g = fixtures::fx8();
        let loops = find_loops(&g);
        let (catalog, notices) = build_path_catalog(&g, &orient_all(&g, &loops), 1);
        assert_eq!(catalog.len(), 5);
        assert_eq!(notices.len(), 5);
        assert!(notices.iter().all(|n| n.kept == 1));
    }
}
