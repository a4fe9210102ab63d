//! Reference feeders used by tests, benches and the command-line examples.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::feeder::{DerUnit, EdgeRecord, FeederGraph, NodeRecord, ScenarioConfig};
use crate::solve::{RestorationPlan, RsnPlan};

const BASE_KV: f64 = 4.16;
const BASE_KVA: f64 = 1000.0;

fn node(id: &str, p: f64, q: f64, critical: bool) -> NodeRecord {
    NodeRecord {
        id: id.to_string(),
        demand_p: p,
        demand_q: q,
        is_critical: critical,
    }
}

fn line(from: &str, to: &str, r: f64, x: f64) -> EdgeRecord {
    EdgeRecord {
        from: from.to_string(),
        to: to.to_string(),
        r,
        x,
        switchable: true,
        normally_open: false,
        faulted: false,
        p_success: 0.95,
    }
}

fn der(at: &str, p_max: f64, q_max: f64, energy: f64, availability: f64) -> DerUnit {
    DerUnit {
        node: at.to_string(),
        p_max,
        q_max,
        energy_reserve: energy,
        availability,
    }
}

fn build(nodes: Vec<NodeRecord>, edges: Vec<EdgeRecord>, ders: Vec<DerUnit>) -> FeederGraph {
    FeederGraph::new(BASE_KV, BASE_KVA, nodes, edges, ders).expect("fixture is well formed")
}

fn fx8_parts() -> (Vec<NodeRecord>, Vec<EdgeRecord>, Vec<DerUnit>) {
    let nodes = vec![
        node("1", 0.0, 0.0, false),
        node("2", 15.0, 5.0, false),
        node("3", 12.0, 4.0, false),
        node("4", 30.0, 10.0, true),
        node("5", 15.0, 5.0, false),
        node("6", 18.0, 6.0, false),
        node("7", 20.0, 5.0, true),
        node("8", 14.0, 4.0, false),
    ];
    let mut non_switchable = line("5", "7", 0.012, 0.022);
    non_switchable.switchable = false;
    let mut tie = line("8", "4", 0.01, 0.02);
    tie.normally_open = true;
    let edges = vec![
        line("1", "2", 0.008, 0.018),
        line("2", "3", 0.01, 0.02),
        line("3", "4", 0.01, 0.02),
        line("2", "5", 0.009, 0.019),
        line("5", "6", 0.011, 0.021),
        line("6", "8", 0.01, 0.02),
        tie,
        non_switchable,
    ];
    (nodes, edges, vec![der("1", 100.0, 60.0, 200.0, 0.95)])
}

/// Eight-bus feeder with one normally-open tie (8-4) closing a loop over
/// 2-3-4-8-6-5, critical loads at 4 (30 kW) and 7 (20 kW), and a single DER
/// at 1 holding 200 kWh.
pub fn fx8() -> FeederGraph {
    let (n, e, d) = fx8_parts();
    build(n, e, d)
}

/// [`fx8`] without the tie: a plain radial feeder.
pub fn fx8_without_tie() -> FeederGraph {
    let (n, mut e, d) = fx8_parts();
    e.retain(|edge| !edge.normally_open);
    build(n, e, d)
}

/// [`fx8`] with the DER's active-power rating changed.
pub fn fx8_with_p_max(p_max: f64) -> FeederGraph {
    let (n, e, mut d) = fx8_parts();
    d[0].p_max = p_max;
    build(n, e, d)
}

/// One DER bus feeding one critical load.
pub fn two_node() -> FeederGraph {
    build(
        vec![node("1", 0.0, 0.0, false), node("2", 10.0, 2.0, true)],
        vec![line("1", "2", 0.01, 0.02)],
        vec![der("1", 50.0, 20.0, 100.0, 0.95)],
    )
}

/// Two-bus feeder whose DER holds `energy` kWh and whose load draws `p` kW.
pub fn single_load(energy: f64, p: f64) -> FeederGraph {
    build(
        vec![node("1", 0.0, 0.0, false), node("2", p, 0.2 * p, true)],
        vec![line("1", "2", 0.01, 0.02)],
        vec![der("1", 2.0 * p, 2.0 * p, energy, 0.95)],
    )
}

/// Two node-disjoint loops (2-3-4 and 5-6-7) hanging off a DER at 1.
pub fn two_loop_feeder() -> FeederGraph {
    let ids = ["1", "2", "3", "4", "5", "6", "7"];
    let nodes = ids
        .iter()
        .map(|&id| node(id, 10.0, 3.0, id == "4" || id == "7"))
        .collect();
    let edges = [
        ("1", "2"),
        ("2", "3"),
        ("3", "4"),
        ("4", "2"),
        ("1", "5"),
        ("5", "6"),
        ("6", "7"),
        ("7", "5"),
    ]
    .iter()
    .map(|&(a, b)| line(a, b, 0.01, 0.02))
    .collect();
    build(nodes, edges, vec![der("1", 80.0, 40.0, 160.0, 0.95)])
}

/// Two DERs at the ends of a six-bus chain, each welded to its nearest
/// critical load by a line without a switch, so both are always active.
///
/// Pooled restoration time is 3 h. With a one-hour equity band the loads
/// split 60/40 kW; with a band of a few minutes no split exists.
pub fn equity_pair() -> FeederGraph {
    let nodes = vec![
        node("1", 0.0, 0.0, false),
        node("2", 40.0, 10.0, true),
        node("3", 20.0, 5.0, true),
        node("4", 20.0, 5.0, true),
        node("5", 20.0, 5.0, true),
        node("6", 0.0, 0.0, false),
    ];
    let mut edges: Vec<EdgeRecord> = [("1", "2"), ("2", "3"), ("3", "4"), ("4", "5"), ("5", "6")]
        .iter()
        .map(|&(a, b)| line(a, b, 0.008, 0.016))
        .collect();
    edges[0].switchable = false;
    edges[4].switchable = false;
    build(
        nodes,
        edges,
        vec![
            der("1", 80.0, 40.0, 150.0, 0.95),
            der("6", 80.0, 40.0, 150.0, 0.9),
        ],
    )
}

/// Small random feeder with its damage scenario: 8-12 buses, 1-2 DERs,
/// 1-3 critical loads, at most one tie and up to two faulted lines.
pub fn random_feeder(seed: u64) -> (FeederGraph, ScenarioConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(8..=12);
    let ids: Vec<String> = (1..=n).map(|i| i.to_string()).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_ders = rng.gen_range(1..=2);
    let n_cls = rng.gen_range(1..=3);
    let der_at = &order[..n_ders];
    let cl_at = &order[n_ders..n_ders + n_cls];

    let nodes = (0..n)
        .map(|i| {
            if cl_at.contains(&i) {
                let p = rng.gen_range(10..=60) as f64;
                node(&ids[i], p, (0.3 * p).round(), true)
            } else {
                let p = rng.gen_range(5..=20) as f64;
                node(&ids[i], p, (0.3 * p).round(), false)
            }
        })
        .collect();

    let mut edges = Vec::new();
    let mut adjacent = std::collections::HashSet::new();
    for i in 1..n {
        let j = rng.gen_range(0..i);
        let r = rng.gen_range(2..=10) as f64 / 1000.0;
        let mut e = line(&ids[j], &ids[i], r, 2.0 * r);
        e.switchable = rng.gen_bool(0.8);
        e.p_success = [0.9, 0.95, 0.98][rng.gen_range(0..3)];
        edges.push(e);
        adjacent.insert((j, i));
    }
    if rng.gen_bool(0.5) {
        for _ in 0..20 {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            let key = (a.min(b), a.max(b));
            if a != b && !adjacent.contains(&key) {
                let mut tie = line(&ids[key.0], &ids[key.1], 0.01, 0.02);
                tie.normally_open = true;
                edges.push(tie);
                break;
            }
        }
    }
    let n_faults = rng.gen_range(0..=2);
    let mut candidates: Vec<usize> = (0..edges.len()).collect();
    candidates.shuffle(&mut rng);
    let faulted_edges = candidates[..n_faults]
        .iter()
        .map(|&e| edges[e].label())
        .collect();

    let ders = der_at
        .iter()
        .map(|&i| {
            let p_max = rng.gen_range(40..=120) as f64;
            let energy = rng.gen_range(50..=400) as f64;
            let availability = [0.9, 0.92, 0.95, 0.98][rng.gen_range(0..4)];
            der(&ids[i], p_max, (0.6 * p_max).round(), energy, availability)
        })
        .collect();

    let scenario = ScenarioConfig {
        faulted_edges,
        ..Default::default()
    };
    (build(nodes, edges, ders), scenario)
}

const SYNTHETIC_123_LINES: &str = "1-2 1-3 1-7 3-4 3-5 5-6 7-8 8-12 8-9 8-13 9-14 13-34 13-18 14-11 14-10 \
    15-16 15-17 18-19 18-21 19-20 21-22 21-23 23-24 23-25 25-26 25-28 26-27 26-31 27-33 28-29 29-30 \
    30-250 31-32 34-15 35-36 35-40 36-37 36-38 38-39 40-41 40-42 42-43 42-44 44-45 44-47 45-46 47-48 \
    47-49 49-50 50-51 51-151 52-53 53-54 54-55 54-57 55-56 57-58 57-60 58-59 60-61 61-610 60-62 62-63 \
    63-64 64-65 65-66 67-68 67-72 67-97 68-69 69-70 70-71 72-73 72-76 73-74 74-75 76-77 76-86 77-78 \
    78-79 78-80 80-81 81-82 81-84 82-83 84-85 86-87 87-88 87-89 89-90 89-91 91-92 91-93 93-94 93-95 \
    95-96 97-98 98-99 99-100 101-102 101-105 102-103 103-104 105-106 105-108 106-107 108-109 108-300 \
    109-110 110-111 110-112 112-113 113-114 13-152 152-52 18-135 135-35 60-160 160-67 97-197 197-101 149-1";

/// A 123-bus feeder shaped like the IEEE 123-node test system (switch buses
/// 135, 149, 152, 160 and 197 included) with one normally-open tie 54-94,
/// five DERs and eleven critical loads. Line and DER data are synthetic.
pub fn synthetic_123() -> FeederGraph {
    let mut edges: Vec<EdgeRecord> = SYNTHETIC_123_LINES
        .split_whitespace()
        .enumerate()
        .map(|(i, pair)| {
            let (a, b) = pair.split_once('-').expect("pair");
            let r = 0.003 + 0.001 * (i % 4) as f64;
            line(a, b, r, 2.0 * r)
        })
        .collect();
    let mut tie = line("54", "94", 0.004, 0.008);
    tie.normally_open = true;
    edges.push(tie);

    let critical: [(&str, f64, f64); 11] = [
        ("9", 40.0, 20.0),
        ("17", 20.0, 10.0),
        ("27", 40.0, 20.0),
        ("30", 40.0, 20.0),
        ("37", 40.0, 20.0),
        ("46", 20.0, 10.0),
        ("66", 75.0, 35.0),
        ("79", 40.0, 20.0),
        ("87", 40.0, 20.0),
        ("94", 40.0, 20.0),
        ("101", 40.0, 20.0),
    ];
    let mut ids: Vec<&str> = edges
        .iter()
        .flat_map(|e| [e.from.as_str(), e.to.as_str()])
        .collect();
    ids.sort_by(|a, b| crate::feeder::natural_cmp(a, b));
    ids.dedup();
    let nodes = ids
        .iter()
        .map(|&id| match critical.iter().find(|c| c.0 == id) {
            Some(&(_, p, q)) => node(id, p, q, true),
            None => node(id, 20.0, 10.0, false),
        })
        .collect();
    let ders = vec![
        der("4", 120.0, 60.0, 650.0, 0.95),
        der("26", 120.0, 60.0, 500.0, 0.95),
        der("44", 100.0, 50.0, 700.0, 0.95),
        der("60", 150.0, 75.0, 1300.0, 0.95),
        der("86", 160.0, 80.0, 850.0, 0.95),
    ];
    build(nodes, edges, ders)
}

/// Damage scenario for [`synthetic_123`]: lines 13-18 and 52-152 out.
pub fn synthetic_123_scenario() -> ScenarioConfig {
    ScenarioConfig {
        faulted_edges: vec!["13-18".into(), "152-52".into()],
        ..Default::default()
    }
}

/// One published restored subtree network: the DER bus, its availability and
/// the supply path of every critical load it serves.
#[derive(Debug, Clone, PartialEq)]
pub struct PublishedRsn {
    pub der: &'static str,
    pub availability: f64,
    pub paths: Vec<Vec<&'static str>>,
}

impl PublishedRsn {
    /// Buses on the union of the supply paths.
    pub fn nodes(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = self.paths.iter().flatten().copied().collect();
        out.sort_by(|a, b| crate::feeder::natural_cmp(a, b));
        out.dedup();
        out
    }
}

fn rsn(der: &'static str, availability: f64, paths: &[&'static str]) -> PublishedRsn {
    PublishedRsn {
        der,
        availability,
        paths: paths.iter().map(|p| p.split('-').collect()).collect(),
    }
}

/// Turns published paths into a full plan on `graph`, closing every line
/// along the paths. Availabilities come from the published data.
pub fn published_plan(graph: &FeederGraph, rsns: &[PublishedRsn]) -> RestorationPlan {
    let mut out = Vec::new();
    for r in rsns {
        let nodes: Vec<String> = r.nodes().iter().map(|n| n.to_string()).collect();
        let mut edges: Vec<(String, String)> = Vec::new();
        for path in &r.paths {
            for w in path.windows(2) {
                let e = graph
                    .find_edge(&format!("{}-{}", w[0], w[1]))
                    .expect("published line exists");
                let pair = (graph.edges()[e].from.clone(), graph.edges()[e].to.clone());
                if !edges.contains(&pair) {
                    edges.push(pair);
                }
            }
        }
        let index = |n: &String| graph.node_index(n).expect("published bus exists");
        let served = |f: fn((f64, f64)) -> f64| {
            nodes
                .iter()
                .map(|n| f(graph.restoration_demand(index(n))))
                .sum::<f64>()
        };
        let der = &graph.ders()[graph
            .der_at(index(&r.der.to_string()))
            .expect("published DER exists")];
        let served_p = served(|d| d.0);
        let mut rsn = RsnPlan {
            der: r.der.to_string(),
            availability: r.availability,
            energy_kwh: der.energy_reserve,
            critical_loads: nodes
                .iter()
                .filter(|n| graph.is_critical(index(n)))
                .cloned()
                .collect(),
            selected_paths: Vec::new(),
            served_p_kw: served_p,
            served_q_kvar: served(|d| d.1),
            t_hours: (served_p > 0.0).then(|| der.energy_reserve / served_p),
            u_r: (1.0 - r.availability) * nodes.len() as f64,
            nodes,
            edges,
        };
        crate::verify::label_supply_paths(&mut rsn, graph);
        out.push(rsn);
    }
    let picked: usize = out.iter().map(|r| r.critical_loads.len()).sum();
    let u_r: f64 = out.iter().map(|r| r.u_r).sum();
    let u_rc = u_r - (graph.der_count() * graph.node_count()) as f64 * picked as f64;
    RestorationPlan {
        unserved_critical_loads: graph
            .critical_nodes()
            .into_iter()
            .map(|i| graph.node_id(i).to_string())
            .filter(|id| !out.iter().any(|r| r.critical_loads.contains(id)))
            .collect(),
        rsns: out,
        picked_critical_loads: picked,
        u_r,
        u_rc,
        t_net: crate::model::compute_t_net(graph).ok(),
        objective: u_rc,
    }
}

/// Restoration plans reported for the 123-node feeder under minor damage:
/// case 1 (equal availabilities), 2 (unequal) and 3 (unequal, equity band).
pub fn ieee123_minor_damage_plan(case: u8) -> Vec<PublishedRsn> {
    match case {
        1 => vec![
            rsn("4", 0.95, &["4-3-1-7-8-9", "4-3-1-7-8-13-34-15-17"]),
            rsn("26", 0.95, &["26-27", "26-25-28-29-30"]),
            rsn("44", 0.95, &["44-42-40-35-36-37", "44-45-46"]),
            rsn(
                "86",
                0.95,
                &["86-76-77-78-79", "86-87", "86-76-72-67-97-197-101"],
            ),
            rsn("60", 0.95, &["60-62-63-64-65-66", "60-57-54-94"]),
        ],
        2 => vec![
            rsn("4", 0.95, &["4-3-1-7-8-9", "4-3-1-7-8-13-34-15-17"]),
            rsn(
                "26",
                0.95,
                &["26-27", "26-25-28-29-30", "26-25-23-21-18-135-35-36-37"],
            ),
            rsn("44", 0.92, &["44-45-46"]),
            rsn(
                "86",
                0.95,
                &[
                    "86-76-77-78-79",
                    "86-87",
                    "86-87-89-91-93-94",
                    "86-76-72-67-97-197-101",
                ],
            ),
            rsn("60", 0.90, &["60-62-63-64-65-66"]),
        ],
        3 => vec![
            rsn("4", 0.95, &["4-3-1-7-8-9", "4-3-1-7-8-13-34-15-17"]),
            rsn("26", 0.95, &["26-27"]),
            rsn(
                "44",
                0.92,
                &[
                    "44-45-46",
                    "44-42-40-35-36-37",
                    "44-42-40-35-135-18-21-23-25-28-29-30",
                ],
            ),
            rsn("86", 0.95, &["86-76-77-78-79", "86-87"]),
            rsn(
                "60",
                0.90,
                &["60-160-67-97-197-101", "60-62-63-64-65-66", "60-57-54-94"],
            ),
        ],
        _ => panic!("unknown case {case}"),
    }
}

/// Restoration plan reported for the 123-node feeder under major damage.
pub fn ieee123_major_damage_plan() -> Vec<PublishedRsn> {
    vec![
        rsn(
            "4",
            0.95,
            &[
                "4-3-1-7-8-9",
                "4-3-1-7-8-13-34-15-17",
                "4-3-1-7-8-13-152-52-53-54-94",
            ],
        ),
        rsn(
            "26",
            0.95,
            &["26-25-28-29-30", "26-25-23-21-18-135-35-36-37"],
        ),
        rsn("44", 0.92, &["44-45-46"]),
        rsn("86", 0.90, &["86-87"]),
        rsn(
            "60",
            0.95,
            &["60-62-63-64-65-66", "60-160-67-72-76-77-78-79"],
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{apply_scenario, validate_feeder};

    #[test]
    fn fixtures_validate() {
        for g in [
            fx8(),
            fx8_without_tie(),
            two_node(),
            two_loop_feeder(),
            equity_pair(),
            synthetic_123(),
        ] {
            assert!(validate_feeder(&g).is_empty());
        }
    }

    #[test]
    fn synthetic_123_shape() {
        let g = synthetic_123();
        assert_eq!(g.node_count(), 123);
        assert_eq!(g.der_count(), 5);
        assert_eq!(g.critical_nodes().len(), 11);
        assert_eq!(g.edges().iter().filter(|e| e.normally_open).count(), 1);
        let damaged = apply_scenario(&g, &synthetic_123_scenario()).unwrap();
        assert_eq!(damaged.edges().iter().filter(|e| e.faulted).count(), 2);
    }

    #[test]
    fn random_feeders_stay_in_range() {
        for seed in 0..50 {
            let (g, scenario) = random_feeder(seed);
            assert!((8..=12).contains(&g.node_count()));
            assert!((1..=2).contains(&g.der_count()));
            assert!((1..=3).contains(&g.critical_nodes().len()));
            assert!(g.edges().iter().filter(|e| e.normally_open).count() <= 1);
            assert!(apply_scenario(&g, &scenario).is_ok());
        }
        assert_eq!(random_feeder(7).0, random_feeder(7).0);
    }

    #[test]
    fn published_plan_audits_clean() {
        let g = synthetic_123();
        for plan in [ieee123_major_damage_plan(), ieee123_minor_damage_plan(1)] {
            let plan = published_plan(&g, &plan);
            let audits = crate::verify::audit_radiality(&plan, &g);
            assert!(audits.iter().all(|a| a.radial_ok), "{audits:?}");
        }
    }

    #[test]
    fn published_node_counts() {
        let counts =
            |plan: Vec<PublishedRsn>| plan.iter().map(|r| r.nodes().len()).collect::<Vec<_>>();
        assert_eq!(counts(ieee123_minor_damage_plan(1)), [10, 6, 8, 11, 9]);
        assert_eq!(counts(ieee123_minor_damage_plan(2)), [10, 13, 3, 15, 6]);
        assert_eq!(counts(ieee123_minor_damage_plan(3)), [10, 2, 16, 6, 14]);
        assert_eq!(counts(ieee123_major_damage_plan()), [15, 12, 3, 2, 13]);
    }
}
