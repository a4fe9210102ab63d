//! Post-solve checks: radiality audit, exact power flow, reliability metrics,
//! Monte Carlo survival and an exhaustive reference search.

mod audit;
mod metrics;
mod montecarlo;
mod oracle;
mod powerflow;

pub use audit::{audit_radiality, AuditIssue, RsnAudit};
pub use metrics::{
    effective_unavailability, plan_reliability, plan_unavailability, restoration_path_reliability,
    restoration_times, rsn_reliability, RestorationTimes, Unavailability,
};
pub use montecarlo::{monte_carlo_survival, SurvivalEstimate};
pub use oracle::{brute_force_restore, OracleError, MAX_DERS, MAX_NODES};
pub use powerflow::{lindistflow_voltages, sweep_powerflow, PowerFlowError, SweepResult};

use std::collections::BTreeMap;

use serde::Serialize;

use crate::feeder::FeederGraph;
use crate::model::compute_t_net;
use crate::solve::{RestorationPlan, RsnPlan, SelectedPath};
use crate::topology::{enumerate_paths, find_loops, orient};

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub v_ref: f64,
    /// Monte Carlo trials per network; `None` skips the simulation.
    pub samples: Option<usize>,
    pub seed: u64,
    /// Replaces every line's failure probability in the simulation.
    pub q_override: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            v_ref: 1.0,
            samples: None,
            seed: 0,
            q_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RsnReport {
    pub der: String,
    pub radial_ok: bool,
    pub diagnostics: Vec<String>,
    pub nodes: usize,
    pub lines: usize,
    pub loss_percent: Option<f64>,
    pub min_voltage: Option<f64>,
    /// Largest gap between exact and linear voltages, per unit.
    pub max_linear_error: Option<f64>,
    pub power_flow_error: Option<String>,
    pub reliability: f64,
    pub u_r: f64,
    pub t_hours: Option<f64>,
    pub monte_carlo: Option<SurvivalEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricBlock {
    pub reliability_total: f64,
    pub u_p: f64,
    pub u_r: f64,
    pub u_rc: f64,
    pub t_net: Option<f64>,
    pub average_bias: Option<f64>,
    pub max_bias: Option<f64>,
    /// The plan's stored objective and U_RC agree with the recomputed U_RC.
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub rsns: Vec<RsnReport>,
    /// Exact voltage magnitude per energized bus.
    pub voltages: BTreeMap<String, f64>,
    pub metrics: MetricBlock,
    /// Every network is radial and the metrics are consistent.
    pub ok: bool,
}

impl VerificationReport {
    /// Pretty JSON; field order is fixed by the struct layout and maps are
    /// sorted, so equal reports serialize to equal bytes.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Fills `rsn.selected_paths` from its closed lines: one entry per loop bus
/// with the supply path through the tree and its rank among all simple
/// paths from the DER (0 when the path is not found).
pub fn label_supply_paths(rsn: &mut RsnPlan, graph: &FeederGraph) {
    rsn.selected_paths.clear();
    let Some(root) = graph.node_index(&rsn.der) else {
        return;
    };
    let Some(k) = graph.der_at(root) else { return };
    let Ok(o) = orient(graph, k, &find_loops(graph)) else {
        return;
    };
    for &j in &o.path_handled {
        let id = graph.node_id(j);
        if !rsn.nodes.iter().any(|n| n == id) {
            continue;
        }
        let Some(path) = rsn.supply_path(id) else {
            continue;
        };
        let alpha = enumerate_paths(graph, root, j, usize::MAX)
            .iter()
            .position(|p| {
                p.iter()
                    .map(|&n| graph.node_id(n))
                    .eq(path.iter().map(String::as_str))
            })
            .map_or(0, |a| a + 1);
        rsn.selected_paths.push(SelectedPath {
            node: id.to_string(),
            alpha,
            path,
        });
    }
    rsn.selected_paths
        .sort_by(|a, b| crate::feeder::natural_cmp(&a.node, &b.node));
}

/// Failure probability per closed line of `rsn`.
pub fn line_failure_probabilities(
    rsn: &RsnPlan,
    graph: &FeederGraph,
    q_override: Option<f64>,
) -> Vec<f64> {
    rsn.edges
        .iter()
        .map(|(a, b)| match q_override {
            Some(q) => q,
            None => graph
                .find_edge(&format!("{a}-{b}"))
                .map_or(1.0, |e| 1.0 - graph.edges()[e].p_success),
        })
        .collect()
}

/// Runs every check on `plan`. `graph` must carry the scenario's faults.
pub fn verify_plan(
    plan: &RestorationPlan,
    graph: &FeederGraph,
    options: &VerifyOptions,
) -> VerificationReport {
    let audits = audit_radiality(plan, graph);
    let t_net = compute_t_net(graph).ok();
    let times = restoration_times(plan, t_net);
    let unavailability = plan_unavailability(plan, graph);
    let mut voltages = BTreeMap::new();

    let rsns: Vec<RsnReport> = plan
        .rsns
        .iter()
        .zip(&audits)
        .enumerate()
        .map(|(k, (rsn, audit))| {
            let mut report = RsnReport {
                der: rsn.der.clone(),
                radial_ok: audit.radial_ok,
                diagnostics: audit.issues.iter().map(ToString::to_string).collect(),
                nodes: rsn.nodes.len(),
                lines: rsn.edges.len(),
                loss_percent: None,
                min_voltage: None,
                max_linear_error: None,
                power_flow_error: None,
                reliability: rsn_reliability(rsn, graph),
                u_r: unavailability.u_r_per_rsn[k],
                t_hours: times.t_hours[k],
                monte_carlo: options.samples.map(|n| {
                    let q = line_failure_probabilities(rsn, graph, options.q_override);
                    monte_carlo_survival(&q, n, options.seed.wrapping_add(k as u64))
                }),
            };
            if audit.radial_ok {
                match sweep_powerflow(rsn, graph, options.v_ref) {
                    Ok(exact) => {
                        let linear =
                            lindistflow_voltages(rsn, graph, options.v_ref).expect("radial");
                        report.loss_percent = Some(exact.loss_percent);
                        report.min_voltage = exact.voltages.values().copied().reduce(f64::min);
                        report.max_linear_error = Some(
                            exact
                                .voltages
                                .iter()
                                .map(|(id, v)| (v - linear[id]).abs())
                                .fold(0.0, f64::max),
                        );
                        voltages.extend(exact.voltages);
                    }
                    Err(err) => report.power_flow_error = Some(err.to_string()),
                }
            }
            report
        })
        .collect();

    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
    let consistent =
        close(plan.objective, unavailability.u_rc) && close(plan.u_rc, unavailability.u_rc);
    let metrics = MetricBlock {
        reliability_total: rsns.iter().map(|r| r.reliability).product(),
        u_p: unavailability.u_p,
        u_r: unavailability.u_r,
        u_rc: unavailability.u_rc,
        t_net,
        average_bias: times.average_bias,
        max_bias: times.max_bias,
        consistent,
    };
    VerificationReport {
        ok: consistent && rsns.iter().all(|r| r.radial_ok),
        rsns,
        voltages,
        metrics,
    }
}
