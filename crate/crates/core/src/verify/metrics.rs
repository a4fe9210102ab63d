use serde::Serialize;

use crate::feeder::FeederGraph;
use crate::solve::{RestorationPlan, RsnPlan};

/// Probability that all `lines` energized lines survive when each survives
/// independently with probability `p_e`.
pub fn restoration_path_reliability(lines: usize, p_e: f64) -> f64 {
    p_e.powi(lines as i32)
}

/// Survival probability of one network using each closed line's own
/// `p_success`.
pub fn rsn_reliability(rsn: &RsnPlan, graph: &FeederGraph) -> f64 {
    rsn.edges
        .iter()
        .map(|(a, b)| {
            graph
                .find_edge(&format!("{a}-{b}"))
                .map_or(0.0, |e| graph.edges()[e].p_success)
        })
        .product()
}

/// Reliability of the whole plan: every network must survive.
pub fn plan_reliability(plan: &RestorationPlan, graph: &FeederGraph) -> f64 {
    plan.rsns
        .iter()
        .map(|r| rsn_reliability(r, graph))
        .product()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Unavailability {
    pub u_p: f64,
    pub u_r: f64,
    pub u_rc: f64,
    /// `(1 - a_k) * |RSN_k|` per network, in input order.
    pub u_r_per_rsn: Vec<f64>,
}

/// Unavailability metrics from network sizes and DER availabilities.
///
/// `sizes` holds `(bus count, availability)` per network; `reward` is the
/// per-critical-load bonus `n(M) * n(V)`.
pub fn effective_unavailability(
    sizes: &[(usize, f64)],
    picked: usize,
    reward: f64,
) -> Unavailability {
    let u_r_per_rsn: Vec<f64> = sizes.iter().map(|&(n, a)| (1.0 - a) * n as f64).collect();
    let u_r = u_r_per_rsn.iter().sum::<f64>();
    Unavailability {
        u_p: sizes.iter().map(|&(n, _)| n as f64).sum(),
        u_r,
        u_rc: u_r - reward * picked as f64,
        u_r_per_rsn,
    }
}

/// [`effective_unavailability`] of an extracted plan on its feeder.
pub fn plan_unavailability(plan: &RestorationPlan, graph: &FeederGraph) -> Unavailability {
    let sizes: Vec<(usize, f64)> = plan
        .rsns
        .iter()
        .map(|r| (r.nodes.len(), r.availability))
        .collect();
    let picked = plan.rsns.iter().map(|r| r.critical_loads.len()).sum();
    effective_unavailability(
        &sizes,
        picked,
        (graph.der_count() * graph.node_count()) as f64,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestorationTimes {
    /// Hours per network; `None` when the network serves nothing.
    pub t_hours: Vec<Option<f64>>,
    pub t_net: Option<f64>,
    /// Mean of `|T_net - T_k|` over networks that serve load.
    pub average_bias: Option<f64>,
    pub max_bias: Option<f64>,
}

/// Supply duration of each network and its spread around `t_net`.
pub fn restoration_times(plan: &RestorationPlan, t_net: Option<f64>) -> RestorationTimes {
    let t_hours: Vec<Option<f64>> = plan
        .rsns
        .iter()
        .map(|r| (r.served_p_kw > 0.0).then(|| r.energy_kwh / r.served_p_kw))
        .collect();
    let biases: Vec<f64> = match t_net {
        Some(t) => t_hours.iter().flatten().map(|tk| (t - tk).abs()).collect(),
        None => Vec::new(),
    };
    RestorationTimes {
        average_bias: (!biases.is_empty())
            .then(|| biases.iter().sum::<f64>() / biases.len() as f64),
        max_bias: biases.iter().copied().reduce(f64::max),
        t_hours,
        t_net,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reliability_anchors() {
        assert_eq!(restoration_path_reliability(0, 0.3), 1.0);
        // enumerate the 2^3 line outcomes
        let by_states: f64 = (0..8u32)
            .filter(|&m| m == 7)
            .map(|m| {
                (0..3)
                    .map(|i| if m >> i & 1 == 1 { 0.9 } else { 0.1 })
                    .product::<f64>()
            })
            .sum();
        assert!((restoration_path_reliability(3, 0.9) - by_states).abs() < 1e-15);
        let total = restoration_path_reliability(2, 0.95) * restoration_path_reliability(3, 0.95);
        assert!((total - 0.95f64.powi(5)).abs() < 1e-15);
    }

    #[test]
    fn unavailability_sums() {
        let u = effective_unavailability(&[(6, 0.95), (3, 0.9)], 2, 16.0);
        assert_eq!(u.u_p, 9.0);
        assert!((u.u_r - 0.6).abs() < 1e-12);
        assert!((u.u_rc - (0.6 - 32.0)).abs() < 1e-12);
    }
}
