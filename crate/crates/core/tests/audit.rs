use restore_core::fixtures;
use restore_core::verify::{verify_plan, AuditIssue, VerifyOptions};
use restore_core::{
    apply_scenario, audit_radiality, build_model, extract_plan, solve_milp, FeederGraph,
    RestorationPlan, ScenarioConfig, SolveOptions,
};

fn fx8_optimum() -> (FeederGraph, RestorationPlan) {
    let scenario = ScenarioConfig::default();
    let graph = apply_scenario(&fixtures::fx8(), &scenario).unwrap();
    let model = build_model(&graph, &scenario).unwrap();
    let solution = solve_milp(&model.milp, &SolveOptions::default());
    let plan = extract_plan(&model, &solution, &graph).unwrap();
    (graph, plan)
}

#[test]
fn optimum_passes_every_check() {
    let (graph, plan) = fx8_optimum();
    let audits = audit_radiality(&plan, &graph);
    assert!(audits.iter().all(|a| a.radial_ok), "{audits:?}");
    let report = verify_plan(&plan, &graph, &VerifyOptions::default());
    assert!(report.ok);
    assert!(report.metrics.consistent);
    assert_eq!(report.metrics.average_bias, Some(0.0));
    assert_eq!(report.rsns[0].t_hours, Some(4.0));
    assert!(report.rsns[0].loss_percent.unwrap() < 1.0);
}

#[test]
fn closing_both_paths_to_four_is_a_cycle() {
    let (graph, mut plan) = fx8_optimum();
    let rsn = &mut plan.rsns[0];
    for n in ["6", "8"] {
        rsn.nodes.push(n.into());
    }
    for (a, b) in [("5", "6"), ("6", "8"), ("8", "4")] {
        rsn.edges.push((a.into(), b.into()));
    }
    let audit = &audit_radiality(&plan, &graph)[0];
    assert!(!audit.radial_ok);
    assert!(audit
        .issues
        .contains(&AuditIssue::Cycle { nodes: 8, edges: 8 }));
}

#[test]
fn energized_faulted_line_is_named() {
    let (_, plan) = fx8_optimum();
    let damaged = apply_scenario(
        &fixtures::fx8(),
        &ScenarioConfig {
            faulted_edges: vec!["3-4".into()],
            ..Default::default()
        },
    )
    .unwrap();
    let audit = &audit_radiality(&plan, &damaged)[0];
    assert!(audit
        .issues
        .contains(&AuditIssue::FaultedEdgeEnergized { edge: "3-4".into() }));
    let report = verify_plan(&plan, &damaged, &VerifyOptions::default());
    assert!(!report.ok);
    assert!(report.rsns[0]
        .diagnostics
        .iter()
        .any(|d| d.contains("faulted line 3-4")));
}

#[test]
fn dropping_the_switchless_neighbour_breaks_coupling() {
    let (graph, mut plan) = fx8_optimum();
    let rsn = &mut plan.rsns[0];
    rsn.nodes.retain(|n| n != "7");
    rsn.edges.retain(|(a, b)| !(a == "5" && b == "7"));
    let audit = &audit_radiality(&plan, &graph)[0];
    assert_eq!(
        audit.issues,
        vec![AuditIssue::CouplingBroken { edge: "5-7".into() }]
    );
}

#[test]
fn report_json_is_stable() {
    let (graph, plan) = fx8_optimum();
    let options = VerifyOptions {
        samples: Some(2000),
        seed: 9,
        ..Default::default()
    };
    let a = verify_plan(&plan, &graph, &options).to_json();
    let b = verify_plan(&plan, &graph, &options).to_json();
    assert_eq!(a, b);
    let at = |key: &str| a.find(&format!("\"{key}\":")).unwrap();
    assert!(
        at("rsns") < at("voltages") && at("voltages") < at("metrics") && at("metrics") < at("ok")
    );
}
