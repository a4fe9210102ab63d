use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};

use restore_core::solve::{write_solution, MilpSolution};
use restore_core::verify::{
    line_failure_probabilities, monte_carlo_survival, restoration_path_reliability,
};
use restore_core::{
    apply_scenario, build_model, export_mps, extract_plan, import_solution, parse_feeder,
    restoration_times, solve_milp, verify_plan, FeederGraph, ModelError, RestorationPlan,
    ScenarioConfig, SolveOptions, SolveStatus, VerifyOptions,
};

use crate::manifest::RunManifest;
use crate::render::{fixed, plan_table, report_table, Table};
use crate::{Cli, Command, Exit, Format, Solver};

pub fn run(cli: &Cli) -> Result<Exit> {
    match &cli.command {
        Command::Solve {
            solver,
            solution,
            node_limit,
            time_limit,
        } => {
            let manifest = RunManifest::new(cli, None)?;
            let options = SolveOptions {
                node_limit: *node_limit,
                time_limit: time_limit.map(Duration::from_secs_f64),
                ..Default::default()
            };
            cmd_solve(cli, &manifest, *solver, solution.as_deref(), &options)
        }
        Command::Verify {
            plan,
            samples,
            seed,
        } => {
            let plan_path = plan_path(cli, plan);
            let manifest = RunManifest::new(cli, Some(&plan_path))?;
            cmd_verify(cli, &manifest, &plan_path, *samples, *seed)
        }
        Command::SweepEps {
            eps,
            first_feasible,
        } => {
            let manifest = RunManifest::new(cli, None)?;
            cmd_sweep_epsilon(cli, &manifest, eps, *first_feasible)
        }
        Command::Mc {
            plan,
            samples,
            seed,
            q_override,
        } => {
            let plan_path = plan_path(cli, plan);
            let manifest = RunManifest::new(cli, Some(&plan_path))?;
            cmd_mc(cli, &manifest, &plan_path, *samples, *seed, *q_override)
        }
    }
}

fn plan_path(cli: &Cli, given: &Option<PathBuf>) -> PathBuf {
    given
        .clone()
        .unwrap_or_else(|| cli.common.out.join("plan.json"))
}

/// Feeder with the scenario's faults applied, plus the scenario itself.
fn load_inputs(cli: &Cli) -> Result<(FeederGraph, ScenarioConfig)> {
    let feeder_path = cli.common.feeder.as_ref().expect("checked by the manifest");
    let text = fs::read_to_string(feeder_path)
        .with_context(|| format!("reading {}", feeder_path.display()))?;
    let feeder =
        parse_feeder(&text).with_context(|| format!("parsing {}", feeder_path.display()))?;
    let scenario = match &cli.common.scenario {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ScenarioConfig::parse(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ScenarioConfig::default(),
    };
    scenario.check().context("invalid scenario")?;
    let applied = apply_scenario(&feeder, &scenario).context("applying the scenario")?;
    Ok((applied, scenario))
}

fn write_out(cli: &Cli, name: &str, body: &str) -> Result<()> {
    fs::create_dir_all(&cli.common.out)
        .with_context(|| format!("creating {}", cli.common.out.display()))?;
    let path = cli.common.out.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
}

fn pretty(value: &Value) -> String {
    serde_json::to_string_pretty(value).expect("JSON value serializes") + "\n"
}

/// Writes `table.txt`-style and `.csv` files under `stem` and prints the
/// requested format.
fn emit(
    cli: &Cli,
    manifest: &RunManifest,
    stem: &str,
    table: &Table,
    document: &Value,
) -> Result<()> {
    let text = format!("{}\n{}", manifest.comment(), table.to_text());
    let csv = format!("{}\n{}", manifest.comment(), table.to_csv());
    write_out(cli, &format!("{stem}.txt"), &text)?;
    write_out(cli, &format!("{stem}.csv"), &csv)?;
    match cli.common.format {
        Format::Table => print!("{}", table.to_text()),
        Format::Csv => print!("{}", table.to_csv()),
        Format::Json => print!("{}", pretty(document)),
    }
    Ok(())
}

fn status_name(status: SolveStatus) -> Value {
    serde_json::to_value(status).expect("status serializes")
}

pub fn cmd_solve(
    cli: &Cli,
    manifest: &RunManifest,
    solver: Solver,
    solution: Option<&Path>,
    options: &SolveOptions,
) -> Result<Exit> {
    let (graph, scenario) = load_inputs(cli)?;
    let model = match build_model(&graph, &scenario) {
        Ok(m) => m,
        Err(err @ ModelError::DegenerateEquity { .. }) => {
            eprintln!("error: {err}");
            return Ok(Exit::InputError);
        }
        Err(err) => return Err(err).context("building the model"),
    };
    log::info!(
        "model: {} variables ({} binary), {} rows",
        model.milp.num_variables(),
        model.milp.binaries().count(),
        model.milp.num_constraints()
    );

    if solver == Solver::MpsExport {
        let body = format!(
            "* {}\n{}",
            manifest.comment().trim_start_matches("# "),
            export_mps(&model.milp)
        );
        write_out(cli, "model.mps", &body)?;
        eprintln!("wrote {}", cli.common.out.join("model.mps").display());
        return Ok(Exit::Success);
    }

    let (result, imported): (MilpSolution, bool) = match solution {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let imported = import_solution(&model.milp, &text)
                .with_context(|| format!("parsing {}", path.display()))?;
            if !imported.missing.is_empty() {
                log::warn!(
                    "{} variables missing from the solution, taken as 0",
                    imported.missing.len()
                );
            }
            (imported.solution, true)
        }
        None => (solve_milp(&model.milp, options), false),
    };

    match result.status {
        SolveStatus::Infeasible if imported => {
            eprintln!("error: the imported solution violates the model constraints");
            return Ok(Exit::VerificationFailed);
        }
        SolveStatus::Infeasible => {
            if scenario.enforce_time_equity {
                eprintln!(
                    "infeasible: no plan satisfies the restoration-time equity rows (eq31hi/eq31lo) \
                     with epsilon = {} h; try a wider tolerance",
                    scenario.epsilon_hours.unwrap_or_default()
                );
            } else {
                eprintln!("infeasible: no restoration plan satisfies the constraints");
            }
            let doc =
                json!({"manifest": manifest.to_value(), "status": status_name(result.status)});
            write_out(cli, "plan.json", &pretty(&doc))?;
            return Ok(Exit::Infeasible);
        }
        SolveStatus::Limit | SolveStatus::Unbounded => {
            eprintln!("stopped without a plan: {:?}", result.status);
            return Ok(Exit::Limit);
        }
        SolveStatus::Optimal | SolveStatus::Feasible => {}
    }

    let plan = match extract_plan(&model, &result, &graph) {
        Ok(p) => p,
        Err(err) if imported => {
            eprintln!("error: {err}");
            return Ok(Exit::VerificationFailed);
        }
        Err(err) => return Err(err).context("extracting the plan"),
    };
    let report = verify_plan(
        &plan,
        &graph,
        &VerifyOptions {
            v_ref: scenario.v_ref,
            ..Default::default()
        },
    );

    let solve_doc = json!({
        "manifest": manifest.to_value(),
        "status": status_name(result.status),
        "objective": result.objective,
        "gap": result.gap,
        "nodes": result.stats.nodes,
        "lp_iterations": result.stats.lp_iterations,
        "plan": plan,
    });
    write_out(cli, "plan.json", &pretty(&solve_doc))?;
    write_out(
        cli,
        "solution.txt",
        &format!(
            "{}\n{}",
            manifest.comment(),
            write_solution(&model.milp, &result)
        ),
    )?;
    let report_doc = json!({"manifest": manifest.to_value(), "report": report});
    write_out(cli, "report.json", &pretty(&report_doc))?;
    emit(
        cli,
        manifest,
        "table",
        &plan_table(&plan, &report),
        &solve_doc,
    )?;

    Ok(if !report.ok {
        for r in report.rsns.iter().filter(|r| !r.radial_ok) {
            eprintln!("DER {}: {}", r.der, r.diagnostics.join("; "));
        }
        Exit::VerificationFailed
    } else if result.status == SolveStatus::Feasible && !imported {
        eprintln!(
            "limit reached: best plan has relative gap {:.3e}",
            result.gap
        );
        Exit::Limit
    } else {
        Exit::Success
    })
}

/// Reads a plan written by `solve` (plan under `"plan"`) or a bare plan.
fn read_plan(path: &Path) -> Result<RestorationPlan> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut value: Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(inner) = value.get_mut("plan") {
        value = inner.take();
    }
    if value.is_null() {
        bail!("{} holds no plan", path.display());
    }
    serde_json::from_value(value)
        .with_context(|| format!("{} is not a restoration plan", path.display()))
}

fn check_plan_matches(plan: &RestorationPlan, graph: &FeederGraph) -> Result<()> {
    for rsn in &plan.rsns {
        let Some(ix) = graph.node_index(&rsn.der) else {
            bail!(
                "plan/feeder mismatch: DER bus {} is not in the feeder",
                rsn.der
            );
        };
        if graph.der_at(ix).is_none() {
            bail!("plan/feeder mismatch: bus {} hosts no DER", rsn.der);
        }
        if let Some(n) = rsn.nodes.iter().find(|n| graph.node_index(n).is_none()) {
            bail!("plan/feeder mismatch: bus {n} is not in the feeder");
        }
    }
    Ok(())
}

pub fn cmd_verify(
    cli: &Cli,
    manifest: &RunManifest,
    plan_path: &Path,
    samples: Option<usize>,
    seed: u64,
) -> Result<Exit> {
    let (graph, scenario) = load_inputs(cli)?;
    let plan = read_plan(plan_path)?;
    check_plan_matches(&plan, &graph)?;
    if samples == Some(0) {
        bail!("--samples must be at least 1");
    }
    let report = verify_plan(
        &plan,
        &graph,
        &VerifyOptions {
            v_ref: scenario.v_ref,
            samples,
            seed,
            q_override: None,
        },
    );
    let doc = json!({"manifest": manifest.to_value(), "report": report});
    write_out(cli, "report.json", &pretty(&doc))?;
    emit(cli, manifest, "report", &report_table(&report), &doc)?;
    if !report.ok {
        for r in report.rsns.iter().filter(|r| !r.radial_ok) {
            eprintln!("DER {}: {}", r.der, r.diagnostics.join("; "));
        }
        if !report.metrics.consistent {
            eprintln!("stored objective or U_RC disagrees with the recomputed U_RC");
        }
        return Ok(Exit::VerificationFailed);
    }
    Ok(Exit::Success)
}

pub fn cmd_sweep_epsilon(
    cli: &Cli,
    manifest: &RunManifest,
    eps: &[f64],
    first_feasible: bool,
) -> Result<Exit> {
    if eps.is_empty() {
        bail!("--eps needs at least one value");
    }
    if let Some(bad) = eps.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        bail!("--eps values must be positive, got {bad}");
    }
    let mut order = eps.to_vec();
    order.sort_by(f64::total_cmp);
    order.dedup();
    let (graph, base) = load_inputs(cli)?;

    let mut table = Table::new(&[
        "epsilon (h)",
        "Status",
        "Picked CLs",
        "U_R",
        "U_RC",
        "Max bias (h)",
    ]);
    let mut rows = Vec::new();
    let mut any_feasible = false;
    for e in order {
        let scenario = ScenarioConfig {
            enforce_time_equity: true,
            epsilon_hours: Some(e),
            ..base.clone()
        };
        let (status, plan) = match build_model(&graph, &scenario) {
            Err(ModelError::DegenerateEquity { .. }) => ("degenerate".to_string(), None),
            Err(err) => return Err(err).context("building the model"),
            Ok(model) => {
                let result = solve_milp(&model.milp, &SolveOptions::default());
                let name = status_name(result.status)
                    .as_str()
                    .unwrap_or_default()
                    .to_string();
                let plan = if result.has_incumbent() {
                    Some(extract_plan(&model, &result, &graph).context("extracting the plan")?)
                } else {
                    None
                };
                (name, plan)
            }
        };
        let max_bias = plan
            .as_ref()
            .and_then(|p| restoration_times(p, p.t_net).max_bias);
        table.push(vec![
            format!("{e}"),
            status.clone(),
            plan.as_ref()
                .map_or("-".into(), |p| p.picked_critical_loads.to_string()),
            fixed(plan.as_ref().map(|p| p.u_r), 4),
            fixed(plan.as_ref().map(|p| p.u_rc), 4),
            fixed(max_bias, 3),
        ]);
        rows.push(json!({
            "epsilon": e,
            "status": status,
            "feasible": plan.is_some(),
            "picked": plan.as_ref().map(|p| p.picked_critical_loads),
            "u_r": plan.as_ref().map(|p| p.u_r),
            "u_rc": plan.as_ref().map(|p| p.u_rc),
            "max_bias": max_bias,
            "plan": plan,
        }));
        if plan.is_some() {
            any_feasible = true;
            if first_feasible {
                break;
            }
        }
    }
    let doc = json!({"manifest": manifest.to_value(), "sweep": rows});
    write_out(cli, "sweep.json", &pretty(&doc))?;
    emit(cli, manifest, "sweep", &table, &doc)?;
    Ok(if any_feasible {
        Exit::Success
    } else {
        Exit::Infeasible
    })
}

pub fn cmd_mc(
    cli: &Cli,
    manifest: &RunManifest,
    plan_path: &Path,
    samples: usize,
    seed: u64,
    q_override: Option<f64>,
) -> Result<Exit> {
    if samples < 1 {
        bail!("--samples must be at least 1");
    }
    if let Some(q) = q_override.filter(|q| !(0.0..=1.0).contains(q)) {
        bail!("--q-override must lie in [0, 1], got {q}");
    }
    let (graph, _) = load_inputs(cli)?;
    let plan = read_plan(plan_path)?;
    check_plan_matches(&plan, &graph)?;

    let mut table = Table::new(&["DER", "Lines", "Analytic R_P", "Estimate", "Std error"]);
    let mut rows = Vec::new();
    for (k, rsn) in plan.rsns.iter().enumerate() {
        let q = line_failure_probabilities(rsn, &graph, q_override);
        let analytic: f64 = q
            .iter()
            .map(|qe| restoration_path_reliability(1, 1.0 - qe))
            .product();
        let mc = monte_carlo_survival(&q, samples, seed.wrapping_add(k as u64));
        table.push(vec![
            format!("DER-{}", rsn.der),
            q.len().to_string(),
            format!("{analytic:.6}"),
            format!("{:.6}", mc.estimate),
            format!("{:.6}", mc.stderr),
        ]);
        rows.push(json!({
            "der": rsn.der,
            "lines": q.len(),
            "analytic": analytic,
            "estimate": mc.estimate,
            "stderr": mc.stderr,
            "samples": mc.samples,
        }));
    }
    let doc = json!({"manifest": manifest.to_value(), "monte_carlo": rows});
    write_out(cli, "mc.json", &pretty(&doc))?;
    emit(cli, manifest, "mc", &table, &doc)?;
    Ok(Exit::Success)
}
