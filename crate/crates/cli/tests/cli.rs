use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn restore(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_restore"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("RESTORE_LOG")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn solve_fx8(dir: &TempDir) -> PathBuf {
    let out = dir.path().join("fx8");
    let feeder = fixture("fx8.json");
    let o = restore(&["solve", "--feeder", feeder.to_str().unwrap()], &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

#[test]
fn solve_prints_the_restoration_table() {
    let dir = TempDir::new().unwrap();
    let out = solve_fx8(&dir);
    let table = fs::read_to_string(out.join("table.txt")).unwrap();
    let row = table.lines().find(|l| l.starts_with("DER-1")).unwrap();
    let cells: Vec<&str> = row.split('|').map(str::trim).collect();
    assert_eq!(
        &cells[..4],
        ["DER-1", "CL-4, CL-7", "1-2-3-4 ; 1-2-5-7", "4.00"]
    );
    assert!(cells[4].parse::<f64>().unwrap() < 1.0);

    let plan = json(&out.join("plan.json"));
    assert_eq!(plan["status"], "optimal");
    assert_eq!(plan["manifest"]["command"], "solve");
    assert!((plan["objective"].as_f64().unwrap() + 15.7).abs() < 1e-9);
    let report = json(&out.join("report.json"));
    assert_eq!(report["report"]["ok"], true);
    assert!(table.starts_with("# manifest: "));
    assert!(fs::read_to_string(out.join("table.csv"))
        .unwrap()
        .contains("\"CL-4, CL-7\""));
}

#[test]
fn rerunning_a_manifest_gives_identical_files() {
    let dir = TempDir::new().unwrap();
    let out = solve_fx8(&dir);
    let names = [
        "plan.json",
        "report.json",
        "table.txt",
        "table.csv",
        "solution.txt",
    ];
    let first: Vec<Vec<u8>> = names
        .iter()
        .map(|n| fs::read(out.join(n)).unwrap())
        .collect();
    solve_fx8(&dir);
    for (name, before) in names.iter().zip(first) {
        assert_eq!(fs::read(out.join(name)).unwrap(), before, "{name} changed");
    }
}

#[test]
fn narrow_equity_band_is_infeasible() {
    let dir = TempDir::new().unwrap();
    let feeder = fixture("equity_pair.json");
    let scenario = fixture("equity_eps001.scenario.json");
    let o = restore(
        &[
            "solve",
            "--feeder",
            feeder.to_str().unwrap(),
            "--scenario",
            scenario.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("eq31"), "{}", stderr(&o));
}

#[test]
fn mps_export_stops_before_solving() {
    let dir = TempDir::new().unwrap();
    let feeder = fixture("fx8.json");
    let o = restore(
        &[
            "solve",
            "--feeder",
            feeder.to_str().unwrap(),
            "--solver",
            "mps-export",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    assert!(!dir.path().join("plan.json").exists());
    let text = fs::read_to_string(dir.path().join("model.mps")).unwrap();
    let model = restore_core::import_mps(&text).unwrap();
    assert!(model.binaries().count() > 0);
}

#[test]
fn imported_solution_reproduces_the_plan() {
    let dir = TempDir::new().unwrap();
    let out = solve_fx8(&dir);
    let again = dir.path().join("again");
    let feeder = fixture("fx8.json");
    let solution = out.join("solution.txt");
    let o = restore(
        &[
            "solve",
            "--feeder",
            feeder.to_str().unwrap(),
            "--solution",
            solution.to_str().unwrap(),
        ],
        &again,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        json(&again.join("plan.json"))["plan"],
        json(&out.join("plan.json"))["plan"]
    );
}

#[test]
fn tampered_solution_fails_verification() {
    let dir = TempDir::new().unwrap();
    let out = solve_fx8(&dir);
    let text = fs::read_to_string(out.join("solution.txt")).unwrap();
    let bad = dir.path().join("bad.txt");
    // leave bus 2 without supply while 3 and 4 stay on
    fs::write(&bad, text.replace("v_2_1 1.0", "v_2_1 0.0")).unwrap();
    let feeder = fixture("fx8.json");
    let o = restore(
        &[
            "solve",
            "--feeder",
            feeder.to_str().unwrap(),
            "--solution",
            bad.to_str().unwrap(),
        ],
        &dir.path().join("bad"),
    );
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn verify_accepts_the_optimum_and_rejects_a_cycle() {
    let dir = TempDir::new().unwrap();
    let out = solve_fx8(&dir);
    let feeder = fixture("fx8.json");
    let o = restore(&["verify", "--feeder", feeder.to_str().unwrap()], &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let mut plan = json(&out.join("plan.json"));
    let rsn = &mut plan["plan"]["rsns"][0];
    for n in ["6", "8"] {
        rsn["nodes"].as_array_mut().unwrap().push(n.into());
    }
    for (a, b) in [("5", "6"), ("6", "8"), ("8", "4")] {
        rsn["edges"]
            .as_array_mut()
            .unwrap()
            .push(serde_json::json!([a, b]));
    }
    let edited = dir.path().join("edited.json");
    fs::write(&edited, plan.to_string()).unwrap();
    let o = restore(
        &[
            "verify",
            "--feeder",
            feeder.to_str().unwrap(),
            "--plan",
            edited.to_str().unwrap(),
        ],
        &dir.path().join("edited"),
    );
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("cycle"), "{}", stderr(&o));
}

#[test]
fn verify_reports_published_network_unavailabilities() {
    let dir = TempDir::new().unwrap();
    let feeder = fixture("synthetic_123.json");
    let plan = fixture("ieee123_major_damage.plan.json");
    let o = restore(
        &[
            "verify",
            "--feeder",
            feeder.to_str().unwrap(),
            "--plan",
            plan.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = json(&dir.path().join("report.json"));
    let u_r: Vec<f64> = report["report"]["rsns"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["u_r"].as_f64().unwrap())
        .collect();
    for (got, want) in u_r.iter().zip([0.75, 0.6, 0.24, 0.2, 0.65]) {
        assert!((got - want).abs() < 1e-9, "{u_r:?}");
    }
}

#[test]
fn verify_rejects_a_plan_for_another_feeder() {
    let dir = TempDir::new().unwrap();
    let feeder = fixture("fx8.json");
    let plan = fixture("ieee123_major_damage.plan.json");
    let o = restore(
        &[
            "verify",
            "--feeder",
            feeder.to_str().unwrap(),
            "--plan",
            plan.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("mismatch"));
}

#[test]
fn monte_carlo_is_reproducible_and_consistent() {
    let dir = TempDir::new().unwrap();
    let out = solve_fx8(&dir);
    let feeder = fixture("fx8.json");
    let args = [
        "mc",
        "--feeder",
        feeder.to_str().unwrap(),
        "--seed",
        "42",
        "--format",
        "json",
    ];
    let a = restore(&args, &out);
    let b = restore(&args, &out);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);

    let doc: Value = serde_json::from_slice(&a.stdout).unwrap();
    let row = &doc["monte_carlo"][0];
    assert_eq!(row["lines"], 5);
    let (est, err) = (
        row["estimate"].as_f64().unwrap(),
        row["stderr"].as_f64().unwrap(),
    );
    assert!((est - 0.95f64.powi(5)).abs() <= 3.0 * err);

    let sure = restore(
        &[
            "mc",
            "--feeder",
            feeder.to_str().unwrap(),
            "--q-override",
            "0",
            "--format",
            "json",
        ],
        &out,
    );
    let doc: Value = serde_json::from_slice(&sure.stdout).unwrap();
    assert_eq!(doc["monte_carlo"][0]["estimate"], 1.0);

    let none = restore(
        &["mc", "--feeder", feeder.to_str().unwrap(), "--samples", "0"],
        &out,
    );
    assert_eq!(code(&none), 1);
}

#[test]
fn epsilon_sweep() {
    let dir = TempDir::new().unwrap();
    let fx8 = fixture("fx8.json");
    let o = restore(
        &[
            "sweep-eps",
            "--feeder",
            fx8.to_str().unwrap(),
            "--eps",
            "3,0.1,1",
            "--format",
            "json",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = doc["sweep"].as_array().unwrap();
    let eps: Vec<f64> = rows
        .iter()
        .map(|r| r["epsilon"].as_f64().unwrap())
        .collect();
    assert_eq!(eps, [0.1, 1.0, 3.0]);
    assert!(rows.iter().all(|r| r["feasible"] == true));
    assert!(rows
        .iter()
        .all(|r| r["plan"]["rsns"] == rows[0]["plan"]["rsns"]));

    let pair = fixture("equity_pair.json");
    let o = restore(
        &[
            "sweep-eps",
            "--feeder",
            pair.to_str().unwrap(),
            "--eps",
            "0.01",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("infeasible"));

    let o = restore(
        &[
            "sweep-eps",
            "--feeder",
            pair.to_str().unwrap(),
            "--eps",
            "0.01,1,2",
            "--first-feasible",
            "--format",
            "json",
        ],
        dir.path(),
    );
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["sweep"].as_array().unwrap().len(), 2);

    let o = restore(
        &["sweep-eps", "--feeder", fx8.to_str().unwrap(), "--eps", ""],
        dir.path(),
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn node_limit_exits_with_limit_code() {
    let dir = TempDir::new().unwrap();
    let feeder = fixture("synthetic_123.json");
    let scenario = fixture("synthetic_123.scenario.json");
    let o = restore(
        &[
            "solve",
            "--feeder",
            feeder.to_str().unwrap(),
            "--scenario",
            scenario.to_str().unwrap(),
            "--node-limit",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn input_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let o = restore(&["solve", "--feeder", "/no/such/feeder.json"], dir.path());
    assert_eq!(code(&o), 1);
    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{\"base_kv\": 4.16,").unwrap();
    let o = restore(&["solve", "--feeder", broken.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
    let o = restore(&["solve"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn log_level_comes_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let feeder = fixture("fx8.json");
    let o = Command::new(env!("CARGO_BIN_EXE_restore"))
        .args(["solve", "--feeder", feeder.to_str().unwrap(), "--out"])
        .arg(dir.path())
        .env("RESTORE_LOG", "debug")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("DEBUG"));
}

#[test]
fn checked_in_fixtures_match_the_library() {
    use restore_core::fixtures;
    let same = |name: &str, graph: restore_core::FeederGraph| {
        assert_eq!(
            fs::read_to_string(fixture(name)).unwrap(),
            graph.to_json() + "\n",
            "{name}"
        );
    };
    same("fx8.json", fixtures::fx8());
    same("equity_pair.json", fixtures::equity_pair());
    same("synthetic_123.json", fixtures::synthetic_123());
}
