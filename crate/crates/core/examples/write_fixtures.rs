//! Writes the reference feeders, scenarios and published plans as JSON.
//!
//! ```text
//! cargo run -p restore-core --example write_fixtures -- fixtures
//! ```

use std::path::PathBuf;
use std::{env, fs};

use restore_core::fixtures;
use restore_core::ScenarioConfig;

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    fs::create_dir_all(&dir)?;
    let write = |name: &str, body: String| fs::write(dir.join(name), body + "\n");

    write("fx8.json", fixtures::fx8().to_json())?;
    write("fx8_pmax25.json", fixtures::fx8_with_p_max(25.0).to_json())?;
    write("equity_pair.json", fixtures::equity_pair().to_json())?;
    write("synthetic_123.json", fixtures::synthetic_123().to_json())?;

    write(
        "undamaged.scenario.json",
        ScenarioConfig::default().to_json(),
    )?;
    let fault = ScenarioConfig {
        faulted_edges: vec!["3-4".into()],
        ..Default::default()
    };
    write("fx8_fault_3_4.scenario.json", fault.to_json())?;
    for (name, eps) in [
        ("equity_eps1.scenario.json", 1.0),
        ("equity_eps001.scenario.json", 0.01),
    ] {
        let s = ScenarioConfig {
            enforce_time_equity: true,
            epsilon_hours: Some(eps),
            ..Default::default()
        };
        write(name, s.to_json())?;
    }
    write(
        "synthetic_123.scenario.json",
        fixtures::synthetic_123_scenario().to_json(),
    )?;

    let g = fixtures::synthetic_123();
    let plan = fixtures::published_plan(&g, &fixtures::ieee123_major_damage_plan());
    write(
        "ieee123_major_damage.plan.json",
        serde_json::to_string_pretty(&plan).expect("plan serializes"),
    )?;
    Ok(())
}
