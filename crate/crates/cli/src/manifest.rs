use std::path::Path;

use anyhow::{bail, Result};
use serde::Serialize;

use crate::{Cli, Command, Format, Solver};

/// What was run and with which inputs. Embedded verbatim in every output so a
/// file can be traced back to its invocation. Wall-clock time is left out on
/// purpose: re-running a manifest must give identical bytes.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub feeder: String,
    pub scenario: Option<String>,
    pub plan: Option<String>,
    pub solution: Option<String>,
    pub options: ManifestOptions,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestOptions {
    pub out_dir: String,
    pub format: Format,
    pub solver: Option<Solver>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub q_override: Option<f64>,
    pub eps: Option<Vec<f64>>,
    pub first_feasible: Option<bool>,
    pub node_limit: Option<u64>,
    pub time_limit: Option<f64>,
}

fn shown(p: &Path) -> String {
    p.display().to_string()
}

fn existing(p: &Path, what: &str) -> Result<String> {
    if !p.exists() {
        bail!("{what} file {} does not exist", p.display());
    }
    Ok(shown(p))
}

impl RunManifest {
    /// Records the invocation; `plan` is the resolved plan path for commands
    /// that read one.
    pub fn new(cli: &Cli, plan: Option<&Path>) -> Result<Self> {
        let c = &cli.common;
        let Some(feeder) = &c.feeder else {
            bail!("--feeder is required");
        };
        let mut options = ManifestOptions {
            out_dir: shown(&c.out),
            format: c.format,
            solver: None,
            seed: None,
            samples: None,
            q_override: None,
            eps: None,
            first_feasible: None,
            node_limit: None,
            time_limit: None,
        };
        let mut solution_path = None;
        let command = match &cli.command {
            Command::Solve {
                solver,
                solution,
                node_limit,
                time_limit,
            } => {
                options.solver = Some(*solver);
                options.node_limit = *node_limit;
                options.time_limit = *time_limit;
                solution_path = solution
                    .as_deref()
                    .map(|p| existing(p, "solution"))
                    .transpose()?;
                "solve"
            }
            Command::Verify { samples, seed, .. } => {
                options.samples = *samples;
                options.seed = samples.map(|_| *seed);
                "verify"
            }
            Command::SweepEps {
                eps,
                first_feasible,
            } => {
                options.eps = Some(eps.clone());
                options.first_feasible = Some(*first_feasible);
                "sweep-eps"
            }
            Command::Mc {
                samples,
                seed,
                q_override,
                ..
            } => {
                options.samples = Some(*samples);
                options.seed = Some(*seed);
                options.q_override = *q_override;
                "mc"
            }
        };
        Ok(Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            feeder: existing(feeder, "feeder")?,
            scenario: c
                .scenario
                .as_deref()
                .map(|p| existing(p, "scenario"))
                .transpose()?,
            plan: plan.map(|p| existing(p, "plan")).transpose()?,
            solution: solution_path,
            options,
        })
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("manifest serializes")
    }

    /// One-line form for comment headers of text outputs.
    pub fn comment(&self) -> String {
        format!(
            "# manifest: {}",
            serde_json::to_string(self).expect("manifest serializes")
        )
    }
}
