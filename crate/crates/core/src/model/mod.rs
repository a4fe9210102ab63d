//! Canonical sparse MILP container and the restoration formulation built on
//! top of it.

mod build;

pub use build::{
    add_connectivity_constraints, add_operational_constraints, add_powerflow_constraints,
    build_model, build_objective, build_variables, compute_t_net, linearize_product, ModelContext,
    RestorationModel,
};

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::feeder::FeederError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("total critical demand is zero; restoration time is undefined")]
    ZeroCriticalDemand,
    #[error("feeder has no DER")]
    NoDers,
    #[error("equity band degenerate: epsilon {epsilon} h >= T_net {t_net} h")]
    DegenerateEquity { epsilon: f64, t_net: f64 },
    #[error("cannot linearize product with unbounded variable {0}")]
    UnboundedProduct(String),
    #[error("product bound {bound} exceeds big-M {big_m} for variable {var}")]
    BigMTooSmall { var: String, bound: f64, big_m: f64 },
    #[error(transparent)]
    Scenario(#[from] FeederError),
}

/// Role of a variable in the restoration formulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VariableKind {
    /// Node-DER assignment `v`.
    Assignment,
    /// Critical-load pickup `s`.
    Pickup,
    /// Node-path assignment `y`.
    Path,
    FlowP,
    FlowQ,
    PathFlowP,
    PathFlowQ,
    Voltage,
    PathVoltage,
    /// Linearized `y * path flow (P)`.
    AuxFlowP,
    /// Linearized `y * path flow (Q)`.
    AuxFlowQ,
    /// Linearized `y * path voltage`.
    AuxVoltage,
}

impl VariableKind {
    pub fn is_binary(self) -> bool {
        matches!(self, Self::Assignment | Self::Pickup | Self::Path)
    }

    fn prefix(self) -> &'static str {
        match self {
            Self::Assignment => "v",
            Self::Pickup => "s",
            Self::Path => "y",
            Self::FlowP => "p",
            Self::FlowQ => "q",
            Self::PathFlowP => "pa",
            Self::PathFlowQ => "qa",
            Self::Voltage => "V",
            Self::PathVoltage => "Va",
            Self::AuxFlowP => "zp",
            Self::AuxFlowQ => "zq",
            Self::AuxVoltage => "zV",
        }
    }
}

/// Structural identity of a formulation variable: kind plus the node, DER and
/// path it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarTag {
    pub kind: VariableKind,
    pub node: usize,
    pub der: Option<usize>,
    pub alpha: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
    /// `None` for variables of models read back from an interchange file.
    pub tag: Option<VarTag>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub label: String,
}

impl LinearConstraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, c)| c * values[j]).sum()
    }

    /// Amount by which `values` violate the row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let a = self.activity(values);
        match self.sense {
            Sense::Le => (a - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - a).max(0.0),
            Sense::Eq => (a - self.rhs).abs(),
        }
    }

    /// Family prefix of the label (text before the first `:`).
    pub fn family(&self) -> &str {
        self.label.split(':').next().unwrap_or(&self.label)
    }
}

/// A minimization MILP in sparse row form.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MilpModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<LinearConstraint>,
    /// Sparse objective, sorted by variable index.
    pub objective: Vec<(usize, f64)>,
    /// Pooled restoration time (hours), when the feeder has critical demand.
    pub t_net: Option<f64>,
    names: HashMap<String, usize>,
    tags: HashMap<VarTag, usize>,
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an untagged variable. Names must be unique.
    pub fn add_variable(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        integer: bool,
    ) -> usize {
        let name = name.into();
        let ix = self.variables.len();
        let previous = self.names.insert(name.clone(), ix);
        assert!(previous.is_none(), "duplicate variable name {name}");
        self.variables.push(Variable {
            name,
            lower,
            upper,
            integer,
            tag: None,
        });
        ix
    }

    /// Adds a formulation variable named after its tag, e.g. `v_4_1` for the
    /// assignment of node 4 to the DER at node 1.
    pub(crate) fn add_tagged(
        &mut self,
        tag: VarTag,
        name_parts: &[&str],
        lower: f64,
        upper: f64,
    ) -> usize {
        let mut name = tag.kind.prefix().to_string();
        for part in name_parts {
            name.push('_');
            name.push_str(part);
        }
        let ix = self.add_variable(name, lower, upper, tag.kind.is_binary());
        self.variables[ix].tag = Some(tag);
        self.tags.insert(tag, ix);
        ix
    }

    pub fn add_constraint(
        &mut self,
        label: impl Into<String>,
        terms: Vec<(usize, f64)>,
        sense: Sense,
        rhs: f64,
    ) {
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for (j, c) in terms {
            assert!(
                j < self.variables.len(),
                "constraint references unknown variable {j}"
            );
            assert!(c.is_finite(), "non-finite coefficient");
            *merged.entry(j).or_insert(0.0) += c;
        }
        self.constraints.push(LinearConstraint {
            terms: merged.into_iter().filter(|&(_, c)| c != 0.0).collect(),
            sense,
            rhs,
            label: label.into(),
        });
    }

    pub fn set_objective(&mut self, terms: Vec<(usize, f64)>) {
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for (j, c) in terms {
            *merged.entry(j).or_insert(0.0) += c;
        }
        self.objective = merged.into_iter().filter(|&(_, c)| c != 0.0).collect();
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn var_by_name(&self, name: &str) -> Option<usize> {
        self.names.get(name).copied()
    }

    pub fn var(
        &self,
        kind: VariableKind,
        node: usize,
        der: Option<usize>,
        alpha: Option<usize>,
    ) -> Option<usize> {
        self.tags
            .get(&VarTag {
                kind,
                node,
                der,
                alpha,
            })
            .copied()
    }

    pub fn binaries(&self) -> impl Iterator<Item = usize> + '_ {
        self.variables
            .iter()
            .enumerate()
            .filter_map(|(j, v)| v.integer.then_some(j))
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(j, c)| c * values[j]).sum()
    }

    /// Number of rows per label family.
    pub fn family_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for c in &self.constraints {
            *out.entry(c.family().to_string()).or_insert(0) += 1;
        }
        out
    }

    pub fn rows_in_family<'a>(
        &'a self,
        family: &'a str,
    ) -> impl Iterator<Item = &'a LinearConstraint> + 'a {
        self.constraints
            .iter()
            .filter(move |c| c.family() == family)
    }

    /// Largest row violation and the worst bound violation of `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|c| c.violation(values))
            .fold(0.0, f64::max);
        let bounds = self
            .variables
            .iter()
            .zip(values)
            .map(|(v, &x)| (v.lower - x).max(x - v.upper).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Plain-text dump with one line per variable and row; stable across
    /// rebuilds of the same inputs.
    pub fn canonical_form(&self) -> String {
        let mut out = String::new();
        for v in &self.variables {
            let _ = writeln!(
                out,
                "var {} [{:?}, {:?}] int={}",
                v.name, v.lower, v.upper, v.integer
            );
        }
        let _ = write!(out, "min");
        for &(j, c) in &self.objective {
            let _ = write!(out, " {:?}*{}", c, self.variables[j].name);
        }
        out.push('\n');
        for c in &self.constraints {
            let _ = write!(out, "{}:", c.label);
            for &(j, a) in &c.terms {
                let _ = write!(out, " {:?}*{}", a, self.variables[j].name);
            }
            let _ = writeln!(out, " {:?} {:?}", c.sense, c.rhs);
        }
        out
    }
}
