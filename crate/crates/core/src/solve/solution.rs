//! Plain-text solution files: one `name value` pair per line, `#` comments.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::model::MilpModel;

use super::{short_names, MilpSolution, SolveError, SolveStats, SolveStatus};

/// A solution read from a file, with the names the file did not mention.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportedSolution {
    pub solution: MilpSolution,
    /// Variables absent from the file; their value defaults to 0.
    pub missing: Vec<String>,
}

/// Maps `name value` lines onto the model's variables. Names may be either
/// the model's own or the short names used in its MPS export.
pub fn import_solution(model: &MilpModel, text: &str) -> Result<ImportedSolution, SolveError> {
    let (short, _) = short_names(model);
    let aliases: HashMap<&str, usize> = short
        .iter()
        .enumerate()
        .map(|(j, s)| (s.as_str(), j))
        .collect();
    let mut values: Vec<Option<f64>> = vec![None; model.num_variables()];
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| SolveError::SolutionSyntax {
            line: n + 1,
            message,
        };
        let (name, value) = line
            .rsplit_once(char::is_whitespace)
            .ok_or_else(|| err("expected \"name value\"".into()))?;
        let name = name.trim();
        let value: f64 = value
            .parse()
            .map_err(|_| err(format!("bad number \"{value}\"")))?;
        if !value.is_finite() {
            return Err(err(format!("non-finite value for {name}")));
        }
        let j = model
            .var_by_name(name)
            .or_else(|| aliases.get(name).copied())
            .ok_or_else(|| SolveError::UnknownVariable(name.to_string()))?;
        values[j] = Some(value);
    }
    let missing: Vec<String> = values
        .iter()
        .zip(&model.variables)
        .filter(|(x, _)| x.is_none())
        .map(|(_, v)| v.name.clone())
        .collect();
    if !missing.is_empty() {
        log::warn!(
            "{} variables missing from the solution file; set to 0",
            missing.len()
        );
    }
    let mut values: Vec<f64> = values.into_iter().map(|x| x.unwrap_or(0.0)).collect();
    for (x, v) in values.iter_mut().zip(&model.variables) {
        if v.integer && (*x - x.round()).abs() <= 1e-6 {
            *x = x.round();
        }
    }
    let status = if model.max_violation(&values) <= 1e-6 {
        SolveStatus::Feasible
    } else {
        SolveStatus::Infeasible
    };
    let solution = MilpSolution {
        status,
        objective: model.objective_value(&values),
        values,
        gap: f64::NAN,
        stats: SolveStats::default(),
    };
    Ok(ImportedSolution { solution, missing })
}

/// Writes every variable as `name value`, zeros included.
pub fn write_solution(model: &MilpModel, solution: &MilpSolution) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# status {:?}", solution.status);
    let _ = writeln!(out, "# objective {:?}", solution.objective);
    for (v, x) in model.variables.iter().zip(&solution.values) {
        let _ = writeln!(out, "{} {x:?}", v.name);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Sense;

    fn toy() -> MilpModel {
        let mut m = MilpModel::new();
        let v = m.add_variable("v_4_1", 0.0, 1.0, true);
        let p = m.add_variable("p_4_1", 0.0, 1.0, false);
        m.add_constraint("link", vec![(p, 1.0), (v, -0.03)], Sense::Eq, 0.0);
        m.set_objective(vec![(v, -1.0)]);
        m
    }

    #[test]
    fn empty_file_gives_zeros_and_warnings() {
        let imported = import_solution(&toy(), "").unwrap();
        assert_eq!(imported.solution.values, vec![0.0, 0.0]);
        assert_eq!(imported.missing, ["v_4_1", "p_4_1"]);
    }

    #[test]
    fn unknown_name_is_rejected() {
        assert_eq!(
            import_solution(&toy(), "foo 1\n").unwrap_err(),
            SolveError::UnknownVariable("foo".into())
        );
    }

    #[test]
    fn comments_and_round_trip() {
        let m = toy();
        let imported = import_solution(&m, "# header\nv_4_1 1   # picked\np_4_1 0.03\n").unwrap();
        assert_eq!(imported.solution.values, vec![1.0, 0.03]);
        assert_eq!(imported.solution.status, SolveStatus::Feasible);
        assert!(imported.missing.is_empty());
        let again = import_solution(&m, &write_solution(&m, &imported.solution)).unwrap();
        assert_eq!(again.solution.values, imported.solution.values);
    }

    #[test]
    fn unparseable_line_is_rejected() {
        assert!(matches!(
            import_solution(&toy(), "v_4_1 one\n"),
            Err(SolveError::SolutionSyntax { line: 1, .. })
        ));
    }
}
