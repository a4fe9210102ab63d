//! Fixed-format MPS writer and reader.
//!
//! Names longer than eight characters (or containing blanks) are replaced by
//! a short hashed name; every replacement is listed in a `* MAP short long`
//! comment so the reader restores the original names. Numbers are written in
//! their shortest round-trip form, which can overrun the 12-column number
//! field; readers that split on whitespace accept this.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use crate::model::{MilpModel, Sense};

use super::SolveError;

const OBJECTIVE_ROW: &str = "OBJ";

/// MPS-safe names for the model's columns and rows, in index order.
pub fn short_names(model: &MilpModel) -> (Vec<String>, Vec<String>) {
    let columns = shorten(model.variables.iter().map(|v| v.name.as_str()), &[]);
    let rows = shorten(
        model.constraints.iter().map(|c| c.label.as_str()),
        &[OBJECTIVE_ROW],
    );
    (columns, rows)
}

fn shorten<'a>(names: impl Iterator<Item = &'a str>, reserved: &[&str]) -> Vec<String> {
    let names: Vec<&str> = names.collect();
    let mut taken: HashSet<String> = reserved.iter().map(|s| s.to_string()).collect();
    let fits = |n: &str| {
        n.len() <= 8
            && !n.is_empty()
            && n.bytes().all(|b| b.is_ascii_graphic())
            && !n.starts_with('*')
            && !reserved.contains(&n)
    };
    // names that fit keep priority over hashed ones
    for &n in &names {
        if fits(n) {
            taken.insert(n.to_string());
        }
    }
    let mut seen = HashSet::new();
    names
        .iter()
        .map(|&n| {
            if fits(n) && seen.insert(n.to_string()) {
                return n.to_string();
            }
            let stem: String = n
                .chars()
                .filter(|c| c.is_ascii_alphanumeric())
                .take(3)
                .collect();
            let mut salt = 0u64;
            loop {
                let candidate = format!("{stem}~{}", base36(fnv1a(n, salt) % 36u64.pow(4), 4));
                if taken.insert(candidate.clone()) {
                    return candidate;
                }
                salt += 1;
            }
        })
        .collect()
}

fn fnv1a(text: &str, salt: u64) -> u64 {
    let mut h = 0xcbf29ce484222325u64 ^ salt.wrapping_mul(0x9e3779b97f4a7c15);
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn base36(mut x: u64, width: usize) -> String {
    const DIGITS: &[u8] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";
    let mut out = vec![b'0'; width];
    for slot in out.iter_mut().rev() {
        *slot = DIGITS[(x % 36) as usize];
        x /= 36;
    }
    String::from_utf8(out).expect("ascii")
}

fn number(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:?}")
    }
}

fn entry(out: &mut String, code: &str, a: &str, b: &str, value: Option<f64>) {
    let mut line = format!(" {code:<2} {a:<8}  {b:<8}");
    if let Some(v) = value {
        let _ = write!(line, "  {}", number(v));
    }
    out.push_str(line.trim_end());
    out.push('\n');
}

/// Writes `model` in fixed-format MPS.
pub fn export_mps(model: &MilpModel) -> String {
    let (cols, rows) = short_names(model);
    let mut out = String::new();
    out.push_str("NAME          RESTORE\n");
    for (short, v) in cols.iter().zip(&model.variables) {
        if *short != v.name {
            let _ = writeln!(out, "* MAP C {short} {}", v.name);
        }
    }
    for (short, c) in rows.iter().zip(&model.constraints) {
        if *short != c.label {
            let _ = writeln!(out, "* MAP R {short} {}", c.label);
        }
    }

    out.push_str("ROWS\n");
    entry(&mut out, "N", OBJECTIVE_ROW, "", None);
    for (short, c) in rows.iter().zip(&model.constraints) {
        let code = match c.sense {
            Sense::Le => "L",
            Sense::Eq => "E",
            Sense::Ge => "G",
        };
        entry(&mut out, code, short, "", None);
    }

    let mut by_column: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.num_variables()];
    for (i, c) in model.constraints.iter().enumerate() {
        for &(j, a) in &c.terms {
            by_column[j].push((i, a));
        }
    }
    let mut cost = vec![0.0; model.num_variables()];
    for &(j, c) in &model.objective {
        cost[j] = c;
    }

    out.push_str("COLUMNS\n");
    let mut in_marker = false;
    let mut marker = 0;
    for (j, v) in model.variables.iter().enumerate() {
        if v.integer != in_marker {
            let kind = if v.integer { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(out, "    MARKER{marker:<4}'MARKER'                 {kind}");
            marker += 1;
            in_marker = v.integer;
        }
        // every column appears at least once, through the objective row
        if cost[j] != 0.0 || by_column[j].is_empty() {
            entry(&mut out, "", &cols[j], OBJECTIVE_ROW, Some(cost[j]));
        }
        for &(i, a) in &by_column[j] {
            entry(&mut out, "", &cols[j], &rows[i], Some(a));
        }
    }
    if in_marker {
        let _ = writeln!(
            out,
            "    MARKER{marker:<4}'MARKER'                 'INTEND'"
        );
    }

    out.push_str("RHS\n");
    for (short, c) in rows.iter().zip(&model.constraints) {
        if c.rhs != 0.0 {
            entry(&mut out, "", "RHS", short, Some(c.rhs));
        }
    }

    out.push_str("BOUNDS\n");
    for (short, v) in cols.iter().zip(&model.variables) {
        let (lo, hi) = (v.lower, v.upper);
        if v.integer && lo == 0.0 && hi == 1.0 {
            entry(&mut out, "BV", "BND", short, None);
        } else if lo == hi {
            entry(&mut out, "FX", "BND", short, Some(lo));
        } else if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            entry(&mut out, "FR", "BND", short, None);
        } else {
            if lo == f64::NEG_INFINITY {
                entry(&mut out, "MI", "BND", short, None);
            } else if lo != 0.0 || v.integer {
                entry(&mut out, "LO", "BND", short, Some(lo));
            }
            if hi == f64::INFINITY {
                if v.integer {
                    entry(&mut out, "PL", "BND", short, None);
                }
            } else {
                entry(&mut out, "UP", "BND", short, Some(hi));
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Rows,
    Columns,
    Rhs,
    Bounds,
    Done,
}

/// Reads an MPS document (fixed or free format, whitespace separated names)
/// back into a model. Names are restored through `* MAP` comments.
pub fn import_mps(text: &str) -> Result<MilpModel, SolveError> {
    let mut col_map: HashMap<String, String> = HashMap::new();
    let mut row_map: HashMap<String, String> = HashMap::new();
    let mut section = Section::None;
    let mut objective_row: Option<String> = None;
    let mut rows: Vec<(String, Sense)> = Vec::new();
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut columns: Vec<(String, bool)> = Vec::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut entries: Vec<BTreeMap<usize, f64>> = Vec::new();
    let mut cost: BTreeMap<usize, f64> = BTreeMap::new();
    let mut rhs: HashMap<usize, f64> = HashMap::new();
    let mut bounds: Vec<(f64, f64)> = Vec::new();
    let mut integer = false;

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let err = |message: String| SolveError::Mps {
            line: line_no,
            message,
        };
        if let Some(comment) = raw.strip_prefix('*') {
            let mut parts = comment.trim_start().splitn(4, ' ');
            if parts.next() == Some("MAP") {
                let (kind, short, long) = (parts.next(), parts.next(), parts.next());
                match (kind, short, long) {
                    (Some("C"), Some(s), Some(l)) => col_map.insert(s.to_string(), l.to_string()),
                    (Some("R"), Some(s), Some(l)) => row_map.insert(s.to_string(), l.to_string()),
                    _ => return Err(err("malformed MAP comment".into())),
                };
            }
            continue;
        }
        if raw.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') && !raw.starts_with('\t') {
            section = match tokens[0] {
                "NAME" => Section::None,
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => Section::Done,
                "RANGES" => return Err(err("RANGES section is not supported".into())),
                other => return Err(err(format!("unknown section {other}"))),
            };
            continue;
        }
        let value = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| err(format!("bad number \"{s}\"")))
        };
        match section {
            Section::Rows => {
                let [code, name] = tokens[..] else {
                    return Err(err("expected row type and name".into()));
                };
                let sense = match code {
                    "N" => {
                        if objective_row.is_none() {
                            objective_row = Some(name.to_string());
                        }
                        continue;
                    }
                    "L" => Sense::Le,
                    "E" => Sense::Eq,
                    "G" => Sense::Ge,
                    other => return Err(err(format!("unknown row type {other}"))),
                };
                row_index.insert(name.to_string(), rows.len());
                rows.push((name.to_string(), sense));
            }
            Section::Columns => {
                if tokens.len() >= 3 && tokens[1].trim_matches('\'') == "MARKER" {
                    integer = match tokens[2].trim_matches('\'') {
                        "INTORG" => true,
                        "INTEND" => false,
                        other => return Err(err(format!("unknown marker {other}"))),
                    };
                    continue;
                }
                if tokens.len() != 3 && tokens.len() != 5 {
                    return Err(err("expected column, row, value [, row, value]".into()));
                }
                let name = tokens[0];
                let j = *col_index.entry(name.to_string()).or_insert_with(|| {
                    columns.push((name.to_string(), integer));
                    entries.push(BTreeMap::new());
                    bounds.push((0.0, f64::INFINITY));
                    columns.len() - 1
                });
                for pair in tokens[1..].chunks(2) {
                    let a = value(pair[1])?;
                    if Some(pair[0]) == objective_row.as_deref() {
                        cost.insert(j, a);
                    } else {
                        let &i = row_index
                            .get(pair[0])
                            .ok_or_else(|| err(format!("unknown row {}", pair[0])))?;
                        entries[j].insert(i, a);
                    }
                }
            }
            Section::Rhs => {
                if tokens.len() != 3 && tokens.len() != 5 {
                    return Err(err("expected set, row, value [, row, value]".into()));
                }
                for pair in tokens[1..].chunks(2) {
                    if Some(pair[0]) == objective_row.as_deref() {
                        return Err(err("objective constant is not supported".into()));
                    }
                    let &i = row_index
                        .get(pair[0])
                        .ok_or_else(|| err(format!("unknown row {}", pair[0])))?;
                    rhs.insert(i, value(pair[1])?);
                }
            }
            Section::Bounds => {
                if tokens.len() < 3 {
                    return Err(err("expected bound type, set and column".into()));
                }
                let &j = col_index
                    .get(tokens[2])
                    .ok_or_else(|| err(format!("unknown column {}", tokens[2])))?;
                let needs_value = !matches!(tokens[0], "FR" | "MI" | "PL" | "BV");
                let x = if needs_value {
                    let raw = tokens
                        .get(3)
                        .ok_or_else(|| err("missing bound value".into()))?;
                    value(raw)?
                } else {
                    0.0
                };
                let b = &mut bounds[j];
                match tokens[0] {
                    "UP" | "UI" => b.1 = x,
                    "LO" | "LI" => b.0 = x,
                    "FX" => *b = (x, x),
                    "FR" => *b = (f64::NEG_INFINITY, f64::INFINITY),
                    "MI" => b.0 = f64::NEG_INFINITY,
                    "PL" => b.1 = f64::INFINITY,
                    "BV" => {
                        *b = (0.0, 1.0);
                        columns[j].1 = true;
                    }
                    other => return Err(err(format!("unknown bound type {other}"))),
                }
                if matches!(tokens[0], "UI" | "LI") {
                    columns[j].1 = true;
                }
            }
            Section::None | Section::Done => return Err(err("data outside a section".into())),
        }
    }
    if section != Section::Done {
        return Err(SolveError::Mps {
            line: text.lines().count(),
            message: "missing ENDATA".into(),
        });
    }

    let mut model = MilpModel::new();
    for (j, (name, is_int)) in columns.iter().enumerate() {
        let long = col_map.get(name).cloned().unwrap_or_else(|| name.clone());
        model.add_variable(long, bounds[j].0, bounds[j].1, *is_int);
    }
    let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows.len()];
    for (j, col) in entries.iter().enumerate() {
        for (&i, &a) in col {
            by_row[i].push((j, a));
        }
    }
    for (i, ((name, sense), terms)) in rows.into_iter().zip(by_row).enumerate() {
        let label = row_map.get(&name).cloned().unwrap_or(name);
        model.add_constraint(label, terms, sense, rhs.get(&i).copied().unwrap_or(0.0));
    }
    model.set_objective(cost.into_iter().collect());
    Ok(model)
}
