use restore_core::verify::VerificationReport;
use restore_core::RestorationPlan;

/// A rectangular text table rendered as aligned columns or CSV.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Lines printed under the aligned table, omitted from CSV.
    pub footer: Vec<String>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn to_text(&self) -> String {
        let widths: Vec<usize> = (0..self.headers.len())
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].chars().count())
                    .chain([self.headers[c].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(cell, &w)| format!("{cell:<w$}"))
                .collect();
            padded.join(" | ").trim_end().to_string()
        };
        let mut out = vec![line(&self.headers)];
        out.push(
            widths
                .iter()
                .map(|&w| "-".repeat(w))
                .collect::<Vec<_>>()
                .join("-+-"),
        );
        out.extend(self.rows.iter().map(|r| line(r)));
        if !self.footer.is_empty() {
            out.push(String::new());
            out.extend(self.footer.iter().cloned());
        }
        out.join("\n") + "\n"
    }

    pub fn to_csv(&self) -> String {
        let field = |s: &String| {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.clone()
            }
        };
        let mut out = String::new();
        for row in std::iter::once(&self.headers).chain(&self.rows) {
            out += &row.iter().map(field).collect::<Vec<_>>().join(",");
            out.push('\n');
        }
        out
    }
}

pub fn fixed(x: Option<f64>, digits: usize) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:.digits$}"),
        _ => "-".into(),
    }
}

/// One row per restored network in the layout used for published results:
/// DER, critical loads, supply paths, supply duration and losses.
pub fn plan_table(plan: &RestorationPlan, report: &VerificationReport) -> Table {
    let mut t = Table::new(&[
        "DER",
        "Critical Loads",
        "Nodes on Restoration Path",
        "T_k (h)",
        "Losses (%)",
    ]);
    for (rsn, checked) in plan.rsns.iter().zip(&report.rsns) {
        let loads = if rsn.critical_loads.is_empty() {
            "-".to_string()
        } else {
            rsn.critical_loads
                .iter()
                .map(|c| format!("CL-{c}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let paths: Vec<String> = rsn
            .critical_loads
            .iter()
            .filter_map(|c| rsn.supply_path(c))
            .map(|p| p.join("-"))
            .collect();
        t.push(vec![
            format!("DER-{}", rsn.der),
            loads,
            if paths.is_empty() {
                "-".into()
            } else {
                paths.join(" ; ")
            },
            fixed(rsn.t_hours, 2),
            fixed(checked.loss_percent, 4),
        ]);
    }
    t.footer = vec![
        format!(
            "picked {} of {} critical loads; U_R = {:.4}; U_RC = {:.4}; T_net = {}",
            plan.picked_critical_loads,
            plan.picked_critical_loads + plan.unserved_critical_loads.len(),
            plan.u_r,
            plan.u_rc,
            fixed(plan.t_net, 2)
        ),
        format!(
            "R_P = {:.6}; average bias = {} h",
            report.metrics.reliability_total,
            fixed(report.metrics.average_bias, 3)
        ),
    ];
    t
}

/// Per-network audit summary.
pub fn report_table(report: &VerificationReport) -> Table {
    let mut t = Table::new(&[
        "DER",
        "Radial",
        "Nodes",
        "Lines",
        "U_R^k",
        "R_P",
        "T_k (h)",
        "Losses (%)",
        "Min V (pu)",
        "Diagnostics",
    ]);
    for r in &report.rsns {
        t.push(vec![
            format!("DER-{}", r.der),
            if r.radial_ok { "yes" } else { "no" }.into(),
            r.nodes.to_string(),
            r.lines.to_string(),
            format!("{:.4}", r.u_r),
            format!("{:.6}", r.reliability),
            fixed(r.t_hours, 2),
            fixed(r.loss_percent, 4),
            fixed(r.min_voltage, 5),
            if r.diagnostics.is_empty() {
                "-".into()
            } else {
                r.diagnostics.join("; ")
            },
        ]);
    }
    let m = &report.metrics;
    t.footer = vec![
        format!("U_P = {}; U_R = {:.4}; U_RC = {:.4}", m.u_p, m.u_r, m.u_rc),
        format!(
            "T_net = {} h; average bias = {} h; metrics consistent: {}",
            fixed(m.t_net, 3),
            fixed(m.average_bias, 3),
            if m.consistent { "yes" } else { "no" }
        ),
        format!(
            "verification {}",
            if report.ok { "passed" } else { "FAILED" }
        ),
    ];
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_and_csv() {
        let mut t = Table::new(&["a", "long header"]);
        t.push(vec!["wide cell".into(), "x, y".into()]);
        assert_eq!(
            t.to_text(),
            "a         | long header\n----------+------------\nwide cell | x, y\n"
        );
        assert_eq!(t.to_csv(), "a,long header\nwide cell,\"x, y\"\n");
    }
}
