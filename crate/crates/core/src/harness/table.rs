use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::metrics::EvalReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

/// Which way a metric improves; `None` for signed metrics reported without
/// a ratio.
pub fn direction(metric: &str) -> Option<Direction> {
    match metric {
        "acc_forget" | "acc_recover" | "acc_retain" | "truth_acc" | "knowmem_retain" | "model_utility" => Some(Direction::Up),
        "priv_leak" => None,
        _ => Some(Direction::Down),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Ideal,
    Target,
    Method,
    Baseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub kind: RowKind,
    pub report: EvalReport,
}

/// Reference-relative performance: `value/ref` for ↑ metrics and `ref/value`
/// for ↓ metrics. `None` means the value matches or beats the reference.
pub fn ratio(value: f64, reference: f64, dir: Direction) -> Option<f64> {
    match dir {
        Direction::Up if value < reference => Some(value / reference),
        Direction::Down if value > reference => Some(reference / value),
        _ => None,
    }
}

pub fn format_ratio(r: Option<f64>) -> String {
    match r {
        None => "+100%".into(),
        Some(r) => format!("{:.1}%", r * 100.0),
    }
}

/// Reference value of a metric: the ideal row's, or when it lacks the metric
/// the best baseline's.
fn reference(rows: &[ReportRow], metric: &str, dir: Direction) -> Option<f64> {
    let ideal = rows.iter().find(|r| r.kind == RowKind::Ideal)?;
    ideal.report.get(metric).or_else(|| {
        let vals = rows.iter().filter(|r| r.kind == RowKind::Baseline).filter_map(|r| r.report.get(metric));
        match dir {
            Direction::Up => vals.fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.max(v)))),
            Direction::Down => vals.fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.min(v)))),
        }
    })
}

/// Ratio-to-reference tables. Rows keep input order; metric columns are in
/// name order.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioTable {
    pub metrics: Vec<String>,
    /// Per row: label and per metric `(value, formatted ratio)`.
    pub rows: Vec<(String, Vec<(Option<f64>, String)>)>,
}

pub fn ratio_table(rows: &[ReportRow]) -> Result<RatioTable, HarnessError> {
    if !rows.iter().any(|r| r.kind == RowKind::Ideal) {
        return Err(HarnessError::Report("no ideal row".into()));
    }
    let metrics: Vec<String> = rows.iter().flat_map(|r| r.report.metrics.keys().cloned()).collect::<BTreeSet<_>>().into_iter().collect();
    let mut out = Vec::new();
    for r in rows {
        let cells = metrics
            .iter()
            .map(|m| {
                let v = r.report.get(m);
                let cell = match (v, direction(m)) {
                    (Some(v), Some(dir)) => match reference(rows, m, dir) {
                        Some(rf) => format_ratio(ratio(v, rf, dir)),
                        None => "-".into(),
                    },
                    _ => "-".into(),
                };
                (v, cell)
            })
            .collect();
        out.push((r.label.clone(), cells));
    }
    Ok(RatioTable { metrics, rows: out })
}

impl RatioTable {
    /// Long form: `method,metric,value,ratio`.
    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "metric", "value", "ratio"])?;
        for (label, cells) in &self.rows {
            for (m, (v, ratio)) in self.metrics.iter().zip(cells) {
                if let Some(v) = v {
                    w.write_record([label.as_str(), m, &format!("{v:.6}"), ratio])?;
                }
            }
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?).expect("csv is utf-8"))
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| method |");
        for m in &self.metrics {
            let _ = write!(s, " {m} |");
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(self.metrics.len()));
        s.push('\n');
        for (label, cells) in &self.rows {
            let _ = write!(s, "| {label} |");
            for (v, ratio) in cells {
                match v {
                    Some(v) => {
                        let _ = write!(s, " {v:.3} ({ratio}) |");
                    }
                    None => s.push_str(" - |"),
                }
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(pairs: &[(&str, f64)]) -> EvalReport {
        let mut r = EvalReport::default();
        for (k, v) in pairs {
            r.insert(k, *v).unwrap();
        }
        r
    }

    fn row(label: &str, kind: RowKind, pairs: &[(&str, f64)]) -> ReportRow {
        ReportRow { label: label.into(), kind, report: rep(pairs) }
    }

    #[test]
    fn hand_ratios() {
        assert_eq!(format_ratio(ratio(0.99, 0.99, Direction::Up)), "+100%");
        assert_eq!(format_ratio(ratio(0.45, 0.99, Direction::Up)), "45.5%");
        assert_eq!(format_ratio(ratio(0.05, 0.07, Direction::Down)), "+100%");
        assert_eq!(format_ratio(ratio(0.14, 0.07, Direction::Down)), "50.0%");
        assert_eq!(format_ratio(ratio(0.0, 0.0, Direction::Down)), "+100%");
    }

    #[test]
    fn missing_ideal_is_an_error() {
        let rows = [row("msa", RowKind::Method, &[("acc_retain", 0.5)])];
        assert!(matches!(ratio_table(&rows), Err(HarnessError::Report(_))));
    }

    #[test]
    fn table_uses_ideal_then_best_baseline() {
        let rows = [
            row("ideal", RowKind::Ideal, &[("acc_retain", 0.99)]),
            row("npo", RowKind::Baseline, &[("acc_retain", 0.5), ("es_forget", 0.2)]),
            row("gd", RowKind::Baseline, &[("es_forget", 0.1)]),
            row("msa", RowKind::Method, &[("acc_retain", 0.45), ("es_forget", 0.2), ("priv_leak", -3.0)]),
        ];
        let t = ratio_table(&rows).unwrap();
        assert_eq!(t.metrics, ["acc_retain", "es_forget", "priv_leak"]);
        let msa = &t.rows[3].1;
        assert_eq!(msa[0].1, "45.5%");
        // ideal lacks es_forget, so the best baseline (gd, 0.1) is the reference
        assert_eq!(msa[1].1, "50.0%");
        assert_eq!(msa[2].1, "-");
        let csv = t.to_csv().unwrap();
        assert!(csv.starts_with("method,metric,value,ratio\nideal,acc_retain,0.990000,+100%\n"));
        assert!(t.to_markdown().contains("| msa | 0.450 (45.5%) | 0.200 (50.0%) | -3.000 (-) |"));
        assert_eq!(csv, ratio_table(&rows).unwrap().to_csv().unwrap());
    }
}
