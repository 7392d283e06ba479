use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MetricError;

/// Metrics that are not fractions in `[0, 1]`.
const UNBOUNDED: &[&str] = &["priv_leak", "min_k", "min_k_pp"];

fn bounded(name: &str) -> bool {
    !UNBOUNDED.iter().any(|u| name == *u || name.starts_with(&format!("{u}_")) || name.ends_with(&format!("_{u}")))
}

/// Named metric values with the split sizes, seeds and model identifiers
/// they were computed from. Maps are ordered, so serialization is stable.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: BTreeMap<String, f64>,
    pub split_sizes: BTreeMap<String, usize>,
    pub seeds: Vec<u64>,
    pub models: BTreeMap<String, String>,
}

impl EvalReport {
    /// Adds a metric. Rejects non-finite values and out-of-range fractions.
    pub fn insert(&mut self, name: &str, value: f64) -> Result<(), MetricError> {
        if !value.is_finite() || (bounded(name) && !(0.0..=1.0).contains(&value)) {
            return Err(MetricError::NonFinite { name: name.to_string(), value });
        }
        self.metrics.insert(name.to_string(), value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn to_json(&self) -> Result<String, MetricError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, MetricError> {
        let r: EvalReport = serde_json::from_str(s)?;
        for (k, &v) in &r.metrics {
            let mut probe = EvalReport::default();
            probe.insert(k, v)?;
        }
        Ok(r)
    }

    /// `metric,value` rows in name order.
    pub fn to_csv(&self) -> Result<String, MetricError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "value"])?;
        for (k, v) in &self.metrics {
            w.write_record([k.as_str(), &format!("{v}")])?;
        }
        let bytes = w.into_inner().map_err(|e| MetricError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| metric | value |\n|---|---|\n");
        for (k, v) in &self.metrics {
            let _ = writeln!(s, "| {k} | {v:.4} |");
        }
        s
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), MetricError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        std::fs::write(dir.join("report.csv"), self.to_csv()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_values() {
        let mut r = EvalReport::default();
        assert!(r.insert("acc_forget", f64::NAN).is_err());
        assert!(r.insert("acc_forget", 1.5).is_err());
        assert!(r.insert("priv_leak", -100.0).is_ok());
        assert!(r.insert("forget_min_k", -4.0).is_ok());
        assert!(r.insert("priv_leak", f64::INFINITY).is_err());
    }

    #[test]
    fn serialization_is_stable() {
        let mut a = EvalReport::default();
        a.insert("mia_auc", 0.5).unwrap();
        a.insert("acc_forget", 0.25).unwrap();
        let mut b = EvalReport::default();
        b.insert("acc_forget", 0.25).unwrap();
        b.insert("mia_auc", 0.5).unwrap();
        assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
        assert_eq!(a.to_csv().unwrap(), "metric,value\nacc_forget,0.25\nmia_auc,0.5\n");
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(EvalReport::from_json(&a.to_json().unwrap()).unwrap(), a);
        assert!(a.to_markdown().contains("| acc_forget | 0.2500 |"));
    }
}
