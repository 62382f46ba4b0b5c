//! Verification output record: labeled scalars, time series, fitted rate
//! exponents. Serializes to JSON and to flat CSV (one row per series point).
//! All maps are ordered so serialized artifacts are byte-stable.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Series {
    pub t: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PowerFit {
    /// fitted exponent q in y ~ C t^q
    pub exponent: f64,
    /// fitted coefficient C
    pub coeff: f64,
    /// max relative residual of the fit in log space
    pub max_log_residual: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct NormReport {
    pub scalars: BTreeMap<String, f64>,
    pub series: BTreeMap<String, Series>,
    pub fits: BTreeMap<String, PowerFit>,
    pub verdicts: BTreeMap<String, bool>,
    pub meta: BTreeMap<String, String>,
}

impl NormReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn scalar(&mut self, name: &str, v: f64) -> &mut Self {
        self.scalars.insert(name.to_string(), v);
        self
    }

    pub fn series(&mut self, name: &str, t: Vec<f64>, v: Vec<f64>) -> &mut Self {
        assert_eq!(t.len(), v.len());
        self.series.insert(name.to_string(), Series { t, v });
        self
    }

    pub fn fit(&mut self, name: &str, f: PowerFit) -> &mut Self {
        self.fits.insert(name.to_string(), f);
        self
    }

    pub fn verdict(&mut self, name: &str, pass: bool) -> &mut Self {
        self.verdicts.insert(name.to_string(), pass);
        self
    }

    pub fn meta(&mut self, key: &str, value: &str) -> &mut Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn all_verdicts_pass(&self) -> bool {
        self.verdicts.values().all(|&v| v)
    }

    pub fn merge(&mut self, prefix: &str, other: &NormReport) {
        for (k, v) in &other.scalars {
            self.scalars.insert(format!("{prefix}.{k}"), *v);
        }
        for (k, v) in &other.series {
            self.series.insert(format!("{prefix}.{k}"), v.clone());
        }
        for (k, v) in &other.fits {
            self.fits.insert(format!("{prefix}.{k}"), *v);
        }
        for (k, v) in &other.verdicts {
            self.verdicts.insert(format!("{prefix}.{k}"), *v);
        }
        for (k, v) in &other.meta {
            self.meta.insert(format!("{prefix}.{k}"), v.clone());
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    /// Flat CSV of all series: `series,index,t,value` with a header row.
    pub fn series_csv(&self) -> String {
        let mut out = String::from("series,index,t,value\n");
        for (name, s) in &self.series {
            for (i, (t, v)) in s.t.iter().zip(&s.v).enumerate() {
                let _ = writeln!(out, "{name},{i},{t},{v}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mut r = NormReport::new();
        r.scalar("energy", 1.25)
            .series("lhs", vec![0.1, 0.2], vec![1.0, 2.0])
            .fit("rate", PowerFit { exponent: 1.0, coeff: 3.0, max_log_residual: 0.0 })
            .verdict("monotone", true)
            .meta("grid", "2x128");
        let s = r.to_json();
        let back = NormReport::from_json(&s).unwrap();
        assert_eq!(r, back);
    }

    #[test]
    fn csv_has_one_row_per_point() {
        let mut r = NormReport::new();
        r.series("a", vec![0.5, 1.5, 2.5], vec![1.0, 2.0, 3.0]);
        let csv = r.series_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("series,index,t,value"));
        assert!(csv.contains("a,1,1.5,2"));
    }

    #[test]
    fn verdict_aggregation() {
        let mut r = NormReport::new();
        r.verdict("x", true).verdict("y", false);
        assert!(!r.all_verdicts_pass());
    }
}
