//! Report rows, pass rule and artifact writers.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Quantity {
    #[serde(rename = "L2_ratio")]
    L2Ratio,
    #[serde(rename = "grad_ratio")]
    GradRatio,
    #[serde(rename = "hess_ratio")]
    HessRatio,
    #[serde(rename = "sup_ratio")]
    SupRatio,
    #[serde(rename = "grad_sup_ratio")]
    GradSupRatio,
    #[serde(rename = "domain_equiv_ratio")]
    DomainEquivRatio,
    #[serde(rename = "dissipativity")]
    Dissipativity,
    #[serde(rename = "weak_identity")]
    WeakIdentity,
    #[serde(rename = "strong_residual")]
    StrongResidual,
    #[serde(rename = "n_slope")]
    NSlope,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::L2Ratio => "L2_ratio",
            Quantity::GradRatio => "grad_ratio",
            Quantity::HessRatio => "hess_ratio",
            Quantity::SupRatio => "sup_ratio",
            Quantity::GradSupRatio => "grad_sup_ratio",
            Quantity::DomainEquivRatio => "domain_equiv_ratio",
            Quantity::Dissipativity => "dissipativity",
            Quantity::WeakIdentity => "weak_identity",
            Quantity::StrongResidual => "strong_residual",
            Quantity::NSlope => "n_slope",
        }
    }

    /// Standard errors allowed above the bound: 2 for the slope probe, 3
    /// otherwise.
    pub fn sigmas(self) -> f64 {
        if self == Quantity::NSlope {
            2.0
        } else {
            3.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub weight: String,
    pub n: usize,
    pub lambda: Option<f64>,
    pub quantity: Quantity,
    pub test_function: String,
    pub detail: String,
    pub estimate: f64,
    pub std_error: f64,
    pub bound: f64,
    /// Deterministic discretization allowance used in the pass rule.
    pub allowance: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Row key without the numbers.
#[derive(Debug, Clone)]
pub struct RowKey {
    pub weight: String,
    pub n: usize,
    pub lambda: Option<f64>,
    pub test_function: String,
    pub detail: String,
}

impl EstimateRow {
    /// `pass <=> estimate <= bound + k std_error + allowance`, all finite.
    pub fn checked(key: &RowKey, quantity: Quantity, estimate: f64, std_error: f64, bound: f64, allowance: f64) -> Self {
        let finite = estimate.is_finite() && std_error.is_finite() && bound.is_finite() && allowance.is_finite();
        let pass = finite && estimate <= bound + quantity.sigmas() * std_error + allowance;
        EstimateRow {
            weight: key.weight.clone(),
            n: key.n,
            lambda: key.lambda,
            quantity,
            test_function: key.test_function.clone(),
            detail: key.detail.clone(),
            estimate,
            std_error,
            bound,
            allowance,
            margin: bound - estimate,
            pass,
        }
    }

    /// A row recording a solver failure.
    pub fn failed(key: &RowKey, quantity: Quantity, bound: f64, message: &str) -> Self {
        let mut r = Self::checked(key, quantity, f64::NAN, 0.0, bound, 0.0);
        r.detail = format!("{} error: {message}", key.detail).trim().to_string();
        r.estimate = 0.0;
        r.margin = 0.0;
        r
    }

    fn order(&self, o: &Self) -> Ordering {
        let lam = |r: &Self| r.lambda.unwrap_or(f64::NEG_INFINITY);
        self.weight
            .cmp(&o.weight)
            .then(self.n.cmp(&o.n))
            .then(lam(self).total_cmp(&lam(o)))
            .then(self.quantity.cmp(&o.quantity))
            .then(self.test_function.cmp(&o.test_function))
            .then(self.detail.cmp(&o.detail))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EstimateReport {
    pub rows: Vec<EstimateRow>,
}

impl EstimateReport {
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| a.order(b));
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failing(&self) -> impl Iterator<Item = &EstimateRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rows serialize")
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let total = self.rows.len();
        let failed = self.failing().count();
        let _ = writeln!(s, "{} rows, {} passed, {} failed", total, total - failed, failed);
        let mut quantities: Vec<Quantity> = self.rows.iter().map(|r| r.quantity).collect();
        quantities.sort();
        quantities.dedup();
        for q in quantities {
            let rows: Vec<_> = self.rows.iter().filter(|r| r.quantity == q).collect();
            let f = rows.iter().filter(|r| !r.pass).count();
            let _ = writeln!(s, "  {:<20} {:>4} rows  {:>4} failed", q.name(), rows.len(), f);
        }
        if failed > 0 {
            let _ = writeln!(s, "failing rows:");
            for r in self.failing() {
                let _ = writeln!(
                    s,
                    "  {} n={} lambda={} {} {} {}: estimate {:.6} bound {:.6} se {:.2e} allowance {:.2e}",
                    r.weight,
                    r.n,
                    r.lambda.map(|l| l.to_string()).unwrap_or_else(|| "-".into()),
                    r.quantity.name(),
                    r.test_function,
                    r.detail,
                    r.estimate,
                    r.bound,
                    r.std_error,
                    r.allowance
                );
            }
        }
        s
    }

    /// `report.json`, `tables/<quantity>.csv` and `summary.txt` under `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join("tables"))?;
        std::fs::write(dir.join("report.json"), self.to_json())?;
        std::fs::write(dir.join("summary.txt"), self.summary())?;
        let mut quantities: Vec<Quantity> = self.rows.iter().map(|r| r.quantity).collect();
        quantities.sort();
        quantities.dedup();
        for q in quantities {
            let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join("tables").join(format!("{}.csv", q.name())))?);
            writeln!(out, "weight,n,lambda,test_function,detail,estimate,std_error,bound,allowance,margin,pass")?;
            for r in self.rows.iter().filter(|r| r.quantity == q) {
                writeln!(
                    out,
                    "{},{},{},{},{},{:e},{:e},{:e},{:e},{:e},{}",
                    r.weight,
                    r.n,
                    r.lambda.map(|l| l.to_string()).unwrap_or_default(),
                    r.test_function,
                    r.detail.replace(',', ";"),
                    r.estimate,
                    r.std_error,
                    r.bound,
                    r.allowance,
                    r.margin,
                    r.pass
                )?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> RowKey {
        RowKey { weight: "zero".into(), n: 1, lambda: Some(1.0), test_function: "tanh".into(), detail: String::new() }
    }

    #[test]
    fn pass_rule() {
        let r = EstimateRow::checked(&key(), Quantity::L2Ratio, 1.02, 0.01, 1.0, 0.0);
        assert!(r.pass);
        assert!((r.margin + 0.02).abs() < 1e-15);
        assert!(!EstimateRow::checked(&key(), Quantity::L2Ratio, 1.05, 0.01, 1.0, 0.0).pass);
        assert!(EstimateRow::checked(&key(), Quantity::L2Ratio, 1.05, 0.01, 1.0, 0.03).pass);
        assert!(!EstimateRow::checked(&key(), Quantity::NSlope, 0.025, 0.01, 0.0, 0.0).pass);
        assert!(!EstimateRow::checked(&key(), Quantity::L2Ratio, f64::NAN, 0.0, 1.0, 0.0).pass);
    }

    #[test]
    fn json_field_names() {
        let r = EstimateRow::checked(&key(), Quantity::GradSupRatio, 0.5, 0.0, 1.0, 0.0);
        let v: serde_json::Value = serde_json::to_value(EstimateReport { rows: vec![r] }).unwrap();
        let row = &v[0];
        for f in ["weight", "n", "lambda", "quantity", "estimate", "std_error", "bound", "margin", "pass"] {
            assert!(row.get(f).is_some(), "{f}");
        }
        assert_eq!(row["quantity"], "grad_sup_ratio");
    }
}
