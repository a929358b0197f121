//! Column-oriented numeric tables. Missing values are `NaN` in memory and `NA` on disk.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, StatsError};

/// Variables with at most this many distinct integer values count as discrete.
pub const MAX_DISCRETE_LEVELS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for n in &names {
            if !seen.insert(n) {
                return Err(StatsError::DuplicateColumn(n.clone()));
            }
        }
        if names.len() != columns.len() {
            return Err(StatsError::InvalidData(format!("{} names for {} columns", names.len(), columns.len())));
        }
        let expected = columns.first().map_or(0, Vec::len);
        for (n, c) in names.iter().zip(&columns) {
            if c.len() != expected {
                return Err(StatsError::RaggedColumn { column: n.clone(), got: c.len(), expected });
            }
        }
        Ok(Dataset { names, columns })
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn has(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| StatsError::UnknownColumn(name.to_string()))
    }

    pub fn push_column(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if self.has(name) {
            return Err(StatsError::DuplicateColumn(name.to_string()));
        }
        if !self.columns.is_empty() && values.len() != self.n_rows() {
            return Err(StatsError::RaggedColumn { column: name.into(), got: values.len(), expected: self.n_rows() });
        }
        self.names.push(name.to_string());
        self.columns.push(values);
        Ok(())
    }

    /// Rows where `keep` is true, in order.
    pub fn filter_rows(&self, keep: &[bool]) -> Dataset {
        let columns = self
            .columns
            .iter()
            .map(|c| c.iter().zip(keep).filter(|(_, k)| **k).map(|(v, _)| *v).collect())
            .collect();
        Dataset { names: self.names.clone(), columns }
    }

    /// Discrete means: no missing values, integer-valued, few levels.
    pub fn is_discrete(&self, name: &str) -> Result<bool> {
        Ok(is_discrete(self.column(name)?))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut columns = vec![Vec::new(); names.len()];
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for (j, field) in rec.iter().enumerate() {
                let v = if field.is_empty() || field == "NA" {
                    f64::NAN
                } else {
                    field.parse::<f64>().map_err(|_| StatsError::Parse {
                        line: i + 2,
                        column: names[j].clone(),
                        value: field.to_string(),
                    })?
                };
                columns[j].push(v);
            }
        }
        Dataset::new(names, columns)
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.names)?;
        for i in 0..self.n_rows() {
            w.write_record(self.columns.iter().map(|c| format_value(c[i])))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.to_writer(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v}")
    }
}

pub fn is_discrete(values: &[f64]) -> bool {
    let mut levels = BTreeSet::new();
    for &v in values {
        if !v.is_finite() || v.fract() != 0.0 {
            return false;
        }
        levels.insert(v as i64);
        if levels.len() > MAX_DISCRETE_LEVELS {
            return false;
        }
    }
    true
}

/// Which columns play which part in an estimation run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub struct Roles {
    pub treatment: String,
    pub selection: String,
    pub outcome_proxy: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub strata: Vec<String>,
    #[serde(default)]
    pub heterogeneity: Vec<String>,
}

impl Roles {
    pub fn new(treatment: &str, selection: &str, outcome: &str, covariates: &[&str]) -> Self {
        Roles {
            treatment: treatment.into(),
            selection: selection.into(),
            outcome_proxy: outcome.into(),
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }
}

/// How `P(D=1|X)` is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Propensity {
    Estimate,
    /// Randomized design with a known constant share.
    Known(f64),
}

/// Validated arrays for the estimators. `y` is `NaN` exactly where `s == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisData {
    pub d: Vec<f64>,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    /// Row-major covariate matrix (may have zero columns).
    pub x: Vec<Vec<f64>>,
    pub covariate_names: Vec<String>,
    pub propensity: Propensity,
}

impl AnalysisData {
    pub fn n(&self) -> usize {
        self.d.len()
    }

    /// Validates roles and the proxy integrity rule: the outcome is present exactly where
    /// selection is 1.
    pub fn from_dataset(data: &Dataset, roles: &Roles, propensity: Propensity) -> Result<Self> {
        let d = data.column(&roles.treatment)?.to_vec();
        let s = data.column(&roles.selection)?.to_vec();
        let y = data.column(&roles.outcome_proxy)?.to_vec();
        for (name, col) in [(&roles.treatment, &d), (&roles.selection, &s)] {
            if let Some(i) = col.iter().position(|v| *v != 0.0 && *v != 1.0) {
                return Err(StatsError::InvalidData(format!("`{name}` must be binary without missing values (row {})", i + 1)));
            }
        }
        for i in 0..y.len() {
            match (s[i] == 1.0, y[i].is_nan()) {
                (true, true) => {
                    return Err(StatsError::InvalidData(format!(
                        "row {}: `{}` is missing although `{}` = 1",
                        i + 1,
                        roles.outcome_proxy,
                        roles.selection
                    )))
                }
                (false, false) => {
                    return Err(StatsError::InvalidData(format!(
                        "row {}: `{}` is present although `{}` = 0",
                        i + 1,
                        roles.outcome_proxy,
                        roles.selection
                    )))
                }
                _ => {}
            }
            if !y[i].is_nan() && !y[i].is_finite() {
                return Err(StatsError::InvalidData(format!("row {}: non-finite outcome", i + 1)));
            }
        }
        let cols: Vec<&[f64]> = roles.covariates.iter().map(|c| data.column(c)).collect::<Result<_>>()?;
        for (name, c) in roles.covariates.iter().zip(&cols) {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(StatsError::InvalidData(format!("covariate `{name}` has missing or non-finite values")));
            }
        }
        let x = (0..d.len()).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        if d.iter().all(|v| *v == 1.0) || d.iter().all(|v| *v == 0.0) {
            return Err(StatsError::InvalidData("one treatment arm is empty".into()));
        }
        if let Propensity::Known(p) = propensity {
            if !(p > 0.0 && p < 1.0) {
                return Err(StatsError::InvalidData(format!("known propensity {p} outside (0,1)")));
            }
        }
        Ok(AnalysisData { d, s, y, x, covariate_names: roles.covariates.clone(), propensity })
    }

    /// Same rows, covariates dropped.
    pub fn without_covariates(&self) -> Self {
        AnalysisData { x: vec![Vec::new(); self.n()], covariate_names: Vec::new(), ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_keeps_missing() {
        let text = "D,S,Y\n1,1,0.25\n0,0,NA\n1,0,\n";
        let d = Dataset::from_reader(text.as_bytes()).unwrap();
        assert_eq!(d.n_rows(), 3);
        assert!(d.column("Y").unwrap()[2].is_nan());
        let out = d.to_csv_string();
        assert_eq!(out, "D,S,Y\n1,1,0.25\n0,0,NA\n1,0,NA\n");
        assert_eq!(Dataset::from_reader(out.as_bytes()).unwrap().to_csv_string(), out);
    }

    #[test]
    fn parse_error_names_line_and_column() {
        let err = Dataset::from_reader("A,B\n1,2\n3,x\n".as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "line 3, column `B`: cannot parse `x` as a number");
    }

    #[test]
    fn proxy_integrity_is_enforced() {
        let roles = Roles::new("D", "S", "Y", &[]);
        let bad = Dataset::from_reader("D,S,Y\n1,1,NA\n0,1,2\n".as_bytes()).unwrap();
        assert!(AnalysisData::from_dataset(&bad, &roles, Propensity::Estimate).is_err());
        let bad = Dataset::from_reader("D,S,Y\n1,0,1\n0,1,2\n".as_bytes()).unwrap();
        assert!(AnalysisData::from_dataset(&bad, &roles, Propensity::Estimate).is_err());
        let ok = Dataset::from_reader("D,S,Y\n1,0,NA\n0,1,2\n".as_bytes()).unwrap();
        assert!(AnalysisData::from_dataset(&ok, &roles, Propensity::Estimate).is_ok());
    }

    #[test]
    fn discreteness() {
        assert!(is_discrete(&[0.0, 1.0, 2.0]));
        assert!(!is_discrete(&[0.5, 1.0]));
        assert!(!is_discrete(&(0..20).map(f64::from).collect::<Vec<_>>()));
    }
}
