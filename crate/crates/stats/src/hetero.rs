//! Effect heterogeneity by regressing moment signals on functions of pre-treatment `Z`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::is_discrete;
use crate::error::{Result, StatsError};
use crate::moments::{bounds_result, point_result, z, EstimateResult, MomentSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    /// One cell per distinct value combination of `Z`.
    Indicators,
    /// Intercept plus `Z` entered linearly.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupEstimate {
    pub group: String,
    /// Share of rows in the cell; `None` for regression coefficients.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub share: Option<f64>,
    pub result: EstimateResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeterogeneityTable {
    pub basis: Basis,
    pub groups: Vec<GroupEstimate>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// `signals` holds one point signal, or a lower and an upper bound signal. `columns` are
/// the heterogeneity variables, each with one value per row.
pub fn heterogeneous_effects(
    signals: &[&MomentSignal],
    names: &[String],
    columns: &[&[f64]],
    basis: Basis,
    alpha: f64,
    estimand: &str,
) -> Result<HeterogeneityTable> {
    let n = signals.first().map(|s| s.values.len()).ok_or_else(|| StatsError::Estimation("no signal".into()))?;
    if !(signals.len() == 1 || signals.len() == 2) {
        return Err(StatsError::Estimation("expected a point signal or a bound pair".into()));
    }
    if columns.iter().any(|c| c.len() != n || c.iter().any(|v| !v.is_finite())) {
        return Err(StatsError::InvalidData("heterogeneity columns must be complete and match the signal length".into()));
    }
    match basis {
        Basis::Indicators => indicators(signals, names, columns, alpha, estimand),
        Basis::Linear => linear(signals, names, columns, alpha, estimand),
    }
}

fn indicators(
    signals: &[&MomentSignal],
    names: &[String],
    columns: &[&[f64]],
    alpha: f64,
    estimand: &str,
) -> Result<HeterogeneityTable> {
    for (name, c) in names.iter().zip(columns) {
        if !is_discrete(c) {
            return Err(StatsError::InvalidData(format!("`{name}` is not discrete; use the linear basis")));
        }
    }
    let n = signals[0].values.len();
    let mut cells: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        cells.entry(columns.iter().map(|c| c[i] as i64).collect()).or_default().push(i);
    }
    let groups = cells
        .into_iter()
        .map(|(key, rows)| {
            let label = names.iter().zip(&key).map(|(n, v)| format!("{n}={v}")).collect::<Vec<_>>().join(",");
            let pick = |s: &MomentSignal| rows.iter().map(|&i| s.values[i]).collect::<Vec<f64>>();
            let result = if signals.len() == 1 {
                point_result(estimand, "cell-mean", &pick(signals[0]), alpha, 0)
            } else {
                bounds_result(estimand, "cell-mean", &pick(signals[0]), &pick(signals[1]), alpha, 0)
            };
            GroupEstimate { group: label, share: Some(rows.len() as f64 / n as f64), result }
        })
        .collect();
    Ok(HeterogeneityTable { basis: Basis::Indicators, groups, warnings: Vec::new() })
}

fn linear(
    signals: &[&MomentSignal],
    names: &[String],
    columns: &[&[f64]],
    alpha: f64,
    estimand: &str,
) -> Result<HeterogeneityTable> {
    let n = signals[0].values.len();
    let mut warnings = Vec::new();
    // Greedy rank check: drop columns that are (numerically) spanned by earlier ones.
    let mut kept: Vec<(String, Vec<f64>)> = vec![("intercept".into(), vec![1.0; n])];
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for (name, c) in std::iter::once((&"intercept".to_string(), &vec![1.0; n][..])).chain(names.iter().zip(columns.iter().copied())) {
        let mut r = c.to_vec();
        for b in &basis {
            let dot: f64 = r.iter().zip(b).map(|(a, b)| a * b).sum();
            r.iter_mut().zip(b).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = c.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        if norm <= 1e-10 * scale {
            warnings.push(format!("`{name}` is collinear with earlier columns and was dropped"));
            continue;
        }
        basis.push(r.iter().map(|v| v / norm).collect());
        if name != "intercept" {
            kept.push((name.clone(), c.to_vec()));
        }
    }
    let k = kept.len();
    let xm = DMatrix::from_fn(n, k, |i, j| kept[j].1[i]);
    let xtx_inv = (xm.transpose() * &xm).try_inverse().ok_or_else(|| StatsError::Estimation("singular design".into()))?;
    let zq = z(1.0 - alpha / 2.0);
    let mut groups = Vec::new();
    for (s_idx, s) in signals.iter().enumerate() {
        let y = DVector::from_column_slice(&s.values);
        let beta = &xtx_inv * xm.transpose() * &y;
        let resid = &y - &xm * &beta;
        let mut meat = DMatrix::zeros(k, k);
        for i in 0..n {
            let row = xm.row(i);
            meat += row.transpose() * row * resid[i].powi(2);
        }
        let dof = n as f64 / (n as f64 - k as f64).max(1.0);
        let cov = &xtx_inv * meat * &xtx_inv * dof;
        let tag = match (signals.len(), s_idx) {
            (1, _) => "",
            (_, 0) => "[lower]",
            _ => "[upper]",
        };
        for (j, (name, _)) in kept.iter().enumerate() {
            let se = cov[(j, j)].max(0.0).sqrt();
            let b = beta[j];
            groups.push(GroupEstimate {
                group: format!("{name}{tag}"),
                share: None,
                result: EstimateResult {
                    estimand: estimand.to_string(),
                    point: Some(b),
                    interval: None,
                    stderr: vec![se],
                    ci: [b - zq * se, b + zq * se],
                    level: 1.0 - alpha,
                    n,
                    method: "signal-regression-hc1".into(),
                    clip_count: 0,
                    crossed: false,
                    collapsed: false,
                    warnings: Vec::new(),
                },
            });
        }
    }
    Ok(HeterogeneityTable { basis: Basis::Linear, groups, warnings })
}
