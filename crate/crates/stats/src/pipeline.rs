//! Named models: which estimator, which covariates and which assumptions each one uses.

use std::fmt;
use std::str::FromStr;

use mswig_core::EstimandKind;
use serde::Serialize;

use crate::dataset::{format_value, AnalysisData, Dataset, Propensity, Roles};
use crate::error::{Result, StatsError};
use crate::hetero::{heterogeneous_effects, Basis, HeterogeneityTable};
use crate::moments::{
    ate_aipw, att_m2, point_result, zr_lee_bounds, AttVariant, BoundsDiagnostics, EstimateResult, EstimatorOptions,
    Monotonicity, MomentSignal, BOUND_ALPHA, POINT_ALPHA,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Model {
    /// Selected-sample mean comparison; missingness completely at random.
    M1,
    /// Treatment-driven missingness, no covariates.
    M2D,
    /// Missing at random given covariates and treatment.
    M2,
    /// Trimming bounds without covariates under global monotonicity.
    ZRLee,
    /// Trimming bounds with covariates; the monotonicity direction may vary with `X`.
    M3,
}

impl FromStr for Model {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "M1" => Ok(Model::M1),
            "M2D" => Ok(Model::M2D),
            "M2" => Ok(Model::M2),
            "ZRLee" => Ok(Model::ZRLee),
            "M3" => Ok(Model::M3),
            _ => Err(StatsError::InvalidData(format!("unknown model `{s}`; expected M1, M2D, M2, ZRLee or M3"))),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl Model {
    pub fn is_bounds(self) -> bool {
        matches!(self, Model::ZRLee | Model::M3)
    }

    fn uses_covariates(self) -> bool {
        matches!(self, Model::M2 | Model::M3)
    }

    pub fn default_estimand(self) -> EstimandKind {
        if self.is_bounds() {
            EstimandKind::AlwaysObservedAte
        } else {
            EstimandKind::Ate
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRequest {
    pub model: Model,
    pub estimand: EstimandKind,
    pub roles: Roles,
    pub options: EstimatorOptions,
    /// Treatment was randomized with a constant share, so the propensity is its sample mean.
    pub randomized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EstimateReport {
    pub model: Model,
    pub unconditional: EstimateResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds_diagnostics: Option<BoundsDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heterogeneity: Option<HeterogeneityTable>,
    #[serde(skip)]
    pub signals: Vec<MomentSignal>,
}

fn estimand_name(kind: EstimandKind) -> &'static str {
    match kind {
        EstimandKind::Ate => "ate",
        EstimandKind::Att => "att",
        EstimandKind::CounterfactualMean => "counterfactual-mean",
        EstimandKind::AlwaysObservedAte => "always-observed",
    }
}

/// Mean difference on the selected rows, written as a per-row signal so standard errors and
/// heterogeneity follow the same path as the other estimators.
fn mean_difference(data: &AnalysisData, estimand: &str, alpha: f64, opts: &EstimatorOptions) -> Result<(MomentSignal, EstimateResult)> {
    let n = data.n() as f64;
    let arm = |a: f64| -> Result<(f64, f64)> {
        let ys: Vec<f64> = (0..data.n()).filter(|&i| data.d[i] == a && data.s[i] == 1.0).map(|i| data.y[i]).collect();
        if ys.is_empty() {
            return Err(StatsError::Estimation(format!("no selected rows with treatment {a}")));
        }
        Ok((ys.iter().sum::<f64>() / ys.len() as f64, ys.len() as f64 / n))
    };
    let ((m1, p1), (m0, p0)) = (arm(1.0)?, arm(0.0)?);
    let values: Vec<f64> = (0..data.n())
        .map(|i| {
            let sel = data.s[i] == 1.0;
            let r = if sel { data.y[i] } else { 0.0 };
            let t = if sel && data.d[i] == 1.0 { (r - m1) / p1 } else { 0.0 };
            let c = if sel && data.d[i] == 0.0 { (r - m0) / p0 } else { 0.0 };
            m1 - m0 + t - c
        })
        .collect();
    let result = point_result(estimand, "selected-mean-difference", &values, alpha, 0);
    let signal = MomentSignal {
        endpoint: crate::moments::Endpoint::Point,
        values,
        provenance: crate::moments::Provenance { folds: 0, seed: opts.seed },
    };
    Ok((signal, result))
}

pub fn estimate(data: &Dataset, req: &EstimateRequest) -> Result<EstimateReport> {
    let model = req.model;
    match (model.is_bounds(), req.estimand) {
        (true, EstimandKind::AlwaysObservedAte) | (false, EstimandKind::Ate | EstimandKind::Att) => {}
        (_, e) => {
            return Err(StatsError::InvalidData(format!(
                "model {model} does not estimate `{}`",
                estimand_name(e)
            )))
        }
    }
    let mut roles = req.roles.clone();
    if model.uses_covariates() {
        // Stratification variables enter as covariates.
        let mut x = roles.strata.clone();
        x.extend(roles.covariates.iter().filter(|c| !roles.strata.contains(c)).cloned());
        roles.covariates = x;
    } else {
        roles.covariates.clear();
    }
    let d = data.column(&roles.treatment)?;
    let propensity = if req.randomized { Propensity::Known(d.iter().sum::<f64>() / d.len() as f64) } else { Propensity::Estimate };
    let analysis = AnalysisData::from_dataset(data, &roles, propensity)?;
    let name = estimand_name(req.estimand);
    let opts = &req.options;
    let (signals, unconditional, diagnostics) = match model {
        Model::M1 => {
            let (s, r) = mean_difference(&analysis, name, opts.alpha.unwrap_or(POINT_ALPHA), opts)?;
            (vec![s], r, None)
        }
        Model::M2D | Model::M2 => {
            let (s, r) = match req.estimand {
                EstimandKind::Att => att_m2(&analysis, opts, AttVariant::Balanced)?,
                _ => ate_aipw(&analysis, opts)?,
            };
            (vec![s], r, None)
        }
        Model::ZRLee | Model::M3 => {
            let (mono, covs) = if model == Model::ZRLee { (Monotonicity::Global, false) } else { (Monotonicity::Conditional, true) };
            let (lo, hi, r, diag) = zr_lee_bounds(&analysis, opts, &mono, covs)?;
            (vec![lo, hi], r, Some(diag))
        }
    };
    let heterogeneity = if req.roles.heterogeneity.is_empty() {
        None
    } else {
        let cols: Vec<&[f64]> = req.roles.heterogeneity.iter().map(|c| data.column(c)).collect::<Result<_>>()?;
        let basis = if cols.iter().all(|c| crate::dataset::is_discrete(c)) { Basis::Indicators } else { Basis::Linear };
        let alpha = opts.alpha.unwrap_or(if model.is_bounds() { BOUND_ALPHA } else { POINT_ALPHA });
        let refs: Vec<&MomentSignal> = signals.iter().collect();
        Some(heterogeneous_effects(&refs, &req.roles.heterogeneity, &cols, basis, alpha, name)?)
    };
    Ok(EstimateReport { model, unconditional, bounds_diagnostics: diagnostics, heterogeneity, signals })
}

impl EstimateReport {
    /// One row for the unconditional block, then one per heterogeneity group.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("block,group,estimand,point,lower,upper,ci_lower,ci_upper,stderr,level,n,method\n");
        let opt = |v: Option<f64>| v.map(format_value).unwrap_or_default();
        let mut row = |block: &str, group: &str, r: &EstimateResult| {
            let se: Vec<String> = r.stderr.iter().map(|v| format_value(*v)).collect();
            out.push_str(&format!(
                "{block},{group},{},{},{},{},{},{},{},{},{},\"{}\"\n",
                r.estimand,
                opt(r.point),
                opt(r.interval.map(|i| i[0])),
                opt(r.interval.map(|i| i[1])),
                format_value(r.ci[0]),
                format_value(r.ci[1]),
                se.join(";"),
                format_value(r.level),
                r.n,
                r.method
            ));
        };
        row("unconditional", "all", &self.unconditional);
        if let Some(h) = &self.heterogeneity {
            for g in &h.groups {
                row("heterogeneity", &format!("\"{}\"", g.group), &g.result);
            }
        }
        out
    }
}
