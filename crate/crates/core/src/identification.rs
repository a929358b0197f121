//! Identification planning from SWIG separation queries.

use serde::{Deserialize, Serialize};

use crate::error::GraphError;
use crate::graph::{MGraph, NodeKind};
use crate::separation::d_separated;
use crate::swig::{split, Intervention, SwigGraph};
use crate::term::{CIStatement, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimandKind {
    #[serde(rename = "ate")]
    Ate,
    #[serde(rename = "att")]
    Att,
    #[serde(rename = "counterfactual-mean")]
    CounterfactualMean,
    #[serde(rename = "always-observed")]
    AlwaysObservedAte,
}

impl std::str::FromStr for EstimandKind {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ate" => Ok(EstimandKind::Ate),
            "att" => Ok(EstimandKind::Att),
            "counterfactual-mean" => Ok(EstimandKind::CounterfactualMean),
            "always-observed" => Ok(EstimandKind::AlwaysObservedAte),
            other => Err(GraphError::InvalidEstimand(format!("unknown estimand `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimandSpec {
    pub kind: EstimandKind,
    pub treatment: String,
    pub outcome: String,
    #[serde(default)]
    pub adjustment: Vec<String>,
    #[serde(default)]
    pub heterogeneity: Vec<String>,
}

impl EstimandSpec {
    pub fn new(kind: EstimandKind, treatment: &str, outcome: &str, adjustment: &[&str]) -> Self {
        EstimandSpec {
            kind,
            treatment: treatment.to_string(),
            outcome: outcome.to_string(),
            adjustment: adjustment.iter().map(|s| s.to_string()).collect(),
            heterogeneity: Vec::new(),
        }
    }
}

/// Declared cross-world assumptions; never derived from the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assumption {
    /// `S(1) >= S(0)` for every unit.
    Monotonicity,
    /// Monotonicity with a direction that may depend on covariates.
    ConditionalMonotonicity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IdentificationStatus {
    PointIdentified,
    PartiallyIdentified,
    NotIdentified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    Adjustment,
    WeightedAdjustmentATT,
    TrimmingBounds,
    None,
}

/// Structured identifying functional; `render` gives the discrete-sum text form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Formula {
    Adjustment {
        outcome: String,
        treatment: String,
        symbol: String,
        adjustment: Vec<String>,
        selection: Option<String>,
        on_treated: bool,
    },
    TrimmingBounds {
        outcome: String,
        treatment: String,
        selection: String,
        adjustment: Vec<String>,
    },
    None,
}

impl Formula {
    pub fn render(&self) -> String {
        match self {
            Formula::Adjustment { outcome, treatment, symbol, adjustment, selection, on_treated } => {
                let mut cond = Vec::new();
                if let Some(s) = selection {
                    cond.push(format!("{s}=1"));
                }
                cond.push(format!("{treatment}={symbol}"));
                let lhs_cond = if *on_treated { format!(" | {treatment}=1") } else { String::new() };
                let target = format!("E[{outcome}({symbol}){lhs_cond}]");
                let observed = match selection {
                    Some(_) => format!("{outcome}_star"),
                    None => outcome.clone(),
                };
                if adjustment.is_empty() {
                    let rhs = format!("E[{observed} | {}]", cond.join(", "));
                    return format!("{target} = {rhs}");
                }
                let x = adjustment.join(",");
                let xv = adjustment.iter().map(|a| a.to_lowercase()).collect::<Vec<_>>().join(",");
                let weight = if *on_treated {
                    format!("P({x}=({xv}) | {treatment}=1)")
                } else {
                    format!("P({x}=({xv}))")
                };
                format!("{target} = sum_{{{xv}}} E[{observed} | {}, {x}=({xv})] {weight}", cond.join(", "))
            }
            Formula::TrimmingBounds { outcome, treatment, selection, adjustment } => {
                let x = if adjustment.is_empty() { String::new() } else { format!(", {}", adjustment.join(",")) };
                format!(
                    "E[{outcome}(1) - {outcome}(0) | {selection}(0)=1, {selection}(1)=1] in [L, U], \
                     L = E[E[{outcome}_star | {outcome}_star <= q(p0), {selection}=1, {treatment}=1{x}] \
                     - E[{outcome}_star | {selection}=1, {treatment}=0{x}]], \
                     p0 = P({selection}=1 | {treatment}=0{x}) / P({selection}=1 | {treatment}=1{x})"
                )
            }
            Formula::None => "not identified".to_string(),
        }
    }

    /// Plug-in value of an adjustment formula: the (optionally weighted) average over `rows`
    /// of `cond_mean(row, d)`; rows hold the adjustment variables in formula order.
    pub fn evaluate(
        &self,
        rows: &[Vec<f64>],
        d: f64,
        cond_mean: &dyn Fn(&[f64], f64) -> f64,
        weights: Option<&[f64]>,
    ) -> Option<f64> {
        match self {
            Formula::Adjustment { .. } if !rows.is_empty() => {
                let (mut num, mut den) = (0.0, 0.0);
                for (i, r) in rows.iter().enumerate() {
                    let w = weights.map_or(1.0, |w| w[i]);
                    num += w * cond_mean(r, d);
                    den += w;
                }
                Some(num / den)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentificationPlan {
    pub status: IdentificationStatus,
    pub strategy: Strategy,
    pub required_assumptions: Vec<Assumption>,
    pub certifying: Vec<CIStatement>,
    pub failed_query: Option<CIStatement>,
    pub formula: Formula,
    pub estimand_formula: String,
}

fn holds(swig: &SwigGraph, left: &[Term], right: &[Term], given: &[Term]) -> Result<(CIStatement, bool), GraphError> {
    let st = CIStatement::new(left.to_vec(), right.to_vec(), given.to_vec())?;
    let v = d_separated(swig, left, right, given)?;
    Ok((st, v.separated))
}

pub fn plan_identification(
    g: &MGraph,
    spec: &EstimandSpec,
    assumptions: &[Assumption],
) -> Result<IdentificationPlan, GraphError> {
    if g.is_empty() {
        return Err(GraphError::EmptyGraph);
    }
    let kind_of = |n: &str| g.kind(n).ok_or_else(|| GraphError::UnknownNode(n.to_string()));
    let outcome_kind = kind_of(&spec.outcome)?;
    if !matches!(outcome_kind, NodeKind::Observed | NodeKind::PartiallyMissing) {
        return Err(GraphError::InvalidEstimand(format!("outcome `{}` is {:?}", spec.outcome, outcome_kind)));
    }
    if matches!(kind_of(&spec.treatment)?, NodeKind::Latent | NodeKind::Proxy) {
        return Err(GraphError::InvalidEstimand(format!("treatment `{}` is not observable", spec.treatment)));
    }
    for a in &spec.adjustment {
        let k = kind_of(a)?;
        if a == &spec.treatment || a == &spec.outcome || matches!(k, NodeKind::Latent | NodeKind::Proxy) {
            return Err(GraphError::InvalidEstimand(format!("`{a}` cannot be in the adjustment set")));
        }
    }

    let symbol = spec.treatment.to_lowercase();
    let swig = split(g, &Intervention::single(&spec.treatment, &symbol))?;
    let term = |n: &str| swig.term(n).cloned().ok_or_else(|| GraphError::UnknownNode(n.to_string()));
    let y = term(&spec.outcome)?;
    let d = term(&spec.treatment)?;
    let adj: Vec<Term> = spec.adjustment.iter().map(|a| term(a)).collect::<Result<_, _>>()?;
    let mut adj_d = adj.clone();
    adj_d.push(d.clone());

    let (unconfounded, q1) = holds(&swig, std::slice::from_ref(&y), std::slice::from_ref(&d), &adj)?;
    let selection = if outcome_kind == NodeKind::PartiallyMissing { g.selection_of(&spec.outcome) } else { None };
    let s = selection.map(term).transpose()?;

    let adjustment = |sel: Option<&str>| Formula::Adjustment {
        outcome: spec.outcome.clone(),
        treatment: spec.treatment.clone(),
        symbol: symbol.clone(),
        adjustment: spec.adjustment.clone(),
        selection: sel.map(str::to_string),
        on_treated: spec.kind == EstimandKind::Att,
    };
    let point_strategy =
        if spec.kind == EstimandKind::Att && selection.is_some() { Strategy::WeightedAdjustmentATT } else { Strategy::Adjustment };
    let plan = |status, strategy, required_assumptions: Vec<Assumption>, certifying, failed_query, formula: Formula| {
        let estimand_formula = formula.render();
        IdentificationPlan { status, strategy, required_assumptions, certifying, failed_query, formula, estimand_formula }
    };

    let mut failed = None;
    if spec.kind != EstimandKind::AlwaysObservedAte {
        match &s {
            None if q1 => {
                return Ok(plan(IdentificationStatus::PointIdentified, point_strategy, vec![], vec![unconfounded], None, adjustment(None)));
            }
            None => failed = Some(unconfounded.clone()),
            Some(s) => {
                let (ignorable, q2) = holds(&swig, std::slice::from_ref(s), std::slice::from_ref(&y), &adj_d)?;
                if q1 && q2 {
                    return Ok(plan(
                        IdentificationStatus::PointIdentified,
                        point_strategy,
                        vec![],
                        vec![unconfounded, ignorable],
                        None,
                        adjustment(selection),
                    ));
                }
                failed = Some(if q1 { ignorable } else { unconfounded.clone() });
            }
        }
    }

    if let (Some(s), Some(sel)) = (&s, selection) {
        let (randomized, q3) = holds(&swig, std::slice::from_ref(&d), &[s.clone(), y.clone()], &adj)?;
        let declared: Vec<Assumption> = assumptions.to_vec();
        if q3 && !declared.is_empty() {
            return Ok(plan(
                IdentificationStatus::PartiallyIdentified,
                Strategy::TrimmingBounds,
                declared,
                vec![randomized],
                None,
                Formula::TrimmingBounds {
                    outcome: spec.outcome.clone(),
                    treatment: spec.treatment.clone(),
                    selection: sel.to_string(),
                    adjustment: spec.adjustment.clone(),
                },
            ));
        }
        if !q3 && failed.is_none() {
            failed = Some(randomized);
        }
    } else if spec.kind == EstimandKind::AlwaysObservedAte {
        return Err(GraphError::InvalidEstimand("always-observed effects need a partially missing outcome".into()));
    }
    Ok(plan(IdentificationStatus::NotIdentified, Strategy::None, vec![], vec![], failed, Formula::None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_graph;

    const M3: &str = "node X obs; node D obs; node Y miss; node U latent; sel S for Y; edge X -> D; \
                      edge X -> S; edge X -> Y; edge D -> Y; edge D -> S; edge U -> S; edge U -> Y; bi X <-> U";

    #[test]
    fn m1_adjustment() {
        let g = parse_graph("node D obs; node Y miss; sel S for Y; edge D -> Y").unwrap();
        let p = plan_identification(&g, &EstimandSpec::new(EstimandKind::Ate, "D", "Y", &[]), &[]).unwrap();
        assert_eq!(p.status, IdentificationStatus::PointIdentified);
        assert_eq!(p.strategy, Strategy::Adjustment);
        assert_eq!(p.estimand_formula, "E[Y(d)] = E[Y_star | S=1, D=d]");
    }

    #[test]
    fn m3_needs_monotonicity() {
        let g = parse_graph(M3).unwrap();
        let spec = EstimandSpec::new(EstimandKind::Ate, "D", "Y", &["X"]);
        let p = plan_identification(&g, &spec, &[Assumption::Monotonicity]).unwrap();
        assert_eq!(p.status, IdentificationStatus::PartiallyIdentified);
        assert_eq!(p.strategy, Strategy::TrimmingBounds);
        assert_eq!(p.certifying[0].to_string(), "D _||_ S(d),Y(d) | X");
        let p = plan_identification(&g, &spec, &[]).unwrap();
        assert_eq!(p.status, IdentificationStatus::NotIdentified);
        assert_eq!(p.failed_query.unwrap().to_string(), "S(d) _||_ Y(d) | D,X");
    }

    #[test]
    fn invalid_specs() {
        let g = parse_graph(M3).unwrap();
        let bad = EstimandSpec::new(EstimandKind::Ate, "D", "U", &[]);
        assert!(plan_identification(&g, &bad, &[]).is_err());
        let bad = EstimandSpec::new(EstimandKind::Ate, "D", "Y", &["U"]);
        assert!(plan_identification(&g, &bad, &[]).is_err());
        let empty = crate::graph::GraphBuilder::new().build().unwrap();
        assert_eq!(plan_identification(&empty, &bad, &[]).unwrap_err(), GraphError::EmptyGraph);
    }
}
