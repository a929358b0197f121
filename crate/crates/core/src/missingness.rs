//! Variable-based MCAR / MAR / MNAR classification of selection subsets.

use serde::Serialize;

use crate::dag::{CausalGraph, NodeRole};
use crate::error::GraphError;
use crate::graph::NodeKind;
use crate::term::{CIStatement, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Missingness {
    #[serde(rename = "MCAR")]
    Mcar,
    #[serde(rename = "MAR")]
    Mar,
    #[serde(rename = "MNAR")]
    Mnar,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MissingnessVerdict {
    pub subset: Vec<Term>,
    pub category: Missingness,
    pub certifying: Option<CIStatement>,
    pub violating: Option<CIStatement>,
}

/// MCAR: `S _||_ rest` where rest is every other random node except proxies.
/// MAR: `S _||_ (missing, latent) | observed, other selections`. Otherwise MNAR, reporting
/// the first dependent missing or latent term (missing variables first).
pub fn classify<G: CausalGraph + ?Sized>(g: &G, subset: &[Term]) -> Result<MissingnessVerdict, GraphError> {
    let dag = g.dag();
    if subset.is_empty() {
        return Err(GraphError::InvalidStatement("selection subset is empty".into()));
    }
    let sel = dag.resolve_all(subset)?;
    for (&i, t) in sel.iter().zip(subset) {
        if dag.node(i).kind != NodeKind::Selection {
            return Err(GraphError::InvalidStatement(format!("`{t}` is not a selection node")));
        }
    }
    let mut sorted_subset = subset.to_vec();
    sorted_subset.sort();
    sorted_subset.dedup();

    let random = |i: usize| dag.node(i).role == NodeRole::Random && !sel.contains(&i);
    let of_kind = |kinds: &[NodeKind]| -> Vec<usize> {
        (0..dag.len()).filter(|&i| random(i) && kinds.contains(&dag.node(i).kind)).collect()
    };
    let rest = of_kind(&[NodeKind::Observed, NodeKind::PartiallyMissing, NodeKind::Latent, NodeKind::Selection]);
    let hidden: Vec<usize> = {
        let mut m = of_kind(&[NodeKind::PartiallyMissing]);
        let (declared, generated): (Vec<usize>, Vec<usize>) =
            of_kind(&[NodeKind::Latent]).into_iter().partition(|&i| !dag.node(i).generated);
        m.extend(declared);
        m.extend(generated);
        m
    };
    let observables = of_kind(&[NodeKind::Observed, NodeKind::Selection]);

    let terms = |ids: &[usize]| ids.iter().map(|&i| dag.node(i).term.clone()).collect::<Vec<_>>();
    let stmt = |right: &[usize], given: &[usize]| {
        CIStatement::new(sorted_subset.clone(), terms(right), terms(given)).expect("disjoint by construction")
    };
    let verdict = |category, certifying, violating| MissingnessVerdict {
        subset: sorted_subset.clone(),
        category,
        certifying,
        violating,
    };

    if rest.is_empty() || dag.separated_idx(&sel, &rest, &[]) {
        let cert = (!rest.is_empty()).then(|| stmt(&rest, &[]));
        return Ok(verdict(Missingness::Mcar, cert, None));
    }
    if hidden.is_empty() || dag.separated_idx(&sel, &hidden, &observables) {
        let cert = (!hidden.is_empty()).then(|| stmt(&hidden, &observables));
        return Ok(verdict(Missingness::Mar, cert, None));
    }
    let culprit = hidden
        .iter()
        .copied()
        .find(|&h| !dag.separated_idx(&sel, &[h], &observables))
        .expect("set separation fails only through some member");
    Ok(verdict(Missingness::Mnar, None, Some(stmt(&[culprit], &observables))))
}
