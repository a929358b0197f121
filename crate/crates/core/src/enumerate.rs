//! Enumeration of implied independencies and semi-graphoid pruning.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::dag::{CausalGraph, Dag, NodeRole};
use crate::graph::{MGraph, NodeKind};
use crate::graphoid::{Closure, Triple};
use crate::term::{CIStatement, Term};

pub const DEFAULT_MAX_CONDITIONING: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    All,
    ObservedOnly,
}

fn candidates(dag: &Dag, scope: Scope) -> Vec<usize> {
    let mut c: Vec<usize> = (0..dag.len())
        .filter(|&i| {
            let n = dag.node(i);
            n.role == NodeRole::Random
                && !n.generated
                && match scope {
                    Scope::All => true,
                    Scope::ObservedOnly => !matches!(n.kind, NodeKind::Latent | NodeKind::PartiallyMissing),
                }
        })
        .collect();
    c.sort_by(|&a, &b| dag.node(a).term.cmp(&dag.node(b).term));
    c
}

/// Builds the statement for singleton pair `(a, b)` given `z`, applying the proxy rule:
/// every proxy involved needs its selection node in `z` (moved to the selection flag),
/// and that selection node may not be one of the compared terms.
fn statement(dag: &Dag, a: usize, b: usize, z: &[usize]) -> Option<CIStatement> {
    let mut flags = BTreeSet::new();
    for &v in [a, b].iter().chain(z) {
        if dag.node(v).kind == NodeKind::Proxy {
            let s = dag.node(v).selection?;
            if !z.contains(&s) {
                return None;
            }
            flags.insert(s);
        }
    }
    let term = |i: usize| dag.node(i).term.clone();
    CIStatement::with_selection(
        [term(a)],
        [term(b)],
        z.iter().filter(|i| !flags.contains(i)).map(|&i| term(i)),
        flags.iter().map(|&i| term(i)),
    )
    .ok()
}

/// Every singleton-pair statement with conditioning sets of size at most `max_cond` that
/// holds by d-separation; canonically sorted.
pub fn enumerate_independencies<G: CausalGraph + ?Sized>(g: &G, scope: Scope, max_cond: usize) -> Vec<CIStatement> {
    let dag = g.dag();
    let cand = candidates(dag, scope);
    let pairs: Vec<(usize, usize)> =
        (0..cand.len()).flat_map(|i| (i + 1..cand.len()).map(move |j| (i, j))).collect();
    let found: Vec<CIStatement> = pairs
        .par_iter()
        .flat_map_iter(|&(i, j)| {
            let (a, b) = (cand[i], cand[j]);
            let others: Vec<usize> = cand.iter().copied().filter(|&v| v != a && v != b).collect();
            let mut out = Vec::new();
            for_each_subset(&others, max_cond, |z| {
                if dag.separated_idx(&[a], &[b], z) {
                    if let Some(s) = statement(dag, a, b, z) {
                        out.push(s);
                    }
                }
            });
            out
        })
        .collect();
    let set: BTreeSet<CIStatement> = found.into_iter().collect();
    set.into_iter().collect()
}

fn for_each_subset(items: &[usize], max: usize, mut f: impl FnMut(&[usize])) {
    fn rec(items: &[usize], start: usize, max: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        f(cur);
        if cur.len() == max {
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, i + 1, max, cur, f);
            cur.pop();
        }
    }
    rec(items, 0, max, &mut Vec::new(), &mut f);
}

/// Maps statements to bitmask triples over the terms they mention.
#[derive(Debug, Default)]
pub(crate) struct AtomTable {
    index: BTreeMap<Term, u32>,
}

impl AtomTable {
    fn atom(&mut self, t: &Term) -> u64 {
        let next = self.index.len() as u32;
        let i = *self.index.entry(t.clone()).or_insert(next);
        assert!(i < 64, "at most 64 distinct terms are supported in closure computations");
        1u64 << i
    }

    pub(crate) fn triple(&mut self, s: &CIStatement) -> Triple {
        let mut m = |set: &mut dyn Iterator<Item = &Term>| set.fold(0u64, |acc, t| acc | self.atom(t));
        let a = m(&mut s.left().iter());
        let b = m(&mut s.right().iter());
        let c = m(&mut s.given().iter().chain(s.selected()));
        (a, b, c)
    }
}

fn prune_order(statements: &[CIStatement]) -> Vec<CIStatement> {
    let mut v = statements.to_vec();
    v.sort_by(|x, y| x.conditioning().len().cmp(&y.conditioning().len()).then_with(|| x.cmp(y)));
    v
}

/// Greedy semi-graphoid pruning: statements are visited by (conditioning size, lexicographic)
/// and kept only if not already implied by those retained so far.
pub fn prune_statements(statements: &[CIStatement]) -> Vec<CIStatement> {
    let mut atoms = AtomTable::default();
    let mut closure = Closure::new();
    let mut kept = Vec::new();
    for s in prune_order(statements) {
        let t = atoms.triple(&s);
        if !closure.contains(t) {
            closure.add(t);
            kept.push(s);
        }
    }
    kept.sort();
    kept
}

/// Whether `target` follows from `premises` under the semi-graphoid axioms.
pub fn implied_by(premises: &[CIStatement], target: &CIStatement) -> bool {
    let mut atoms = AtomTable::default();
    let ts: Vec<Triple> = premises.iter().map(|s| atoms.triple(s)).collect();
    let t = atoms.triple(target);
    Closure::from_triples(ts).contains(t)
}

/// Testable statements (observed level, default cap) reduced by semi-graphoid pruning.
pub fn minimal_testable_set(g: &MGraph) -> Vec<CIStatement> {
    prune_statements(&enumerate_independencies(g, Scope::ObservedOnly, DEFAULT_MAX_CONDITIONING))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_graph;

    fn texts(v: &[CIStatement]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn m1_contains_selection_statements() {
        let g = parse_graph("node D obs; node Y miss; sel S for Y; edge D -> Y").unwrap();
        let all = texts(&enumerate_independencies(&g, Scope::All, 4));
        for s in ["S _||_ Y", "D _||_ S", "S _||_ Y | D", "D _||_ S | Y"] {
            assert!(all.contains(&s.to_string()), "{s} missing from {all:?}");
        }
    }

    #[test]
    fn edgeless_graph_everything() {
        let g = parse_graph("node A obs; node B obs; node C obs").unwrap();
        let all = enumerate_independencies(&g, Scope::All, 4);
        assert_eq!(all.len(), 6);
    }

    #[test]
    fn single_edge_nothing_testable() {
        let g = parse_graph("node D obs; node Y obs; edge D -> Y").unwrap();
        assert!(minimal_testable_set(&g).is_empty());
    }

    #[test]
    fn proxy_statements_carry_flag() {
        let g = parse_graph("node D obs; node Y miss; sel S for Y; edge D -> Y").unwrap();
        let obs = texts(&enumerate_independencies(&g, Scope::ObservedOnly, 4));
        assert_eq!(obs, vec!["D _||_ S".to_string()]);
    }

    #[test]
    fn pruning_drops_weak_union_consequences() {
        let s = |t: &str| CIStatement::parse(t).unwrap();
        let kept = prune_statements(&[s("A _||_ B"), s("A _||_ B | C"), s("A _||_ C"), s("A _||_ C | B")]);
        assert_eq!(texts(&kept), ["A _||_ B", "A _||_ B | C", "A _||_ C"]);
    }

    #[test]
    fn subset_enumeration_respects_cap() {
        let mut seen = Vec::new();
        for_each_subset(&[1, 2, 3], 2, |z| seen.push(z.to_vec()));
        assert_eq!(seen.len(), 7);
        assert!(seen.iter().all(|z| z.len() <= 2));
    }
}
