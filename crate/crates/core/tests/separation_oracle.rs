//! Bayes-ball separation against two independent reference implementations on random DAGs,
//! for plain m-graphs and for their single-world splits.

use std::time::Instant;

use mswig_core::{d_separated, path_is_active, split, CausalGraph, Dag, Intervention, MGraph, NodeKind, Term};
use mswig_oracles::{moral_separated, path_separated, random_dag};

const GRAPHS: u64 = 1000;
const EDGE_PROB: f64 = 0.3;
const MAX_COND: usize = 3;

fn build(n: usize, edges: &[(usize, usize)]) -> MGraph {
    let mut b = MGraph::builder();
    for i in 0..n {
        b.add_node(&format!("V{i}"), NodeKind::Observed).unwrap();
    }
    for &(a, c) in edges {
        b.add_edge(&format!("V{a}"), &format!("V{c}")).unwrap();
    }
    b.build().unwrap()
}

fn subsets(items: &[usize], max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &i in items {
        let grown: Vec<Vec<usize>> = out.iter().filter(|s| s.len() < max).map(|s| [s.clone(), vec![i]].concat()).collect();
        out.extend(grown);
    }
    out
}

/// Compares every singleton query over random nodes of `dag`; returns the number of queries.
fn check_all_queries(g: &impl CausalGraph, exhaustive_paths: bool) -> usize {
    let dag: &Dag = g.dag();
    let n = dag.len();
    let edges = dag.edges();
    let blocked: Vec<bool> = (0..n).map(|i| dag.is_fixed(i)).collect();
    let random: Vec<usize> = (0..n).filter(|&i| !blocked[i]).collect();
    let term = |i: usize| dag.node(i).term.clone();
    let mut queries = 0;
    for (ai, &a) in random.iter().enumerate() {
        for &b in &random[ai + 1..] {
            let others: Vec<usize> = random.iter().copied().filter(|&v| v != a && v != b).collect();
            for z in subsets(&others, MAX_COND) {
                queries += 1;
                let zt: Vec<Term> = z.iter().map(|&i| term(i)).collect();
                let v = d_separated(g, &[term(a)], &[term(b)], &zt).unwrap();
                let expected = moral_separated(n, &edges, &blocked, &[a], &[b], &z);
                assert_eq!(v.separated, expected, "{} vs {} given {:?} in {:?}", term(a), term(b), z, edges);
                if exhaustive_paths {
                    assert_eq!(v.separated, path_separated(n, &edges, &blocked, &[a], &[b], &z));
                }
                match v.witness {
                    None => assert!(v.separated),
                    Some(path) => {
                        assert_eq!(path.first(), Some(&term(a)));
                        assert_eq!(path.last(), Some(&term(b)));
                        let idx: Vec<usize> = path.iter().map(|t| dag.resolve(t).unwrap()).collect();
                        for w in idx.windows(2) {
                            assert!(edges.contains(&(w[0], w[1])) || edges.contains(&(w[1], w[0])), "nonadjacent step");
                        }
                        let mut sorted = idx.clone();
                        sorted.sort_unstable();
                        sorted.dedup();
                        assert_eq!(sorted.len(), idx.len(), "witness revisits a node");
                        assert!(path_is_active(g, &path, &zt).unwrap());
                    }
                }
            }
        }
    }
    queries
}

#[test]
fn random_dags_agree_with_moralization() {
    let start = Instant::now();
    let mut queries = 0;
    for seed in 0..GRAPHS {
        let n = 2 + (seed % 6) as usize;
        let edges = random_dag(seed, n, EDGE_PROB);
        queries += check_all_queries(&build(n, &edges), seed % 10 == 0);
    }
    assert!(queries > 100_000, "{queries}");
    assert!(start.elapsed().as_secs() < 60, "took {:?}", start.elapsed());
}

#[test]
fn random_swigs_agree_with_moralization() {
    for seed in 0..300u64 {
        let n = 3 + (seed % 5) as usize;
        let edges = random_dag(10_000 + seed, n, 0.4);
        let g = build(n, &edges);
        let target = format!("V{}", seed as usize % n);
        let s = split(&g, &Intervention::single(&target, "a")).unwrap();
        check_all_queries(&s, seed % 10 == 0);
    }
}

#[test]
fn multi_node_sets_agree_with_moralization() {
    for seed in 0..200u64 {
        let n = 6;
        let edges = random_dag(20_000 + seed, n, EDGE_PROB);
        let g = build(n, &edges);
        let blocked = vec![false; n];
        let t = |v: &[usize]| v.iter().map(|i| Term::plain(format!("V{i}"))).collect::<Vec<_>>();
        let cases: [(&[usize], &[usize], &[usize]); 3] = [(&[0, 1], &[4, 5], &[2]), (&[0], &[3, 5], &[1, 2]), (&[2, 3], &[5], &[])];
        for (x, y, z) in cases {
            let got = d_separated(&g, &t(x), &t(y), &t(z)).unwrap().separated;
            assert_eq!(got, moral_separated(n, &edges, &blocked, x, y, z));
        }
    }
}
