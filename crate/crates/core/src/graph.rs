//! m-graph data model: typed nodes, directed and bidirected edges, validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dag::{CausalGraph, Dag, DagNode, NodeRole};
use crate::error::GraphError;
use crate::term::{check_ident, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Observed,
    PartiallyMissing,
    Proxy,
    Selection,
    Latent,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Edge {
    Directed(String, String),
    Bidirected(String, String),
}

impl Edge {
    pub fn directed(a: &str, b: &str) -> Self {
        Edge::Directed(a.to_string(), b.to_string())
    }

    /// Endpoints are stored sorted so that `a <-> b` equals `b <-> a`.
    pub fn bidirected(a: &str, b: &str) -> Self {
        if a <= b {
            Edge::Bidirected(a.to_string(), b.to_string())
        } else {
            Edge::Bidirected(b.to_string(), a.to_string())
        }
    }
}

impl std::fmt::Display for Edge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Edge::Directed(a, b) => write!(f, "{a} -> {b}"),
            Edge::Bidirected(a, b) => write!(f, "{a} <-> {b}"),
        }
    }
}

pub fn proxy_name(missing: &str) -> String {
    format!("{missing}_star")
}

/// Validated, immutable m-graph. Holds a compiled DAG with bidirected edges expanded.
#[derive(Debug, Clone)]
pub struct MGraph {
    order: Vec<String>,
    kinds: BTreeMap<String, NodeKind>,
    /// missing variable -> selection node
    selection_of: BTreeMap<String, String>,
    edges: BTreeSet<Edge>,
    dag: Dag,
}

impl PartialEq for MGraph {
    fn eq(&self, other: &Self) -> bool {
        self.kinds == other.kinds && self.selection_of == other.selection_of && self.edges == other.edges
    }
}

impl CausalGraph for MGraph {
    fn dag(&self) -> &Dag {
        &self.dag
    }
}

/// Incremental construction; `build` runs every validation check.
#[derive(Debug, Clone, Default)]
pub struct GraphBuilder {
    order: Vec<String>,
    kinds: BTreeMap<String, NodeKind>,
    selection_of: BTreeMap<String, String>,
    edges: BTreeSet<Edge>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(mut self, name: &str, kind: NodeKind) -> Result<Self, GraphError> {
        self.add_node(name, kind)?;
        Ok(self)
    }

    pub fn add_node(&mut self, name: &str, kind: NodeKind) -> Result<(), GraphError> {
        check_ident(name)?;
        if matches!(kind, NodeKind::Proxy | NodeKind::Selection) {
            return Err(GraphError::InvalidSelection(format!(
                "`{name}`: proxy and selection nodes are declared through a selection declaration"
            )));
        }
        self.insert(name, kind)
    }

    fn insert(&mut self, name: &str, kind: NodeKind) -> Result<(), GraphError> {
        if self.kinds.contains_key(name) {
            return Err(GraphError::DuplicateNode(name.to_string()));
        }
        self.kinds.insert(name.to_string(), kind);
        self.order.push(name.to_string());
        Ok(())
    }

    /// Declares selection node `sel` for partially missing `missing`; creates `<missing>_star`.
    pub fn add_selection(&mut self, sel: &str, missing: &str) -> Result<(), GraphError> {
        check_ident(sel)?;
        match self.kinds.get(missing) {
            None => return Err(GraphError::UnknownNode(missing.to_string())),
            Some(NodeKind::PartiallyMissing) => {}
            Some(_) => {
                return Err(GraphError::InvalidSelection(format!("`{missing}` is not a partially missing node")))
            }
        }
        if self.selection_of.contains_key(missing) {
            return Err(GraphError::InvalidSelection(format!("`{missing}` already has a selection node")));
        }
        let proxy = proxy_name(missing);
        self.insert(sel, NodeKind::Selection)?;
        self.insert(&proxy, NodeKind::Proxy)?;
        self.selection_of.insert(missing.to_string(), sel.to_string());
        self.edges.insert(Edge::directed(missing, &proxy));
        self.edges.insert(Edge::directed(sel, &proxy));
        Ok(())
    }

    pub fn selection(mut self, sel: &str, missing: &str) -> Result<Self, GraphError> {
        self.add_selection(sel, missing)?;
        Ok(self)
    }

    pub fn add_edge(&mut self, from: &str, to: &str) -> Result<(), GraphError> {
        if from == to {
            return Err(GraphError::SelfLoop(from.to_string()));
        }
        for n in [from, to] {
            if !self.kinds.contains_key(n) {
                return Err(GraphError::UnknownNode(n.to_string()));
            }
        }
        if self.kinds[to] == NodeKind::Proxy {
            return Err(GraphError::ProxyEdge(format!("edge {from} -> {to} points into a proxy")));
        }
        if self.kinds[from] == NodeKind::Proxy {
            return Err(GraphError::ProxyEdge(format!("edge {from} -> {to} leaves a proxy")));
        }
        if !self.edges.insert(Edge::directed(from, to)) {
            return Err(GraphError::DuplicateEdge(format!("{from} -> {to}")));
        }
        Ok(())
    }

    pub fn edge(mut self, from: &str, to: &str) -> Result<Self, GraphError> {
        self.add_edge(from, to)?;
        Ok(self)
    }

    pub fn add_bidirected(&mut self, a: &str, b: &str) -> Result<(), GraphError> {
        if a == b {
            return Err(GraphError::SelfLoop(a.to_string()));
        }
        for n in [a, b] {
            match self.kinds.get(n) {
                None => return Err(GraphError::UnknownNode(n.to_string())),
                Some(NodeKind::Proxy) => {
                    return Err(GraphError::ProxyEdge(format!("bidirected edge {a} <-> {b} touches a proxy")))
                }
                Some(_) => {}
            }
        }
        if !self.edges.insert(Edge::bidirected(a, b)) {
            return Err(GraphError::DuplicateEdge(format!("{a} <-> {b}")));
        }
        Ok(())
    }

    pub fn bidirected(mut self, a: &str, b: &str) -> Result<Self, GraphError> {
        self.add_bidirected(a, b)?;
        Ok(self)
    }

    pub fn build(self) -> Result<MGraph, GraphError> {
        for (name, kind) in &self.kinds {
            if *kind == NodeKind::PartiallyMissing && !self.selection_of.contains_key(name) {
                return Err(GraphError::DanglingProxy(name.clone()));
            }
        }
        let dag = compile(&self.order, &self.kinds, &self.selection_of, &self.edges)?;
        Ok(MGraph {
            order: self.order,
            kinds: self.kinds,
            selection_of: self.selection_of,
            edges: self.edges,
            dag,
        })
    }
}

fn fresh_latent_names(taken: &BTreeMap<String, NodeKind>, count: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    let mut k = 1usize;
    while out.len() < count {
        let name = format!("L_{k}");
        if !taken.contains_key(&name) {
            out.push(name);
        }
        k += 1;
    }
    out
}

fn compile(
    order: &[String],
    kinds: &BTreeMap<String, NodeKind>,
    selection_of: &BTreeMap<String, String>,
    edges: &BTreeSet<Edge>,
) -> Result<Dag, GraphError> {
    let bidirected: Vec<(&String, &String)> = edges
        .iter()
        .filter_map(|e| match e {
            Edge::Bidirected(a, b) => Some((a, b)),
            _ => None,
        })
        .collect();
    let latents = fresh_latent_names(kinds, bidirected.len());
    let mut index = BTreeMap::new();
    let mut nodes = Vec::new();
    for name in order {
        index.insert(name.clone(), nodes.len());
        nodes.push(DagNode {
            term: Term::plain(name.clone()),
            kind: kinds[name],
            role: NodeRole::Random,
            generated: false,
            selection: None,
        });
    }
    for (missing, sel) in selection_of {
        let p = index[&proxy_name(missing)];
        nodes[p].selection = Some(index[sel]);
    }
    let mut dag_edges = Vec::new();
    for e in edges {
        if let Edge::Directed(a, b) = e {
            dag_edges.push((index[a], index[b]));
        }
    }
    for (l, (a, b)) in latents.iter().zip(bidirected) {
        let li = nodes.len();
        nodes.push(DagNode {
            term: Term::plain(l.clone()),
            kind: NodeKind::Latent,
            role: NodeRole::Random,
            generated: true,
            selection: None,
        });
        dag_edges.push((li, index[a]));
        dag_edges.push((li, index[b]));
    }
    let dag = Dag::new(nodes, &dag_edges);
    if dag.topological_order().is_none() {
        return Err(GraphError::Cycle(find_cycle(&dag)));
    }
    Ok(dag)
}

fn find_cycle(dag: &Dag) -> Vec<String> {
    // 0 = unvisited, 1 = on stack, 2 = done
    fn visit(dag: &Dag, v: usize, state: &mut [u8], stack: &mut Vec<usize>) -> Option<Vec<usize>> {
        state[v] = 1;
        stack.push(v);
        for &c in dag.children(v) {
            if state[c] == 1 {
                let pos = stack.iter().position(|&s| s == c).unwrap_or(0);
                let mut cyc = stack[pos..].to_vec();
                cyc.push(c);
                return Some(cyc);
            }
            if state[c] == 0 {
                if let Some(cyc) = visit(dag, c, state, stack) {
                    return Some(cyc);
                }
            }
        }
        stack.pop();
        state[v] = 2;
        None
    }
    let mut state = vec![0u8; dag.len()];
    for v in 0..dag.len() {
        if state[v] == 0 {
            if let Some(c) = visit(dag, v, &mut state, &mut Vec::new()) {
                return c.into_iter().map(|i| dag.node(i).term.name.clone()).collect();
            }
        }
    }
    Vec::new()
}

impl MGraph {
    pub fn builder() -> GraphBuilder {
        GraphBuilder::new()
    }

    /// Node names in declaration order.
    pub fn node_names(&self) -> &[String] {
        &self.order
    }

    pub fn kind(&self, name: &str) -> Option<NodeKind> {
        self.kinds.get(name).copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&str, NodeKind)> {
        self.order.iter().map(|n| (n.as_str(), self.kinds[n]))
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> Vec<&str> {
        self.nodes().filter(|(_, k)| *k == kind).map(|(n, _)| n).collect()
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.edges.contains(&Edge::directed(from, to))
    }

    pub fn selection_of(&self, missing: &str) -> Option<&str> {
        self.selection_of.get(missing).map(|s| s.as_str())
    }

    /// The partially missing variable a selection node gates.
    pub fn missing_for(&self, selection: &str) -> Option<&str> {
        self.selection_of.iter().find(|(_, s)| s.as_str() == selection).map(|(m, _)| m.as_str())
    }

    pub fn selections(&self) -> impl Iterator<Item = (&str, &str)> {
        self.selection_of.iter().map(|(m, s)| (m.as_str(), s.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn parents(&self, name: &str) -> Vec<&str> {
        self.edges
            .iter()
            .filter_map(|e| match e {
                Edge::Directed(a, b) if b == name => Some(a.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Rebuilds the graph without the listed edges; absent edges are ignored.
    pub fn without_edges(&self, remove: &[Edge]) -> Result<MGraph, GraphError> {
        let mut b = self.to_builder();
        for e in remove {
            if let Edge::Directed(_, to) = e {
                if self.kinds.get(to) == Some(&NodeKind::Proxy) {
                    return Err(GraphError::ProxyEdge(format!("cannot remove mandated edge {e}")));
                }
            }
            b.edges.remove(e);
        }
        b.build()
    }

    fn to_builder(&self) -> GraphBuilder {
        GraphBuilder {
            order: self.order.clone(),
            kinds: self.kinds.clone(),
            selection_of: self.selection_of.clone(),
            edges: self.edges.clone(),
        }
    }

    /// Replaces each bidirected edge by a fresh latent common parent `L_k`.
    pub fn expand_latents(&self) -> MGraph {
        let mut b = self.to_builder();
        let bidirected: Vec<Edge> =
            self.edges.iter().filter(|e| matches!(e, Edge::Bidirected(..))).cloned().collect();
        let names = fresh_latent_names(&self.kinds, bidirected.len());
        for (l, e) in names.iter().zip(&bidirected) {
            if let Edge::Bidirected(a, c) = e {
                b.edges.remove(e);
                b.kinds.insert(l.clone(), NodeKind::Latent);
                b.order.push(l.clone());
                b.edges.insert(Edge::directed(l, a));
                b.edges.insert(Edge::directed(l, c));
            }
        }
        b.build().expect("latent expansion preserves validity")
    }

    /// Reflexive ancestors over the latent-expanded graph, sorted by name.
    pub fn ancestors(&self, targets: &[&str]) -> Result<BTreeSet<String>, GraphError> {
        let idx = targets
            .iter()
            .map(|t| self.dag.random_by_name(t).ok_or_else(|| GraphError::UnknownNode(t.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let mask = self.dag.ancestor_mask(&idx);
        Ok((0..self.dag.len()).filter(|&i| mask[i]).map(|i| self.dag.node(i).term.name.clone()).collect())
    }

    /// Line-oriented graph spec accepted by [`crate::parse_graph`].
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for name in &self.order {
            let kw = match self.kinds[name] {
                NodeKind::Observed => "obs",
                NodeKind::PartiallyMissing => "miss",
                NodeKind::Latent => "latent",
                NodeKind::Proxy | NodeKind::Selection => continue,
            };
            let _ = writeln!(out, "node {name} {kw}");
        }
        for (m, s) in &self.selection_of {
            let _ = writeln!(out, "sel {s} for {m}");
        }
        for e in &self.edges {
            match e {
                Edge::Directed(_, b) if self.kinds[b] == NodeKind::Proxy => {}
                Edge::Directed(a, b) => {
                    let _ = writeln!(out, "edge {a} -> {b}");
                }
                Edge::Bidirected(a, b) => {
                    let _ = writeln!(out, "bi {a} <-> {b}");
                }
            }
        }
        out
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph mgraph {\n");
        for name in &self.order {
            let attrs = match self.kinds[name] {
                NodeKind::Proxy => " [shape=doublecircle]",
                NodeKind::Latent => " [style=dashed]",
                NodeKind::Selection => " [shape=box]",
                _ => "",
            };
            let _ = writeln!(out, "  \"{name}\"{attrs};");
        }
        for e in &self.edges {
            match e {
                Edge::Directed(a, b) => {
                    let _ = writeln!(out, "  \"{a}\" -> \"{b}\";");
                }
                Edge::Bidirected(a, b) => {
                    let _ = writeln!(out, "  \"{a}\" -> \"{b}\" [style=dashed, dir=both];");
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1() -> MGraph {
        MGraph::builder()
            .node("D", NodeKind::Observed)
            .unwrap()
            .node("Y", NodeKind::PartiallyMissing)
            .unwrap()
            .selection("S", "Y")
            .unwrap()
            .edge("D", "Y")
            .unwrap()
            .build()
            .unwrap()
    }

    #[test]
    fn proxy_is_auto_created() {
        let g = m1();
        assert_eq!(g.kind("Y_star"), Some(NodeKind::Proxy));
        let mut p = g.parents("Y_star");
        p.sort();
        assert_eq!(p, vec!["S", "Y"]);
    }

    #[test]
    fn dangling_missing_variable() {
        let err = MGraph::builder().node("Y", NodeKind::PartiallyMissing).unwrap().build().unwrap_err();
        assert_eq!(err, GraphError::DanglingProxy("Y".into()));
    }

    #[test]
    fn cycle_is_named() {
        let mut b = GraphBuilder::new();
        for n in ["A", "B", "C"] {
            b.add_node(n, NodeKind::Observed).unwrap();
        }
        b.add_edge("A", "B").unwrap();
        b.add_edge("B", "C").unwrap();
        b.add_edge("C", "A").unwrap();
        match b.build().unwrap_err() {
            GraphError::Cycle(c) => assert_eq!(c.len(), 4),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn proxy_edges_rejected() {
        let mut b = GraphBuilder::new();
        b.add_node("Y", NodeKind::PartiallyMissing).unwrap();
        b.add_node("Z", NodeKind::Observed).unwrap();
        b.add_selection("S", "Y").unwrap();
        assert!(matches!(b.add_edge("Z", "Y_star"), Err(GraphError::ProxyEdge(_))));
        assert!(matches!(b.add_edge("Y_star", "Z"), Err(GraphError::ProxyEdge(_))));
    }

    #[test]
    fn expansion_adds_one_latent_per_bidirected_edge() {
        let g = MGraph::builder()
            .node("U_0", NodeKind::Latent)
            .unwrap()
            .node("U_1", NodeKind::Latent)
            .unwrap()
            .node("V", NodeKind::Latent)
            .unwrap()
            .bidirected("U_0", "U_1")
            .unwrap()
            .bidirected("U_1", "V")
            .unwrap()
            .bidirected("U_0", "V")
            .unwrap()
            .build()
            .unwrap();
        let e = g.expand_latents();
        assert_eq!(e.node_names().len(), 6);
        assert!(e.edges().iter().all(|x| matches!(x, Edge::Directed(..))));
        assert_eq!(e.expand_latents(), e);
    }

    #[test]
    fn ancestors_of_chain() {
        let g = MGraph::builder()
            .node("X", NodeKind::Observed)
            .unwrap()
            .node("D", NodeKind::Observed)
            .unwrap()
            .node("Y", NodeKind::Observed)
            .unwrap()
            .edge("X", "D")
            .unwrap()
            .edge("D", "Y")
            .unwrap()
            .build()
            .unwrap();
        let a: Vec<String> = g.ancestors(&["Y"]).unwrap().into_iter().collect();
        assert_eq!(a, vec!["D", "X", "Y"]);
        assert_eq!(g.ancestors(&["X"]).unwrap().len(), 1);
        assert!(g.ancestors(&["Q"]).is_err());
    }

    #[test]
    fn dot_marks_kinds() {
        let g = m1();
        let dot = g.to_dot();
        assert!(dot.contains("\"Y_star\" [shape=doublecircle]"));
    }
}
