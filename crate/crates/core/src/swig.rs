//! Node splitting into single-world intervention graphs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dag::{CausalGraph, Dag, DagNode, NodeRole};
use crate::enumerate::{enumerate_independencies, Scope};
use crate::error::GraphError;
use crate::graph::{MGraph, NodeKind};
use crate::term::{CIStatement, Term};

/// Intervention targets mapped to their value symbols, e.g. `D -> d`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Intervention {
    assignments: BTreeMap<String, String>,
}

impl Intervention {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(node: &str, symbol: &str) -> Self {
        Intervention::new().with(node, symbol)
    }

    /// Sets `node` to `symbol`, conventionally the lowercased node name.
    pub fn with(mut self, node: &str, symbol: &str) -> Self {
        self.assignments.insert(node.to_string(), symbol.to_string());
        self
    }

    /// Parses `D=d` or `D=d,A=a`.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut iv = Intervention::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (n, s) = item
                .split_once('=')
                .ok_or_else(|| GraphError::InvalidIntervention(format!("expected `node=symbol`, got `{item}`")))?;
            crate::term::check_ident(n.trim())?;
            crate::term::check_ident(s.trim())?;
            iv.assignments.insert(n.trim().to_string(), s.trim().to_string());
        }
        if iv.assignments.is_empty() {
            return Err(GraphError::InvalidIntervention("no targets".into()));
        }
        Ok(iv)
    }

    pub fn assignments(&self) -> &BTreeMap<String, String> {
        &self.assignments
    }

    pub fn symbol(&self, node: &str) -> Option<&str> {
        self.assignments.get(node).map(|s| s.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct SwigGraph {
    source: MGraph,
    intervention: Intervention,
    dag: Dag,
}

impl CausalGraph for SwigGraph {
    fn dag(&self) -> &Dag {
        &self.dag
    }
}

impl SwigGraph {
    pub fn source(&self) -> &MGraph {
        &self.source
    }

    pub fn intervention(&self) -> &Intervention {
        &self.intervention
    }

    pub fn nodes(&self) -> Vec<(Term, NodeRole)> {
        self.dag.nodes().iter().map(|n| (n.term.clone(), n.role)).collect()
    }

    pub fn edges(&self) -> Vec<(Term, Term)> {
        self.dag
            .edges()
            .into_iter()
            .map(|(a, b)| (self.dag.node(a).term.clone(), self.dag.node(b).term.clone()))
            .collect()
    }

    /// The random-half term for an original node name, with its labels.
    pub fn term(&self, name: &str) -> Option<&Term> {
        self.dag.random_by_name(name).map(|i| &self.dag.node(i).term)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph swig {\n");
        for (i, n) in self.dag.nodes().iter().enumerate() {
            let attrs = match (n.role, n.kind) {
                (NodeRole::Fixed, _) => " [shape=box, style=bold]",
                (_, NodeKind::Proxy) => " [shape=doublecircle]",
                (_, NodeKind::Latent) => " [style=dashed]",
                _ => "",
            };
            let _ = writeln!(out, "  n{i} [label=\"{}\"]{attrs};", n.term);
        }
        for (a, b) in self.dag.edges() {
            let _ = writeln!(out, "  n{a} -> n{b};");
        }
        out.push_str("}\n");
        out
    }
}

/// Splits every target into a random half (incoming edges) and a fixed half (outgoing
/// edges), then labels each random node with the symbols of the fixed halves above it.
pub fn split(g: &MGraph, iv: &Intervention) -> Result<SwigGraph, GraphError> {
    let src = g.dag();
    let mut fixed_of = BTreeMap::new();
    for (name, symbol) in &iv.assignments {
        let i = src.random_by_name(name).ok_or_else(|| GraphError::UnknownNode(name.clone()))?;
        match src.node(i).kind {
            NodeKind::Proxy | NodeKind::Latent => {
                return Err(GraphError::InvalidIntervention(format!("cannot intervene on {:?} node `{name}`", src.node(i).kind)))
            }
            _ => {}
        }
        fixed_of.insert(i, symbol.clone());
    }
    let n = src.len();
    let topo = src.topological_order().expect("validated graphs are acyclic");
    let mut targets: Vec<usize> = fixed_of.keys().copied().collect();
    targets.sort_by_key(|t| topo.iter().position(|v| v == t));

    let mut nodes: Vec<DagNode> = src.nodes().to_vec();
    let mut fixed_index = BTreeMap::new();
    for &t in &targets {
        fixed_index.insert(t, nodes.len());
        nodes.push(DagNode {
            term: Term::plain(fixed_of[&t].clone()),
            kind: src.node(t).kind,
            role: NodeRole::Fixed,
            generated: false,
            selection: None,
        });
    }
    let edges: Vec<(usize, usize)> = src
        .edges()
        .into_iter()
        .map(|(a, b)| (fixed_index.get(&a).copied().unwrap_or(a), b))
        .collect();
    let unlabelled = Dag::new(nodes.clone(), &edges);

    let mut labels: Vec<Vec<String>> = vec![Vec::new(); n];
    for &t in &targets {
        let reach = unlabelled.descendant_mask(&[fixed_index[&t]]);
        for (v, l) in labels.iter_mut().enumerate() {
            if reach[v] {
                l.push(fixed_of[&t].clone());
            }
        }
    }
    for v in 0..n {
        nodes[v].term = Term::labelled(src.node(v).term.name.clone(), labels[v].clone());
    }
    for v in 0..n {
        if nodes[v].kind == NodeKind::Proxy && !labels[v].is_empty() {
            // the missing variable renders before its selection node
            let mut parents: Vec<usize> =
                src.parents(v).iter().copied().filter(|&p| !labels[p].is_empty()).collect();
            parents.sort_by_key(|&p| src.node(p).kind != NodeKind::PartiallyMissing);
            let args = parents.iter().map(|&p| nodes[p].term.clone()).collect();
            nodes[v].term = nodes[v].term.clone().with_args(args);
        }
    }
    Ok(SwigGraph { source: g.clone(), intervention: iv.clone(), dag: Dag::new(nodes, &edges) })
}

/// Implied independencies of the SWIG over all non-generated random terms.
pub fn counterfactual_independencies(
    g: &MGraph,
    iv: &Intervention,
    max_cond: usize,
) -> Result<Vec<CIStatement>, GraphError> {
    Ok(enumerate_independencies(&split(g, iv)?, Scope::All, max_cond))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_graph;
    use crate::separation::d_separated_str;

    const M2: &str = "node X obs; node D obs; node Y miss; sel S for Y; \
                      edge X -> D; edge X -> S; edge X -> Y; edge D -> Y; edge D -> S";

    #[test]
    fn m2_labels() {
        let g = parse_graph(M2).unwrap();
        let s = split(&g, &Intervention::single("D", "d")).unwrap();
        assert_eq!(s.term("Y").unwrap().to_string(), "Y(d)");
        assert_eq!(s.term("S").unwrap().to_string(), "S(d)");
        assert_eq!(s.term("Y_star").unwrap().to_string(), "Y_star(Y(d),S(d))");
        assert_eq!(s.term("X").unwrap().to_string(), "X");
        assert_eq!(s.term("D").unwrap().to_string(), "D");
        assert!(d_separated_str(&s, "S(d)", "Y(d),D", "X").unwrap());
        assert!(d_separated_str(&s, "Y(d)", "D", "X").unwrap());
        assert!(matches!(d_separated_str(&s, "d", "X", ""), Err(GraphError::FixedTerm(_))));
        assert!(matches!(d_separated_str(&s, "Y", "X", ""), Err(GraphError::LabelMismatch { .. })));
    }

    #[test]
    fn fixed_half_has_no_parents() {
        let g = parse_graph(M2).unwrap();
        let s = split(&g, &Intervention::single("D", "d")).unwrap();
        let fixed: Vec<usize> = (0..s.dag().len()).filter(|&i| s.dag().is_fixed(i)).collect();
        assert_eq!(fixed.len(), 1);
        assert!(s.dag().parents(fixed[0]).is_empty());
        assert_eq!(s.dag().children(fixed[0]).len(), 2);
    }

    #[test]
    fn childless_target_is_isolated() {
        let g = parse_graph("node X obs; node D obs; edge X -> D").unwrap();
        let s = split(&g, &Intervention::single("D", "d")).unwrap();
        assert!(s.nodes().iter().all(|(t, _)| t.labels.is_empty()));
        assert_eq!(s.edges().len(), 1);
    }

    #[test]
    fn multi_target_labels_follow_topological_order() {
        let g = parse_graph("node B obs; node A obs; node Y obs; edge A -> B; edge B -> Y; edge A -> Y").unwrap();
        let s = split(&g, &Intervention::single("B", "b").with("A", "a")).unwrap();
        assert_eq!(s.term("Y").unwrap().to_string(), "Y(a,b)");
        assert_eq!(s.term("B").unwrap().to_string(), "B(a)");
    }

    #[test]
    fn latent_and_proxy_targets_rejected() {
        let g = parse_graph("node U latent; node Y miss; sel S for Y; edge U -> Y").unwrap();
        assert!(split(&g, &Intervention::single("U", "u")).is_err());
        assert!(split(&g, &Intervention::single("Y_star", "y")).is_err());
        assert!(Intervention::parse("D").is_err());
        assert_eq!(Intervention::parse("D=d").unwrap(), Intervention::single("D", "d"));
    }
}
