//! Compiled DAG view shared by m-graphs (after latent expansion) and SWIGs.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::GraphError;
use crate::graph::NodeKind;
use crate::term::Term;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeRole {
    Random,
    Fixed,
}

#[derive(Debug, Clone)]
pub struct DagNode {
    pub term: Term,
    pub kind: NodeKind,
    pub role: NodeRole,
    /// Latent introduced by expanding a bidirected edge.
    pub generated: bool,
    /// For proxies: index of the selection node gating the read-out.
    pub selection: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct Dag {
    nodes: Vec<DagNode>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    random_index: HashMap<String, usize>,
    fixed_index: HashMap<String, usize>,
}

/// Anything d-separation queries can run on.
pub trait CausalGraph {
    fn dag(&self) -> &Dag;
}

impl CausalGraph for Dag {
    fn dag(&self) -> &Dag {
        self
    }
}

impl Dag {
    pub(crate) fn new(nodes: Vec<DagNode>, edges: &[(usize, usize)]) -> Self {
        let n = nodes.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for &(a, b) in edges {
            parents[b].push(a);
            children[a].push(b);
        }
        for v in parents.iter_mut().chain(children.iter_mut()) {
            v.sort_unstable();
            v.dedup();
        }
        let mut random_index = HashMap::new();
        let mut fixed_index = HashMap::new();
        for (i, node) in nodes.iter().enumerate() {
            match node.role {
                NodeRole::Random => random_index.insert(node.term.name.clone(), i),
                NodeRole::Fixed => fixed_index.insert(node.term.name.clone(), i),
            };
        }
        Dag { nodes, parents, children, random_index, fixed_index }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> &DagNode {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[DagNode] {
        &self.nodes
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.nodes[i].role == NodeRole::Fixed
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, ch) in self.children.iter().enumerate() {
            for &b in ch {
                out.push((a, b));
            }
        }
        out
    }

    /// Index of the random node named by `name`, ignoring labels.
    pub fn random_by_name(&self, name: &str) -> Option<usize> {
        self.random_index.get(name).copied()
    }

    /// Resolves a query term to a random node; labels must match exactly.
    pub fn resolve(&self, t: &Term) -> Result<usize, GraphError> {
        match self.random_index.get(&t.name) {
            Some(&i) => {
                if self.nodes[i].term.labels != t.labels {
                    return Err(GraphError::LabelMismatch {
                        term: t.to_string(),
                        expected: self.nodes[i].term.to_string(),
                    });
                }
                Ok(i)
            }
            None if self.fixed_index.contains_key(&t.name) => Err(GraphError::FixedTerm(t.to_string())),
            None => Err(GraphError::UnknownNode(t.to_string())),
        }
    }

    pub fn resolve_all(&self, ts: &[Term]) -> Result<Vec<usize>, GraphError> {
        ts.iter().map(|t| self.resolve(t)).collect()
    }

    /// Kahn order; `None` if the directed part has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(|p| p.len()).collect();
        let mut stack: Vec<usize> = (0..n).rev().filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = stack.pop() {
            order.push(v);
            for &c in self.children[v].iter().rev() {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    stack.push(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Reflexive ancestor mask of `targets`.
    pub fn ancestor_mask(&self, targets: &[usize]) -> Vec<bool> {
        self.closure(targets, &self.parents)
    }

    /// Reflexive descendant mask of `sources`.
    pub fn descendant_mask(&self, sources: &[usize]) -> Vec<bool> {
        self.closure(sources, &self.children)
    }

    fn closure(&self, start: &[usize], adj: &[Vec<usize>]) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack: Vec<usize> = start.to_vec();
        while let Some(v) = stack.pop() {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            stack.extend(adj[v].iter().copied().filter(|&u| !seen[u]));
        }
        seen
    }
}
