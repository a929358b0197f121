//! Parser for the line-oriented graph spec.
//!
//! ```text
//! node <id> (obs|miss|latent)
//! sel <id> for <missId>
//! edge <id> -> <id>
//! bi <id> <-> <id>
//! ```
//! Statements are separated by newlines or `;`; `#` starts a comment.

use crate::error::GraphError;
use crate::graph::{GraphBuilder, MGraph, NodeKind};

struct Statement<'a> {
    line: usize,
    column: usize,
    tokens: Vec<(usize, &'a str)>,
}

fn statements(text: &str) -> Vec<Statement<'_>> {
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let mut start = 0;
        for piece in line.split(';') {
            let mut tokens = Vec::new();
            let mut offset = 0;
            for tok in piece.split_whitespace() {
                let rel = piece[offset..].find(tok).unwrap_or(0) + offset;
                tokens.push((start + rel + 1, tok));
                offset = rel + tok.len();
            }
            if !tokens.is_empty() {
                out.push(Statement { line: ln + 1, column: tokens[0].0, tokens });
            }
            start += piece.len() + 1;
        }
    }
    out
}

pub fn parse_graph(text: &str) -> Result<MGraph, GraphError> {
    let mut b = GraphBuilder::new();
    for st in statements(text) {
        let syntax = |column: usize, message: String| GraphError::Syntax { line: st.line, column, message };
        let words: Vec<&str> = st.tokens.iter().map(|t| t.1).collect();
        let col = |i: usize| st.tokens.get(i).map(|t| t.0).unwrap_or(st.column);
        match words.as_slice() {
            ["node", id, kind] => {
                let kind = match *kind {
                    "obs" => NodeKind::Observed,
                    "miss" => NodeKind::PartiallyMissing,
                    "latent" => NodeKind::Latent,
                    other => return Err(syntax(col(2), format!("unknown node kind `{other}`"))),
                };
                b.add_node(id, kind)?;
            }
            ["sel", id, "for", missing] => b.add_selection(id, missing)?,
            ["edge", a, "->", c] => b.add_edge(a, c)?,
            ["bi", a, "<->", c] => b.add_bidirected(a, c)?,
            [kw, ..] if ["node", "sel", "edge", "bi"].contains(kw) => {
                return Err(syntax(st.column, format!("malformed `{kw}` statement")))
            }
            [kw, ..] => return Err(syntax(st.column, format!("unknown keyword `{kw}`"))),
            [] => {}
        }
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_spec() {
        let g = parse_graph("node D obs; node Y miss; sel S_Y for Y; edge D -> Y").unwrap();
        assert_eq!(g.node_names(), ["D", "Y", "S_Y", "Y_star"]);
        assert_eq!(g.kind("Y_star"), Some(NodeKind::Proxy));
    }

    #[test]
    fn self_loop_rejected() {
        assert_eq!(parse_graph("edge D -> D").unwrap_err(), GraphError::SelfLoop("D".into()));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_graph("node D obs\n  node Y maybe").unwrap_err();
        assert_eq!(err, GraphError::Syntax { line: 2, column: 10, message: "unknown node kind `maybe`".into() });
        let err = parse_graph("node D obs; edge D => Y").unwrap_err();
        assert!(matches!(err, GraphError::Syntax { line: 1, column: 13, .. }), "{err:?}");
        let err = parse_graph("vertex D").unwrap_err();
        assert!(matches!(err, GraphError::Syntax { line: 1, column: 1, .. }));
    }

    #[test]
    fn comments_and_blank_lines() {
        let g = parse_graph("# header\n\nnode A obs # trailing\nnode B obs;;edge A -> B\n").unwrap();
        assert!(g.has_edge("A", "B"));
    }

    #[test]
    fn duplicate_node() {
        assert_eq!(parse_graph("node A obs; node A latent").unwrap_err(), GraphError::DuplicateNode("A".into()));
    }

    #[test]
    fn round_trip() {
        let text = "node X obs\nnode D obs\nnode Y miss\nnode U latent\nsel S for Y\n\
                    edge X -> D\nedge D -> Y\nedge U -> S\nedge U -> Y\nbi X <-> U\n";
        let g = parse_graph(text).unwrap();
        assert_eq!(parse_graph(&g.serialize()).unwrap(), g);
    }
}
