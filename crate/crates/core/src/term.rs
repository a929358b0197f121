//! Terms (possibly counterfactual node references) and conditional-independence statements.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::GraphError;

/// A node reference, optionally carrying intervention labels: `Y`, `Y(d)`, `Y_star(Y(d),S(d))`.
///
/// Identity is `(name, labels)`. `args` only affects rendering of labelled proxies.
#[derive(Debug, Clone)]
pub struct Term {
    pub name: String,
    pub labels: Vec<String>,
    args: Vec<Term>,
}

impl Term {
    pub fn plain(name: impl Into<String>) -> Self {
        Term { name: name.into(), labels: Vec::new(), args: Vec::new() }
    }

    pub fn labelled(name: impl Into<String>, labels: Vec<String>) -> Self {
        Term { name: name.into(), labels, args: Vec::new() }
    }

    pub(crate) fn with_args(mut self, args: Vec<Term>) -> Self {
        self.args = args;
        self
    }

    pub fn args(&self) -> &[Term] {
        &self.args
    }

    pub fn is_counterfactual(&self) -> bool {
        !self.labels.is_empty()
    }

    /// Parses `Y`, `Y(d)`, `Y(a,d)` or `Y_star(Y(d),S(d))`.
    pub fn parse(text: &str) -> Result<Term, GraphError> {
        let text = text.trim();
        let bad = || GraphError::Syntax { line: 0, column: 0, message: format!("malformed term `{text}`") };
        let Some(open) = text.find('(') else {
            check_ident(text).map_err(|_| bad())?;
            return Ok(Term::plain(text));
        };
        if !text.ends_with(')') {
            return Err(bad());
        }
        let name = &text[..open];
        check_ident(name).map_err(|_| bad())?;
        let inner = &text[open + 1..text.len() - 1];
        let items = split_top_level(inner);
        if items.iter().any(|s| s.trim().is_empty()) {
            return Err(bad());
        }
        let nested = items.iter().any(|s| s.contains('('));
        if nested {
            let args = items.iter().map(|s| Term::parse(s)).collect::<Result<Vec<_>, _>>()?;
            let mut labels: Vec<String> = Vec::new();
            for a in &args {
                for l in &a.labels {
                    if !labels.contains(l) {
                        labels.push(l.clone());
                    }
                }
            }
            Ok(Term { name: name.to_string(), labels, args })
        } else {
            let labels = items.iter().map(|s| s.trim().to_string()).collect::<Vec<_>>();
            for l in &labels {
                check_ident(l).map_err(|_| bad())?;
            }
            Ok(Term::labelled(name, labels))
        }
    }

    /// Parses a comma-separated list of terms; an empty string yields an empty list.
    pub fn parse_list(text: &str) -> Result<Vec<Term>, GraphError> {
        if text.trim().is_empty() {
            return Ok(Vec::new());
        }
        split_top_level(text).iter().map(|s| Term::parse(s)).collect()
    }
}

pub(crate) fn check_ident(s: &str) -> Result<(), GraphError> {
    let mut chars = s.chars();
    let ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
    if ok {
        Ok(())
    } else {
        Err(GraphError::InvalidName(s.to_string()))
    }
}

fn split_top_level(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '(' => {
                depth += 1;
                cur.push(c);
            }
            ')' => {
                depth -= 1;
                cur.push(c);
            }
            ',' if depth == 0 => out.push(std::mem::take(&mut cur).trim().to_string()),
            _ => cur.push(c),
        }
    }
    out.push(cur.trim().to_string());
    out
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.labels == other.labels
    }
}

impl Eq for Term {}

impl std::hash::Hash for Term {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.name.hash(state);
        self.labels.hash(state);
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Term {
    fn cmp(&self, other: &Self) -> Ordering {
        self.name.cmp(&other.name).then_with(|| self.labels.cmp(&other.labels))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.args.is_empty() {
            let inner: Vec<String> = self.args.iter().map(|a| a.to_string()).collect();
            write!(f, "{}({})", self.name, inner.join(","))
        } else if !self.labels.is_empty() {
            write!(f, "{}({})", self.name, self.labels.join(","))
        } else {
            f.write_str(&self.name)
        }
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Term::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// `left _||_ right | given`, with selection events `[given S=1]` recorded separately.
///
/// Canonical orientation: the side with fewer terms is on the left; ties break lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CIStatement {
    left: BTreeSet<Term>,
    right: BTreeSet<Term>,
    given: BTreeSet<Term>,
    selected: BTreeSet<Term>,
}

impl CIStatement {
    pub fn new(
        left: impl IntoIterator<Item = Term>,
        right: impl IntoIterator<Item = Term>,
        given: impl IntoIterator<Item = Term>,
    ) -> Result<Self, GraphError> {
        Self::with_selection(left, right, given, std::iter::empty())
    }

    pub fn with_selection(
        left: impl IntoIterator<Item = Term>,
        right: impl IntoIterator<Item = Term>,
        given: impl IntoIterator<Item = Term>,
        selected: impl IntoIterator<Item = Term>,
    ) -> Result<Self, GraphError> {
        let mut left: BTreeSet<Term> = left.into_iter().collect();
        let mut right: BTreeSet<Term> = right.into_iter().collect();
        let given: BTreeSet<Term> = given.into_iter().collect();
        let selected: BTreeSet<Term> = selected.into_iter().collect();
        if left.is_empty() || right.is_empty() {
            return Err(GraphError::InvalidStatement("both sides must be nonempty".into()));
        }
        let all = [&left, &right, &given, &selected];
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                if let Some(t) = all[i].intersection(all[j]).next() {
                    return Err(GraphError::OverlappingSets(t.to_string()));
                }
            }
        }
        if orientation_key(&right) < orientation_key(&left) {
            std::mem::swap(&mut left, &mut right);
        }
        Ok(CIStatement { left, right, given, selected })
    }

    pub fn left(&self) -> &BTreeSet<Term> {
        &self.left
    }

    pub fn right(&self) -> &BTreeSet<Term> {
        &self.right
    }

    pub fn given(&self) -> &BTreeSet<Term> {
        &self.given
    }

    /// Selection terms whose event `=1` the statement is conditioned on.
    pub fn selected(&self) -> &BTreeSet<Term> {
        &self.selected
    }

    /// The full conditioning set used for separation: `given` plus the selection terms.
    pub fn conditioning(&self) -> Vec<Term> {
        self.given.iter().chain(self.selected.iter()).cloned().collect()
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.left.iter().chain(&self.right).chain(&self.given).chain(&self.selected)
    }

    pub fn is_counterfactual(&self) -> bool {
        self.terms().any(|t| t.is_counterfactual())
    }

    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let bad = |m: &str| GraphError::Syntax { line: 0, column: 0, message: format!("{m} in statement `{text}`") };
        let mut body = text.trim();
        let mut selected = Vec::new();
        if let Some(pos) = body.find(" [given ") {
            let flag = &body[pos + 8..];
            let flag = flag.strip_suffix(']').ok_or_else(|| bad("unterminated selection flag"))?;
            for item in split_top_level(flag) {
                let t = item.strip_suffix("=1").ok_or_else(|| bad("selection flag must read `S=1`"))?;
                selected.push(Term::parse(t)?);
            }
            body = &body[..pos];
        }
        let (left, rest) = body.split_once("_||_").ok_or_else(|| bad("missing `_||_`"))?;
        let (right, given) = match rest.split_once('|') {
            Some((r, g)) => (r, g),
            None => (rest, ""),
        };
        CIStatement::with_selection(
            Term::parse_list(left)?,
            Term::parse_list(right)?,
            Term::parse_list(given)?,
            selected,
        )
    }
}

fn orientation_key(side: &BTreeSet<Term>) -> (usize, Vec<&Term>) {
    (side.len(), side.iter().collect())
}

fn join(set: &BTreeSet<Term>) -> String {
    set.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for CIStatement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} _||_ {}", join(&self.left), join(&self.right))?;
        if !self.given.is_empty() {
            write!(f, " | {}", join(&self.given))?;
        }
        if !self.selected.is_empty() {
            let flags: Vec<String> = self.selected.iter().map(|t| format!("{t}=1")).collect();
            write!(f, " [given {}]", flags.join(","))?;
        }
        Ok(())
    }
}

impl Serialize for CIStatement {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for CIStatement {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        CIStatement::parse(&s).map_err(serde::de::Error::custom)
    }
}
