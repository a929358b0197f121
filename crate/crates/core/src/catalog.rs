//! Testable-implication catalogs for restricted attrition and panel models.

use serde::{Deserialize, Serialize};

use crate::enumerate::{implied_by, minimal_testable_set};
use crate::error::GraphError;
use crate::graph::{Edge, MGraph, NodeKind};
use crate::graphoid::Closure;
use crate::models;
use crate::parse::parse_graph;
use crate::separation::d_separated;
use crate::swig::{split, Intervention};
use crate::term::{CIStatement, Term};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub test_name: String,
    pub restrictions_removed: Vec<Edge>,
    /// Observed-level statements implied by the restricted graph.
    pub implied: Vec<CIStatement>,
    /// Implied statements involving variables that are never fully observed.
    #[serde(default)]
    pub untestable: Vec<CIStatement>,
    /// Counterfactual statements read off the restricted SWIG.
    #[serde(default)]
    pub swig_implied: Vec<CIStatement>,
    /// Pruned testable statements of the restricted graph not implied by `implied`.
    #[serde(default)]
    pub residual: Vec<CIStatement>,
    #[serde(default)]
    pub identified_estimand: Option<String>,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ImplicationCatalog {
    pub entries: Vec<CatalogEntry>,
}

impl ImplicationCatalog {
    pub fn entry(&self, name: &str) -> Option<&CatalogEntry> {
        self.entries.iter().find(|e| e.test_name == name)
    }

    /// A catalog restricted to one entry.
    pub fn only(&self, name: &str) -> Option<ImplicationCatalog> {
        self.entry(name).map(|e| ImplicationCatalog { entries: vec![e.clone()] })
    }

    /// One block per entry: the name, removed edges, then statements in text form.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("[{}]\n", e.test_name));
            let removed: Vec<String> = e.restrictions_removed.iter().map(|r| r.to_string()).collect();
            out.push_str(&format!("removed: {}\n", if removed.is_empty() { "none".into() } else { removed.join("; ") }));
            for (label, list) in [
                ("implied", &e.implied),
                ("untestable", &e.untestable),
                ("swig", &e.swig_implied),
                ("residual", &e.residual),
            ] {
                for s in list {
                    out.push_str(&format!("{label}: {s}\n"));
                }
            }
            if let Some(est) = &e.identified_estimand {
                out.push_str(&format!("estimand: {est}\n"));
            }
            for n in &e.notes {
                out.push_str(&format!("note: {n}\n"));
            }
        }
        out
    }
}

/// Which nodes play treatment and selection in an attrition design.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttritionDesign {
    pub treatment: String,
    pub selection: Option<String>,
}

fn holds(g: &impl crate::dag::CausalGraph, s: &CIStatement) -> Result<bool, GraphError> {
    let l: Vec<Term> = s.left().iter().cloned().collect();
    let r: Vec<Term> = s.right().iter().cloned().collect();
    Ok(d_separated(g, &l, &r, &s.conditioning())?.separated)
}

/// Block-level atoms for covers: covariates are treated as one block `X`.
struct Blocks {
    x: Vec<Term>,
    d: Term,
    s: Term,
}

impl Blocks {
    /// The six pairwise statements among `{X, D, S}`, marginal or given the third block.
    fn candidates(&self) -> Vec<(CIStatement, crate::graphoid::Triple)> {
        const X: u64 = 1;
        const D: u64 = 2;
        const S: u64 = 4;
        let members = |m: u64| -> Vec<Term> {
            let mut v = Vec::new();
            if m & X != 0 {
                v.extend(self.x.iter().cloned());
            }
            if m & D != 0 {
                v.push(self.d.clone());
            }
            if m & S != 0 {
                v.push(self.s.clone());
            }
            v
        };
        let mut out = Vec::new();
        for (a, b, c) in [(D, S, X), (S, X, D), (X, D, S)] {
            for given in [0, c] {
                let st = CIStatement::new(members(a), members(b), members(given)).expect("disjoint blocks");
                out.push((st, (a, b, given)));
            }
        }
        out
    }
}

/// Smallest set of true block statements whose semi-graphoid closure contains every true
/// block statement; covers containing `primary` win ties, then candidate order.
fn minimum_cover(g: &MGraph, blocks: &Blocks, primary: &CIStatement) -> Result<Vec<CIStatement>, GraphError> {
    let mut truths = Vec::new();
    for (st, t) in blocks.candidates() {
        if holds(g, &st)? {
            truths.push((st, t));
        }
    }
    let k = truths.len();
    let mut best: Option<(usize, bool, u32)> = None;
    for mask in 0u32..(1 << k) {
        let chosen: Vec<_> = (0..k).filter(|i| mask & (1 << i) != 0).map(|i| truths[i].1).collect();
        let cl = Closure::from_triples(chosen);
        if !truths.iter().all(|(_, t)| cl.contains(*t)) {
            continue;
        }
        let size = mask.count_ones() as usize;
        let has_primary = (0..k).any(|i| mask & (1 << i) != 0 && &truths[i].0 == primary);
        let better = match best {
            None => true,
            Some((bs, bp, _)) => size < bs || (size == bs && has_primary && !bp),
        };
        if better {
            best = Some((size, has_primary, mask));
        }
    }
    let mask = best.map_or(0, |b| b.2);
    let mut cover: Vec<CIStatement> = (0..k).filter(|i| mask & (1 << i) != 0).map(|i| truths[i].0.clone()).collect();
    cover.sort();
    Ok(cover)
}

fn residual(restricted: &MGraph, implied: &[CIStatement]) -> Vec<CIStatement> {
    minimal_testable_set(restricted).into_iter().filter(|s| !implied_by(implied, s)).collect()
}

pub fn attrition_catalog(g: &MGraph, design: &AttritionDesign, randomized: bool) -> Result<ImplicationCatalog, GraphError> {
    let d = design.treatment.clone();
    match g.kind(&d) {
        Some(NodeKind::Observed) => {}
        Some(_) => return Err(GraphError::AmbiguousDesign(format!("treatment `{d}` must be observed"))),
        None => return Err(GraphError::UnknownNode(d)),
    }
    let selections = g.nodes_of_kind(NodeKind::Selection);
    let s = match (&design.selection, selections.as_slice()) {
        (Some(s), _) if selections.contains(&s.as_str()) => s.clone(),
        (Some(s), _) => return Err(GraphError::AmbiguousDesign(format!("`{s}` is not a selection node"))),
        (None, [one]) => one.to_string(),
        (None, _) => return Err(GraphError::AmbiguousDesign(format!("{} selection nodes; name one", selections.len()))),
    };
    let y = g.missing_for(&s).expect("selection nodes gate a variable").to_string();
    let x: Vec<String> =
        g.nodes_of_kind(NodeKind::Observed).into_iter().filter(|n| *n != d).map(str::to_string).collect();
    if x.is_empty() {
        return Err(GraphError::AmbiguousDesign("no covariates besides the treatment".into()));
    }
    let blocks = Blocks { x: x.iter().map(Term::plain).collect(), d: Term::plain(&d), s: Term::plain(&s) };
    let stmt = |text: String| CIStatement::parse(&text).expect("well-formed");
    let xs = x.join(",");
    let x_to = |target: &str| x.iter().map(|v| Edge::directed(v, target)).collect::<Vec<_>>();
    let d_to_s = vec![Edge::directed(&d, &s)];

    let mut specs: Vec<(String, Vec<Edge>, CIStatement)> = Vec::new();
    if randomized {
        let mut det = x_to(&d);
        det.extend(x_to(&s));
        let mut diff = x_to(&d);
        diff.extend(d_to_s.clone());
        specs.push(("Determinants of Attrition / Selective Attrition (1)".into(), det, stmt(format!("{s} _||_ {xs}"))));
        specs.push(("Differential Attrition / Selective Attrition (2)".into(), diff, stmt(format!("{d} _||_ {s}"))));
    } else {
        let mut sel1 = x_to(&d);
        sel1.extend(x_to(&s));
        let mut sel2 = x_to(&d);
        sel2.extend(d_to_s.clone());
        specs.push(("Differential Attrition".into(), d_to_s.clone(), stmt(format!("{d} _||_ {s} | {xs}"))));
        specs.push(("Determinants of Attrition".into(), x_to(&s), stmt(format!("{s} _||_ {xs} | {d}"))));
        specs.push(("Selective Attrition (1)".into(), sel1, stmt(format!("{xs} _||_ {d} | {s}"))));
        specs.push(("Selective Attrition (2)".into(), sel2, stmt(format!("{xs} _||_ {d} | {s}"))));
    }

    let mut entries = Vec::new();
    for (name, remove, primary) in specs {
        let present: Vec<Edge> = remove.into_iter().filter(|e| g.edges().contains(e)).collect();
        let restricted = g.without_edges(&present)?;
        let implied = minimum_cover(&restricted, &blocks, &primary)?;
        let mut swig_implied = Vec::new();
        let mut estimand = None;
        if randomized {
            let swig = split(&restricted, &Intervention::single(&d, &d.to_lowercase()))?;
            let yd = swig.term(&y).cloned().expect("outcome present");
            let sd = swig.term(&s).cloned().expect("selection present");
            let dd = swig.term(&d).cloned().expect("treatment present");
            let sep = |r: &[Term], z: &[Term]| d_separated(&swig, std::slice::from_ref(&yd), r, z).map(|v| v.separated);
            let marginal: Vec<Term> = if sep(&[dd.clone(), sd.clone()], &[])? {
                vec![dd.clone(), sd.clone()]
            } else {
                [dd.clone(), sd.clone()].into_iter().filter(|t| sep(std::slice::from_ref(t), &[]).unwrap_or(false)).collect()
            };
            if !marginal.is_empty() {
                swig_implied.push(CIStatement::new([yd.clone()], marginal.clone(), [])?);
            }
            let rest: Vec<Term> = [dd, sd].into_iter().filter(|t| !marginal.contains(t)).collect();
            if !rest.is_empty() && sep(&rest, &blocks.x)? {
                swig_implied.push(CIStatement::new([yd.clone()], rest.clone(), blocks.x.clone())?);
            }
            estimand = Some(if rest.is_empty() {
                format!("E[{y}(1) - {y}(0)] from selected units without covariates")
            } else {
                format!("E[{y}(1) - {y}(0)] after conditioning on {xs}")
            });
        }
        entries.push(CatalogEntry {
            test_name: name,
            restrictions_removed: present,
            residual: residual(&restricted, &implied),
            implied,
            untestable: Vec::new(),
            swig_implied,
            identified_estimand: estimand,
            notes: Vec::new(),
        });
    }
    Ok(ImplicationCatalog { entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PanelVariant {
    NoExclusion,
    ExclusionI,
    ExclusionII,
}

impl std::str::FromStr for PanelVariant {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "NoExclusion" => Ok(PanelVariant::NoExclusion),
            "ExclusionI" => Ok(PanelVariant::ExclusionI),
            "ExclusionII" => Ok(PanelVariant::ExclusionII),
            other => Err(GraphError::InvalidStatement(format!("unknown panel variant `{other}`"))),
        }
    }
}

impl PanelVariant {
    pub fn removed_edges(self) -> Vec<Edge> {
        match self {
            PanelVariant::NoExclusion => vec![],
            PanelVariant::ExclusionI => vec![Edge::bidirected("U_0", "V"), Edge::bidirected("U_1", "V")],
            PanelVariant::ExclusionII => vec![Edge::directed("D", "S")],
        }
    }

    pub fn graph(self) -> MGraph {
        parse_graph(models::PANEL)
            .and_then(|g| g.without_edges(&self.removed_edges()))
            .expect("built-in panel graph is valid")
    }
}

pub fn panel_catalog(variant: PanelVariant) -> Result<ImplicationCatalog, GraphError> {
    let g = variant.graph();
    let parse = |xs: &[&str]| {
        let mut v = xs.iter().map(|s| CIStatement::parse(s)).collect::<Result<Vec<_>, _>>()?;
        v.sort();
        Ok::<_, GraphError>(v)
    };
    let (name, implied, untestable, swig, estimand) = match variant {
        PanelVariant::NoExclusion => (
            "NoExclusion",
            parse(&["D _||_ Y_0"])?,
            vec![],
            vec![],
            "none: the responder contrast is biased",
        ),
        PanelVariant::ExclusionI => (
            "ExclusionI",
            parse(&["Y_0 _||_ D,S"])?,
            parse(&["S _||_ Y_1 | D"])?,
            parse(&["Y_1(d) _||_ D,S(d)"])?,
            "population effect E[Y_1(1) - Y_1(0)], equal to the responder effect",
        ),
        PanelVariant::ExclusionII => (
            "ExclusionII",
            parse(&["D _||_ Y_0", "D _||_ S"])?,
            vec![],
            parse(&["Y_1(d) _||_ D | S"])?,
            "responder effect E[Y_1(1) - Y_1(0) | S=1]",
        ),
    };
    let swig_graph = split(&g, &Intervention::single("D", "d"))?;
    for s in implied.iter().chain(&untestable) {
        assert!(holds(&g, s)?, "{s} must hold on the {name} graph");
    }
    for s in &swig {
        assert!(holds(&swig_graph, s)?, "{s} must hold on the {name} SWIG");
    }
    let mut notes = Vec::new();
    if variant == PanelVariant::NoExclusion {
        let q = CIStatement::parse("D _||_ Y_1 | S")?;
        let v = d_separated(&g, &[Term::plain("D")], &[Term::plain("Y_1")], &[Term::plain("S")])?;
        if let Some(w) = v.witness {
            let path: Vec<String> = w.iter().map(|t| t.to_string()).collect();
            notes.push(format!("biased responder comparison: {q} fails via {}", path.join(" - ")));
        }
    }
    Ok(ImplicationCatalog {
        entries: vec![CatalogEntry {
            test_name: name.to_string(),
            restrictions_removed: variant.removed_edges(),
            residual: residual(&g, &implied),
            implied,
            untestable,
            swig_implied: swig,
            identified_estimand: Some(estimand.to_string()),
            notes,
        }],
    })
}

/// Graph where selection is MCAR for the outcome although it depends on treatment and
/// covariates, together with the verdicts that show it.
pub fn necessity_counterexample() -> (MGraph, String) {
    let g = parse_graph(models::NECESSITY).expect("built-in graph is valid");
    let q = |a: &str, b: &str| d_separated(&g, &[Term::plain(a)], &[Term::plain(b)], &[]).expect("valid query").separated;
    let text = format!(
        "S _||_ Y: {}; D _||_ S: {}; X _||_ S: {}; X _||_ D: {}",
        q("S", "Y"),
        q("D", "S"),
        q("X", "S"),
        q("X", "D")
    );
    (g, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2() -> MGraph {
        parse_graph(models::M2).unwrap()
    }

    fn design() -> AttritionDesign {
        AttritionDesign { treatment: "D".into(), selection: None }
    }

    fn implied(c: &ImplicationCatalog, name: &str) -> Vec<String> {
        c.entry(name).unwrap().implied.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn m2_attrition_rows() {
        let c = attrition_catalog(&m2(), &design(), false).unwrap();
        assert_eq!(implied(&c, "Differential Attrition"), ["D _||_ S | X"]);
        assert_eq!(implied(&c, "Determinants of Attrition"), ["S _||_ X | D"]);
        assert_eq!(implied(&c, "Selective Attrition (1)"), ["D _||_ X | S", "S _||_ X"]);
        assert_eq!(implied(&c, "Selective Attrition (2)"), ["D _||_ S", "D _||_ X | S"]);
    }

    #[test]
    fn randomized_collapses_to_two() {
        let c = attrition_catalog(&m2(), &design(), true).unwrap();
        assert_eq!(c.entries.len(), 2);
        let swig: Vec<String> = c.entries[0].swig_implied.iter().map(|s| s.to_string()).collect();
        assert_eq!(swig, ["Y(d) _||_ D,S(d)"]);
        let swig: Vec<String> = c.entries[1].swig_implied.iter().map(|s| s.to_string()).collect();
        assert_eq!(swig, ["D _||_ Y(d)", "S _||_ Y(d) | X"]);
    }

    #[test]
    fn ambiguous_designs() {
        let g = m2();
        let bad = AttritionDesign { treatment: "Y".into(), selection: None };
        assert!(attrition_catalog(&g, &bad, false).is_err());
        let bad = AttritionDesign { treatment: "D".into(), selection: Some("X".into()) };
        assert!(attrition_catalog(&g, &bad, false).is_err());
    }

    #[test]
    fn panel_entries() {
        let c = panel_catalog(PanelVariant::ExclusionII).unwrap();
        assert_eq!(implied(&c, "ExclusionII"), ["D _||_ S", "D _||_ Y_0"]);
        let c = panel_catalog(PanelVariant::NoExclusion).unwrap();
        assert!(c.entries[0].notes[0].contains("D _||_ Y_1 | S"));
    }

    #[test]
    fn necessity_verdicts() {
        let (_, text) = necessity_counterexample();
        assert_eq!(text, "S _||_ Y: true; D _||_ S: false; X _||_ S: false; X _||_ D: true");
    }
}
