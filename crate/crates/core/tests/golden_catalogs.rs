//! Frozen catalogs and the published independence tables for the standard models.

use mswig_core::models::builtin;
use mswig_core::{
    attrition_catalog, classify, d_separated, necessity_counterexample, panel_catalog, split, AttritionDesign,
    CIStatement, CausalGraph, Intervention, Missingness, PanelVariant, Term,
};

fn golden(name: &str) -> String {
    let path = format!("{}/tests/golden/{name}.txt", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn assert_golden(name: &str, actual: &str) {
    let expected = golden(name);
    assert_eq!(actual, expected, "{name} differs:\n--- actual\n{actual}\n--- expected\n{expected}");
}

fn holds(g: &impl CausalGraph, text: &str) -> bool {
    let s = CIStatement::parse(text).unwrap();
    let l: Vec<Term> = s.left().iter().cloned().collect();
    let r: Vec<Term> = s.right().iter().cloned().collect();
    d_separated(g, &l, &r, &s.conditioning()).unwrap().separated
}

/// Model, m-graph statements, split-graph statements and missingness class per row.
const INDEPENDENCE_TABLE: [(&str, &[&str], &[&str], Missingness); 3] = [
    ("M1", &["S _||_ Y,D"], &["S _||_ D", "Y(d) _||_ D,S"], Missingness::Mcar),
    ("M2", &["S _||_ Y | X,D"], &["S(d) _||_ Y(d),D | X", "Y(d) _||_ D | X"], Missingness::Mar),
    ("M3", &["S _||_ Y | X,D,U"], &["S(d) _||_ Y(d) | X,U", "D _||_ S(d),Y(d) | X"], Missingness::Mnar),
];

#[test]
fn independence_table_rows_hold() {
    for (model, dag_rows, swig_rows, class) in INDEPENDENCE_TABLE {
        let g = builtin(model).unwrap();
        for s in dag_rows {
            assert!(holds(&g, s), "{model}: {s}");
        }
        let sw = split(&g, &Intervention::single("D", "d")).unwrap();
        for s in swig_rows {
            assert!(holds(&sw, s), "{model} split: {s}");
        }
        assert_eq!(classify(&g, &[Term::plain("S")]).unwrap().category, class, "{model}");
    }
}

#[test]
fn latent_confounding_breaks_missing_at_random() {
    let g = builtin("M3").unwrap();
    assert!(!holds(&g, "S _||_ Y | X,D"));
    let sw = split(&g, &Intervention::single("D", "d")).unwrap();
    assert!(!holds(&sw, "S(d) _||_ Y(d) | X"));
}

#[test]
fn attrition_catalog_is_frozen() {
    let g = builtin("M2").unwrap();
    let design = AttritionDesign { treatment: "D".into(), selection: None };
    assert_golden("attrition_m2", &attrition_catalog(&g, &design, false).unwrap().render());
    assert_golden("attrition_m2_randomized", &attrition_catalog(&g, &design, true).unwrap().render());
}

#[test]
fn attrition_catalog_implications_hold_in_restricted_graphs() {
    let g = builtin("M2").unwrap();
    let design = AttritionDesign { treatment: "D".into(), selection: None };
    let cat = attrition_catalog(&g, &design, false).unwrap();
    assert_eq!(cat.entries.len(), 4);
    for e in &cat.entries {
        let restricted = g.without_edges(&e.restrictions_removed).unwrap();
        for s in &e.implied {
            assert!(holds(&restricted, &s.to_string()), "{}: {s}", e.test_name);
            assert!(!holds(&g, &s.to_string()), "{}: {s} already holds without the restriction", e.test_name);
        }
    }
}

#[test]
fn panel_catalogs_are_frozen() {
    for (v, name) in [
        (PanelVariant::NoExclusion, "panel_no_exclusion"),
        (PanelVariant::ExclusionI, "panel_exclusion_i"),
        (PanelVariant::ExclusionII, "panel_exclusion_ii"),
    ] {
        assert_golden(name, &panel_catalog(v).unwrap().render());
    }
}

#[test]
fn necessity_verdicts() {
    let (g, text) = necessity_counterexample();
    assert_eq!(text, "S _||_ Y: true; D _||_ S: false; X _||_ S: false; X _||_ D: true");
    // Selection is unrelated to the outcome although it depends on treatment.
    assert!(holds(&g, "S _||_ Y") && holds(&g, "S _||_ Y | D") && !holds(&g, "D _||_ S"));
    assert_eq!(g.node_names(), builtin("necessity").unwrap().node_names());
}
