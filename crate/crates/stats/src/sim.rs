//! Structural simulator that draws both treatment arms per unit, so potential outcomes,
//! potential selections and principal strata are known exactly.

use std::collections::BTreeMap;

use mswig_core::{parse_graph, EstimandKind, EstimandSpec, MGraph, NodeKind};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::Dataset;
use crate::error::{Result, StatsError};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Template {
    /// Selection unrelated to anything.
    M1,
    /// Selection and outcome driven by observed `X` and `D`.
    M2,
    /// M2 plus a latent `U` in selection and outcome, correlated with `X` through a shared factor.
    M3,
    /// Two periods: baseline `Y_0` always observed, follow-up `Y_1` subject to attrition.
    M4Panel,
    /// Linear-Gaussian nodes and logistic selections over an m-graph in the text format.
    /// With a treatment, every unit is pushed through both arms.
    CustomLinearLogistic { graph: String, treatment: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmSpec {
    pub template: Template,
    /// Overrides of the template defaults; unknown keys are rejected.
    pub coefficients: BTreeMap<String, f64>,
    pub n: usize,
    pub seed: u64,
}

impl ScmSpec {
    pub fn new(template: Template, n: usize, seed: u64) -> Self {
        ScmSpec { template, coefficients: BTreeMap::new(), n, seed }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.coefficients.insert(key.to_string(), value);
        self
    }
}

const GENERIC_KEYS: [&str; 21] = [
    "x.factor", "u.factor", "z.p", "d.0", "d.X", "d.Z", "y.0", "y.D", "y.DX", "y.DZ", "y.X", "y.Z", "y.U", "y.sd",
    "s.0", "s.D", "s.X", "s.Z", "s.U", "neg.mass", "d.p",
];

/// Template defaults. `neg.mass` flips the sign of `s.D` on the rows with `X` below its
/// `neg.mass` quantile; `d.p`, when positive, replaces the treatment equation by a fair coin
/// of that probability.
pub fn default_coefficients(template: &Template) -> BTreeMap<String, f64> {
    let mut c: BTreeMap<String, f64> = GENERIC_KEYS.iter().map(|k| (k.to_string(), 0.0)).collect();
    let mut set = |pairs: &[(&str, f64)]| {
        for (k, v) in pairs {
            c.insert(k.to_string(), *v);
        }
    };
    match template {
        Template::M1 => set(&[("y.D", 0.5), ("y.X", 1.0), ("y.sd", 1.0), ("s.0", 1.0)]),
        Template::M2 => set(&[
            ("d.X", 0.5),
            ("y.D", 0.5),
            ("y.X", 1.0),
            ("y.sd", 1.0),
            ("s.0", 0.5),
            ("s.D", 0.5),
            ("s.X", 0.7),
        ]),
        Template::M3 => set(&[
            ("x.factor", 0.5),
            ("u.factor", 0.5),
            ("d.X", 0.5),
            ("y.D", 0.5),
            ("y.X", 1.0),
            ("y.U", 1.0),
            ("y.sd", 1.0),
            ("s.0", 0.5),
            ("s.D", 0.5),
            ("s.X", 0.7),
            ("s.U", 1.0),
        ]),
        Template::M4Panel => {
            c = [("rho", 0.5), ("tau", 0.5), ("d.p", 0.5), ("s.0", 0.5), ("s.D", 0.0), ("s.V", 1.0), ("y.sd", 1.0)]
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect();
        }
        Template::CustomLinearLogistic { .. } => c.clear(),
    }
    c
}

/// `stratum` codes `2·S(0) + S(1)`: 0 never observed, 1 observed only if treated,
/// 2 observed only if control, 3 always observed.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub spec: ScmSpec,
    pub observed: Dataset,
    /// Potential outcomes `Y(0)`, `Y(1)`, selections `S(0)`, `S(1)`, `stratum`, structural
    /// probabilities and latent draws.
    pub hidden: Dataset,
    pub treatment: String,
    pub selection: String,
    pub outcome: String,
}

fn logistic_noise(g: &mut ChaCha8Rng) -> f64 {
    let u: f64 = g.random_range(f64::EPSILON..1.0);
    (u / (1.0 - u)).ln()
}

fn normal(g: &mut ChaCha8Rng) -> f64 {
    g.sample(StandardNormal)
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn resolve(spec: &ScmSpec) -> Result<BTreeMap<String, f64>> {
    let mut c = default_coefficients(&spec.template);
    let custom = matches!(spec.template, Template::CustomLinearLogistic { .. });
    for (k, v) in &spec.coefficients {
        if !custom && !c.contains_key(k) {
            return Err(StatsError::Simulation(format!("unknown coefficient `{k}` for this template")));
        }
        if !v.is_finite() {
            return Err(StatsError::Simulation(format!("coefficient `{k}` is not finite")));
        }
        c.insert(k.clone(), *v);
    }
    let range = |k: &str, lo: f64, hi: f64| match c.get(k) {
        Some(v) if *v < lo || *v > hi => Err(StatsError::Simulation(format!("`{k}` = {v} outside [{lo}, {hi}]"))),
        _ => Ok(()),
    };
    range("x.factor", -1.0, 1.0)?;
    range("u.factor", -1.0, 1.0)?;
    range("z.p", 0.0, 1.0)?;
    range("d.p", 0.0, 1.0)?;
    range("neg.mass", 0.0, 1.0)?;
    range("rho", 0.0, 1.0)?;
    range("y.sd", 0.0, f64::INFINITY)?;
    if spec.n == 0 {
        return Err(StatsError::Simulation("n must be positive".into()));
    }
    Ok(c)
}

pub fn simulate(spec: &ScmSpec) -> Result<SimulatedDataset> {
    let c = resolve(spec)?;
    let sim = match &spec.template {
        Template::M1 | Template::M2 | Template::M3 => generic(spec, &c),
        Template::M4Panel => panel(spec, &c),
        Template::CustomLinearLogistic { graph, treatment } => custom(spec, &c, graph, treatment.as_deref())?,
    };
    for name in sim.hidden.names() {
        if sim.hidden.column(name)?.iter().any(|v| v.is_infinite()) {
            return Err(StatsError::Simulation(format!("non-finite draws in `{name}`; check scales")));
        }
    }
    Ok(sim)
}

fn table(cols: Vec<(&str, Vec<f64>)>) -> Dataset {
    let (names, columns): (Vec<String>, Vec<Vec<f64>>) = cols.into_iter().map(|(n, v)| (n.to_string(), v)).unzip();
    Dataset::new(names, columns).expect("generated columns share one length")
}

fn generic(spec: &ScmSpec, c: &BTreeMap<String, f64>) -> SimulatedDataset {
    let k = |key: &str| c[key];
    let n = spec.n;
    let mut g = rng::stream(spec.seed, "scm", 0);
    let cut = if k("neg.mass") > 0.0 {
        Normal::standard().inverse_cdf(k("neg.mass"))
    } else {
        f64::NEG_INFINITY
    };
    let loading = |f: f64| (1.0 - f * f).max(0.0).sqrt();
    let mut cols: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for _ in 0..n {
        // Fixed draw order per unit keeps seeds comparable across coefficient changes.
        let f = normal(&mut g);
        let x = k("x.factor") * f + loading(k("x.factor")) * normal(&mut g);
        let u = k("u.factor") * f + loading(k("u.factor")) * normal(&mut g);
        let z = if g.random::<f64>() < k("z.p") { 1.0 } else { 0.0 };
        let pd = if k("d.p") > 0.0 { k("d.p") } else { sigmoid(k("d.0") + k("d.X") * x + k("d.Z") * z) };
        let d = if g.random::<f64>() < pd { 1.0 } else { 0.0 };
        let eps_y = k("y.sd") * normal(&mut g);
        let eps_s = logistic_noise(&mut g);
        let sd = if x < cut { -k("s.D") } else { k("s.D") };
        let s_index = |arm: f64| k("s.0") + sd * arm + k("s.X") * x + k("s.Z") * z + k("s.U") * u;
        let y_of = |arm: f64| {
            k("y.0") + (k("y.D") + k("y.DX") * x + k("y.DZ") * z) * arm + k("y.X") * x + k("y.Z") * z + k("y.U") * u + eps_y
        };
        let (y0, y1) = (y_of(0.0), y_of(1.0));
        let (s0, s1) = ((s_index(0.0) + eps_s > 0.0) as u8 as f64, (s_index(1.0) + eps_s > 0.0) as u8 as f64);
        let (s, y) = if d == 1.0 { (s1, y1) } else { (s0, y0) };
        for (name, v) in [
            ("X", x),
            ("Z", z),
            ("D", d),
            ("S", s),
            ("Y", if s == 1.0 { y } else { f64::NAN }),
            ("Y(0)", y0),
            ("Y(1)", y1),
            ("S(0)", s0),
            ("S(1)", s1),
            ("stratum", 2.0 * s0 + s1),
            ("P(D=1)", pd),
            ("P(S(0)=1)", sigmoid(s_index(0.0))),
            ("P(S(1)=1)", sigmoid(s_index(1.0))),
            ("U", u),
            ("F", f),
        ] {
            cols.entry(name).or_default().push(v);
        }
    }
    let mut take = |name: &'static str| (name, cols.remove(name).expect("column generated"));
    let mut observed = vec![take("X")];
    if k("z.p") > 0.0 {
        observed.push(take("Z"));
    }
    observed.extend([take("D"), take("S"), take("Y")]);
    let hidden = ["Y(0)", "Y(1)", "S(0)", "S(1)", "stratum", "P(D=1)", "P(S(0)=1)", "P(S(1)=1)", "U", "F"]
        .into_iter()
        .map(take)
        .collect();
    SimulatedDataset {
        spec: spec.clone(),
        observed: table(observed),
        hidden: table(hidden),
        treatment: "D".into(),
        selection: "S".into(),
        outcome: "Y".into(),
    }
}

/// `U_0`, `U_1`, `V` are equicorrelated at `rho` through one shared factor.
fn panel(spec: &ScmSpec, c: &BTreeMap<String, f64>) -> SimulatedDataset {
    let k = |key: &str| c[key];
    let mut g = rng::stream(spec.seed, "scm", 0);
    let (a, b) = (k("rho").sqrt(), (1.0 - k("rho")).sqrt());
    let mut cols: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for _ in 0..spec.n {
        let f = normal(&mut g);
        let u0 = a * f + b * normal(&mut g);
        let u1 = a * f + b * normal(&mut g);
        let v = a * f + b * normal(&mut g);
        let d = if g.random::<f64>() < k("d.p") { 1.0 } else { 0.0 };
        let y_base = u0 + k("y.sd") * normal(&mut g);
        let eps1 = k("y.sd") * normal(&mut g);
        let eps_s = logistic_noise(&mut g);
        let s_index = |arm: f64| k("s.0") + k("s.D") * arm + k("s.V") * v;
        let (y0, y1) = (u1 + eps1, k("tau") + u1 + eps1);
        let (s0, s1) = ((s_index(0.0) + eps_s > 0.0) as u8 as f64, (s_index(1.0) + eps_s > 0.0) as u8 as f64);
        let (s, y) = if d == 1.0 { (s1, y1) } else { (s0, y0) };
        for (name, val) in [
            ("D", d),
            ("Y_0", y_base),
            ("S", s),
            ("Y_1", if s == 1.0 { y } else { f64::NAN }),
            ("Y_1(0)", y0),
            ("Y_1(1)", y1),
            ("S(0)", s0),
            ("S(1)", s1),
            ("stratum", 2.0 * s0 + s1),
            ("U_0", u0),
            ("U_1", u1),
            ("V", v),
        ] {
            cols.entry(name).or_default().push(val);
        }
    }
    let mut take = |name: &'static str| (name, cols.remove(name).expect("column generated"));
    let observed = ["D", "Y_0", "S", "Y_1"].into_iter().map(&mut take).collect();
    let hidden = ["Y_1(0)", "Y_1(1)", "S(0)", "S(1)", "stratum", "U_0", "U_1", "V"].into_iter().map(take).collect();
    SimulatedDataset {
        spec: spec.clone(),
        observed: table(observed),
        hidden: table(hidden),
        treatment: "D".into(),
        selection: "S".into(),
        outcome: "Y_1".into(),
    }
}

fn topological(g: &MGraph) -> Result<Vec<String>> {
    let mut order = Vec::new();
    let mut placed = std::collections::BTreeSet::new();
    let names = g.node_names().to_vec();
    while order.len() < names.len() {
        let before = order.len();
        for v in &names {
            if !placed.contains(v) && g.parents(v).iter().all(|p| placed.contains(*p)) {
                placed.insert(v.clone());
                order.push(v.clone());
            }
        }
        if order.len() == before {
            return Err(StatsError::Simulation("graph has a directed cycle".into()));
        }
    }
    Ok(order)
}

/// Coefficient keys: `<node>.0` intercept, `<node>.<parent>` edge weight (default 0.5),
/// `<node>.sd` Gaussian noise scale (default 1). Selections and the treatment are logistic
/// binaries; proxies follow from their selection.
fn custom(spec: &ScmSpec, c: &BTreeMap<String, f64>, text: &str, treatment: Option<&str>) -> Result<SimulatedDataset> {
    let g = parse_graph(text)?.expand_latents();
    let order = topological(&g)?;
    for key in c.keys() {
        let (node, what) = key
            .split_once('.')
            .ok_or_else(|| StatsError::Simulation(format!("coefficient `{key}` must read `<node>.<term>`")))?;
        let known = g.kind(node).is_some() && (what == "0" || what == "sd" || g.has_edge(what, node));
        if !known {
            return Err(StatsError::Simulation(format!("coefficient `{key}` names no node or edge")));
        }
    }
    if let Some(t) = treatment {
        match g.kind(t) {
            Some(NodeKind::Observed) => {}
            _ => return Err(StatsError::Simulation(format!("treatment `{t}` must be an observed node"))),
        }
    }
    let sel = g.nodes_of_kind(NodeKind::Selection);
    let selection = sel.first().map(|s| s.to_string()).unwrap_or_default();
    let outcome = g.missing_for(&selection).map(str::to_string).unwrap_or_default();
    let coef = |key: String, default: f64| c.get(&key).copied().unwrap_or(default);
    let proxies: BTreeMap<String, String> =
        g.selections().map(|(m, s)| (mswig_core::graph::proxy_name(m), s.to_string())).collect();
    let mut gen = rng::stream(spec.seed, "scm", 0);
    let arms: &[f64] = if treatment.is_some() { &[0.0, 1.0] } else { &[0.0] };
    // values[arm][node][row]; the factual world is read off at the realized treatment.
    let mut worlds: Vec<BTreeMap<String, Vec<f64>>> = vec![BTreeMap::new(); arms.len()];
    for _ in 0..spec.n {
        let mut noise: BTreeMap<&str, f64> = BTreeMap::new();
        for v in &order {
            let kind = g.kind(v).expect("node in graph");
            let e = match kind {
                NodeKind::Selection => logistic_noise(&mut gen),
                NodeKind::Proxy => 0.0,
                _ if Some(v.as_str()) == treatment => logistic_noise(&mut gen),
                _ => coef(format!("{v}.sd"), 1.0) * normal(&mut gen),
            };
            noise.insert(v, e);
        }
        for (w, &arm) in arms.iter().enumerate() {
            let mut row: BTreeMap<&str, f64> = BTreeMap::new();
            for v in &order {
                let kind = g.kind(v).expect("node in graph");
                let value = if kind == NodeKind::Proxy {
                    let s = &proxies[v];
                    let m = g.missing_for(s).expect("selection gates a variable");
                    if row[s.as_str()] == 1.0 { row[m] } else { f64::NAN }
                } else {
                    let index = coef(format!("{v}.0"), 0.0)
                        + g.parents(v).iter().map(|p| coef(format!("{v}.{p}"), 0.5) * row[p]).sum::<f64>();
                    let binary = kind == NodeKind::Selection || Some(v.as_str()) == treatment;
                    if binary { (index + noise[v.as_str()] > 0.0) as u8 as f64 } else { index + noise[v.as_str()] }
                };
                row.insert(v, value);
                if Some(v.as_str()) == treatment && arms.len() == 2 {
                    // Keep the drawn treatment for reporting, push the fixed arm downstream.
                    worlds[w].entry(format!("{v}#drawn")).or_default().push(value);
                    row.insert(v, arm);
                }
            }
            for (v, val) in row {
                worlds[w].entry(v.to_string()).or_default().push(val);
            }
        }
    }
    let n = spec.n;
    let drawn: Vec<f64> = match treatment {
        Some(t) => worlds[0][&format!("{t}#drawn")].clone(),
        None => vec![0.0; n],
    };
    let factual = |v: &str| -> Vec<f64> {
        (0..n).map(|i| worlds[if arms.len() == 2 { drawn[i] as usize } else { 0 }][v][i]).collect()
    };
    let mut observed = Vec::new();
    let mut hidden = Vec::new();
    for v in g.node_names() {
        match g.kind(v).expect("node in graph") {
            NodeKind::Observed | NodeKind::Selection => observed.push((v.clone(), factual(v))),
            NodeKind::Proxy => {
                let base = g.missing_for(&proxies[v]).expect("selection gates a variable");
                observed.push((base.to_string(), factual(v)));
            }
            NodeKind::Latent | NodeKind::PartiallyMissing => {}
        }
    }
    if let Some(t) = treatment {
        let pos = observed.iter().position(|(name, _)| name == t).expect("treatment is observed");
        observed[pos].1 = drawn.clone();
        for v in g.node_names() {
            let kind = g.kind(v).expect("node in graph");
            if v != t && kind != NodeKind::Proxy {
                for (w, arm) in [(0, 0), (1, 1)] {
                    hidden.push((format!("{v}({arm})"), worlds[w][v].clone()));
                }
            }
        }
        if !selection.is_empty() {
            let s = |w: usize| worlds[w][&selection].clone();
            hidden.push(("stratum".into(), s(0).iter().zip(s(1)).map(|(a, b)| 2.0 * a + b).collect()));
        }
    } else {
        for v in g.node_names() {
            if matches!(g.kind(v), Some(NodeKind::Latent | NodeKind::PartiallyMissing)) {
                hidden.push((v.clone(), worlds[0][v].clone()));
            }
        }
    }
    let build = |cols: Vec<(String, Vec<f64>)>| {
        let (names, columns) = cols.into_iter().unzip();
        Dataset::new(names, columns)
    };
    Ok(SimulatedDataset {
        spec: spec.clone(),
        observed: build(observed)?,
        hidden: build(hidden)?,
        treatment: treatment.unwrap_or_default().to_string(),
        selection,
        outcome,
    })
}

/// Exact finite-sample estimand from the hidden potential outcomes.
pub fn oracle(sim: &SimulatedDataset, estimand: &EstimandSpec) -> Result<f64> {
    let outcome = estimand.outcome.strip_suffix("_star").unwrap_or(&estimand.outcome);
    let y = |arm: u8| sim.hidden.column(&format!("{outcome}({arm})"));
    let (y0, y1) = (y(0)?, y(1)?);
    let rows: Vec<usize> = match estimand.kind {
        EstimandKind::Ate => (0..y0.len()).collect(),
        EstimandKind::Att => {
            let d = sim.observed.column(&estimand.treatment)?;
            (0..d.len()).filter(|&i| d[i] == 1.0).collect()
        }
        EstimandKind::AlwaysObservedAte => {
            let st = sim.hidden.column("stratum")?;
            (0..st.len()).filter(|&i| st[i] == 3.0).collect()
        }
        EstimandKind::CounterfactualMean => {
            return Err(StatsError::Simulation("counterfactual-mean needs an arm; read `Y(d)` directly".into()))
        }
    };
    if rows.is_empty() {
        return Err(StatsError::Simulation(format!("empty stratum for {:?}", estimand.kind)));
    }
    Ok(rows.iter().map(|&i| y1[i] - y0[i]).sum::<f64>() / rows.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col<'a>(d: &'a Dataset, name: &str) -> &'a [f64] {
        d.column(name).unwrap()
    }

    fn check_consistency(sim: &SimulatedDataset) {
        let (d, s, y) = (col(&sim.observed, "D"), col(&sim.observed, "S"), col(&sim.observed, &sim.outcome));
        let o = &sim.outcome;
        for i in 0..d.len() {
            let arm = d[i] as u8;
            assert_eq!(s[i], col(&sim.hidden, &format!("S({arm})"))[i]);
            let truth = col(&sim.hidden, &format!("{o}({arm})"))[i];
            if s[i] == 1.0 {
                assert_eq!(y[i], truth);
            } else {
                assert!(y[i].is_nan());
            }
        }
    }

    #[test]
    fn templates_are_consistent_and_monotone() {
        for t in [Template::M1, Template::M2, Template::M3, Template::M4Panel] {
            let sim = simulate(&ScmSpec::new(t, 500, 3)).unwrap();
            check_consistency(&sim);
            assert!(col(&sim.hidden, "stratum").iter().all(|v| *v != 2.0));
        }
    }

    #[test]
    fn negative_mass_creates_defiers() {
        let sim = simulate(&ScmSpec::new(Template::M3, 4000, 1).with("neg.mass", 0.2).with("s.D", 2.0)).unwrap();
        assert!(col(&sim.hidden, "stratum").iter().any(|v| *v == 2.0));
    }

    #[test]
    fn seeded_runs_are_identical() {
        let a = simulate(&ScmSpec::new(Template::M2, 100, 8)).unwrap();
        let b = simulate(&ScmSpec::new(Template::M2, 100, 8)).unwrap();
        assert_eq!(a.observed.to_csv_string(), b.observed.to_csv_string());
        assert_eq!(a.hidden.to_csv_string(), b.hidden.to_csv_string());
    }

    #[test]
    fn oracles() {
        let sim = simulate(&ScmSpec::new(Template::M2, 2000, 4).with("y.D", 0.0)).unwrap();
        assert_eq!(oracle(&sim, &EstimandSpec::new(EstimandKind::Ate, "D", "Y", &[])).unwrap(), 0.0);
        let sim = simulate(&ScmSpec::new(Template::M3, 3000, 4)).unwrap();
        // S(1) >= S(0): the always-observed share equals mean S(0).
        let st = col(&sim.hidden, "stratum");
        let share = st.iter().filter(|v| **v == 3.0).count() as f64 / 3000.0;
        let s0 = col(&sim.hidden, "S(0)").iter().sum::<f64>() / 3000.0;
        assert_eq!(share, s0);
        let ao = oracle(&sim, &EstimandSpec::new(EstimandKind::AlwaysObservedAte, "D", "Y_star", &[])).unwrap();
        assert!((ao - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unknown_coefficients_are_rejected() {
        assert!(simulate(&ScmSpec::new(Template::M2, 10, 0).with("y.W", 1.0)).is_err());
        assert!(simulate(&ScmSpec::new(Template::M2, 10, 0).with("x.factor", 2.0)).is_err());
    }

    #[test]
    fn custom_graph_matches_template_shape() {
        let spec = ScmSpec::new(
            Template::CustomLinearLogistic { graph: mswig_core::models::M2.to_string(), treatment: Some("D".into()) },
            400,
            2,
        )
        .with("Y.D", 1.5);
        let sim = simulate(&spec).unwrap();
        assert_eq!(sim.outcome, "Y");
        check_consistency(&sim);
        let ate = oracle(&sim, &EstimandSpec::new(EstimandKind::Ate, "D", "Y", &[])).unwrap();
        assert!((ate - 1.5).abs() < 1e-12);
        assert!(simulate(&ScmSpec { coefficients: [("Y.Q".into(), 1.0)].into(), ..spec }).is_err());
    }
}
