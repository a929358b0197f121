//! Conditional-independence tests of derived restrictions against data.

use std::collections::{BTreeMap, BTreeSet};

use mswig_core::{CIStatement, ImplicationCatalog, Term};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dataset::{is_discrete, Dataset};
use crate::error::{Result, StatsError};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Chi-square when every variable is discrete, otherwise the regression Wald test.
    Auto,
    ChiSquareStratified,
    PartialRegressionWald,
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Multiplicity {
    None,
    Bonferroni,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOptions {
    pub permutations: usize,
    /// Strata merge until every expected cell count reaches this.
    pub min_expected: f64,
}

impl Default for TestOptions {
    fn default() -> Self {
        TestOptions { permutations: 999, min_expected: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TestResult {
    pub statement: CIStatement,
    pub statistic: f64,
    pub p_value: f64,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dof: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub permutations: Option<usize>,
    pub n: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cell_diagnostics: Vec<String>,
}

fn column_for<'a>(data: &'a Dataset, t: &Term) -> Result<&'a [f64]> {
    if t.is_counterfactual() {
        return Err(StatsError::Test(format!("`{t}` is counterfactual and cannot be tested on data")));
    }
    if data.has(&t.name) {
        return data.column(&t.name);
    }
    match t.name.strip_suffix("_star") {
        Some(base) if data.has(base) => data.column(base),
        _ => Err(StatsError::UnknownColumn(t.name.clone())),
    }
}

struct Prepared {
    left: Vec<Vec<f64>>,
    right: Vec<Vec<f64>>,
    given: Vec<Vec<f64>>,
    n: usize,
}

fn prepare(data: &Dataset, st: &CIStatement) -> Result<(Prepared, Vec<String>)> {
    let mut keep = vec![true; data.n_rows()];
    for s in st.selected() {
        for (k, v) in keep.iter_mut().zip(column_for(data, s)?) {
            *k &= *v == 1.0;
        }
    }
    let given: Vec<(&Term, &[f64])> = st.given().iter().map(|t| Ok((t, column_for(data, t)?))).collect::<Result<_>>()?;
    let mut notes = Vec::new();
    // A proxy is constant (missing) in the stratum where its selection indicator is 0, so
    // that stratum carries no information and is dropped.
    for t in st.left().iter().chain(st.right()).chain(st.given()) {
        let c = column_for(data, t)?;
        if !c.iter().zip(&keep).any(|(v, k)| *k && !v.is_finite()) {
            continue;
        }
        let gate = given.iter().find(|(_, g)| {
            c.iter().zip(*g).zip(&keep).all(|((v, g), k)| !*k || (!v.is_finite()) == (*g == 0.0))
        });
        match gate {
            Some((g, gc)) => {
                for (k, v) in keep.iter_mut().zip(*gc) {
                    *k &= *v != 0.0;
                }
                notes.push(format!("stratum {g}=0 dropped: `{t}` is missing there"));
            }
            None => return Err(StatsError::Test(format!("`{t}` has missing values on the rows used by `{st}`"))),
        }
    }
    let pull = |terms: &BTreeSet<Term>| -> Result<Vec<Vec<f64>>> {
        terms
            .iter()
            .map(|t| Ok(column_for(data, t)?.iter().zip(&keep).filter(|(_, k)| **k).map(|(v, _)| *v).collect()))
            .collect()
    };
    let p = Prepared { left: pull(st.left())?, right: pull(st.right())?, given: pull(st.given())?, n: keep.iter().filter(|k| **k).count() };
    if p.n < 3 {
        return Err(StatsError::Test(format!("`{st}` has {} usable rows", p.n)));
    }
    Ok((p, notes))
}

fn key(cols: &[Vec<f64>], i: usize) -> Vec<i64> {
    cols.iter().map(|c| c[i] as i64).collect()
}

fn chi2_sf(stat: f64, dof: f64) -> f64 {
    if dof <= 0.0 {
        return 1.0;
    }
    if stat.is_infinite() {
        return 0.0;
    }
    ChiSquared::new(dof).expect("positive dof").sf(stat).clamp(0.0, 1.0)
}

/// Pearson statistic, dof and smallest expected count of one stratum.
fn pearson(rows: &[usize], p: &Prepared) -> (f64, f64, f64) {
    let mut table: BTreeMap<(Vec<i64>, Vec<i64>), f64> = BTreeMap::new();
    let mut rt: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
    let mut ct: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
    for &i in rows {
        let (a, b) = (key(&p.left, i), key(&p.right, i));
        *table.entry((a.clone(), b.clone())).or_default() += 1.0;
        *rt.entry(a).or_default() += 1.0;
        *ct.entry(b).or_default() += 1.0;
    }
    let n = rows.len() as f64;
    let (mut stat, mut min_e) = (0.0, f64::INFINITY);
    for (a, ra) in &rt {
        for (b, cb) in &ct {
            let e = ra * cb / n;
            let o = table.get(&(a.clone(), b.clone())).copied().unwrap_or(0.0);
            stat += (o - e) * (o - e) / e;
            min_e = min_e.min(e);
        }
    }
    let dof = ((rt.len() as f64) - 1.0) * ((ct.len() as f64) - 1.0);
    if dof == 0.0 {
        // A constant margin carries no information and imposes no cell-count requirement.
        min_e = f64::INFINITY;
    }
    (stat, dof, min_e)
}

fn chi_square(p: &Prepared, opts: &TestOptions) -> (f64, f64, Vec<String>) {
    let mut strata: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
    for i in 0..p.n {
        strata.entry(key(&p.given, i)).or_default().push(i);
    }
    let mut groups: Vec<(String, Vec<usize>)> =
        strata.into_iter().map(|(k, v)| (format!("{k:?}"), v)).collect();
    let mut diag = Vec::new();
    loop {
        let small = groups.iter().position(|(_, rows)| pearson(rows, p).2 < opts.min_expected);
        match small {
            Some(i) if groups.len() > 1 => {
                let j = if i + 1 < groups.len() { i + 1 } else { i - 1 };
                let (lo, hi) = (i.min(j), i.max(j));
                let (name_hi, rows_hi) = groups.remove(hi);
                diag.push(format!("merged stratum {name_hi} into {}", groups[lo].0));
                groups[lo].0 = format!("{}+{}", groups[lo].0, name_hi);
                groups[lo].1.extend(rows_hi);
            }
            Some(_) => {
                diag.push("expected counts below threshold remain after merging all strata".into());
                break;
            }
            None => break,
        }
    }
    let (mut stat, mut dof) = (0.0, 0.0);
    for (_, rows) in &groups {
        let (s, d, _) = pearson(rows, p);
        stat += s;
        dof += d;
    }
    diag.insert(0, format!("{} strata", groups.len()));
    (stat, dof, diag)
}

/// Conditioning columns as regressors: discrete ones as level dummies, others linearly.
fn conditioning_design(given: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for c in given {
        if is_discrete(c) {
            let levels: BTreeSet<i64> = c.iter().map(|v| *v as i64).collect();
            for l in levels.into_iter().skip(1) {
                out.push(c.iter().map(|v| if *v as i64 == l { 1.0 } else { 0.0 }).collect());
            }
        } else {
            out.push(c.clone());
        }
    }
    out
}

fn pinv(m: DMatrix<f64>) -> DMatrix<f64> {
    m.pseudo_inverse(1e-12).expect("svd succeeds on finite input")
}

/// Robust (HC1) Wald statistic for the right-block coefficients in
/// `left ~ 1 + right + conditioning`.
fn wald(y: &[f64], right: &[Vec<f64>], cond: &[Vec<f64>]) -> f64 {
    let n = y.len();
    let cols: Vec<&Vec<f64>> = right.iter().chain(cond).collect();
    let k = cols.len() + 1;
    let x = DMatrix::from_fn(n, k, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] });
    let xtx_inv = pinv(x.transpose() * &x);
    let yv = DVector::from_column_slice(y);
    let beta = &xtx_inv * x.transpose() * &yv;
    let resid = &yv - &x * &beta;
    let mut meat = DMatrix::zeros(k, k);
    for i in 0..n {
        let row = x.row(i);
        meat += row.transpose() * row * resid[i].powi(2);
    }
    let cov = &xtx_inv * meat * &xtx_inv * (n as f64 / (n as f64 - k as f64).max(1.0));
    let r = right.len();
    let b = beta.rows(1, r).into_owned();
    let v = cov.view((1, 1), (r, r)).into_owned();
    let scale = b.amax().max(1e-300);
    if v.amax() <= 1e-24 * scale * scale {
        return if b.amax() > 1e-12 { f64::INFINITY } else { 0.0 };
    }
    (b.transpose() * pinv(v) * &b)[(0, 0)]
}

/// Deciles of a linear index of the conditioning columns, or their level combinations when
/// they are all discrete.
fn permutation_strata(p: &Prepared) -> Vec<usize> {
    if p.given.is_empty() {
        return vec![0; p.n];
    }
    if p.given.iter().all(|c| is_discrete(c)) {
        let mut ids: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
        let keys: Vec<Vec<i64>> = (0..p.n).map(|i| key(&p.given, i)).collect();
        for k in &keys {
            let next = ids.len();
            ids.entry(k.clone()).or_insert(next);
        }
        return keys.iter().map(|k| ids[k]).collect();
    }
    let k = p.given.len() + 1;
    let x = DMatrix::from_fn(p.n, k, |i, j| if j == 0 { 1.0 } else { p.given[j - 1][i] });
    let y = DVector::from_column_slice(&p.left[0]);
    let beta = pinv(x.transpose() * &x) * x.transpose() * y;
    let index = &x * beta;
    let mut order: Vec<usize> = (0..p.n).collect();
    order.sort_by(|&a, &b| index[a].total_cmp(&index[b]).then(a.cmp(&b)));
    let mut strata = vec![0; p.n];
    for (rank, &i) in order.iter().enumerate() {
        strata[i] = rank * 10 / p.n;
    }
    strata
}

/// Sum over left/right pairs of the squared pooled within-stratum correlation.
fn within_corr(left: &[Vec<f64>], right: &[Vec<f64>], strata: &[usize], n_strata: usize) -> f64 {
    let centered = |c: &[f64]| {
        let mut sum = vec![0.0; n_strata];
        let mut cnt = vec![0.0; n_strata];
        for (v, s) in c.iter().zip(strata) {
            sum[*s] += v;
            cnt[*s] += 1.0;
        }
        c.iter().zip(strata).map(|(v, s)| v - sum[*s] / cnt[*s]).collect::<Vec<f64>>()
    };
    let mut total = 0.0;
    let rs: Vec<Vec<f64>> = right.iter().map(|r| centered(r)).collect();
    for l in left {
        let lc = centered(l);
        let ll: f64 = lc.iter().map(|v| v * v).sum();
        for rc in &rs {
            let rr: f64 = rc.iter().map(|v| v * v).sum();
            if ll > 0.0 && rr > 0.0 {
                let lr: f64 = lc.iter().zip(rc).map(|(a, b)| a * b).sum();
                total += lr * lr / (ll * rr);
            }
        }
    }
    total
}

pub fn test_statement(data: &Dataset, st: &CIStatement, method: Method, opts: &TestOptions, seed: u64) -> Result<TestResult> {
    let (p, notes) = prepare(data, st)?;
    let all_discrete = p.left.iter().chain(&p.right).chain(&p.given).all(|c| is_discrete(c));
    let method = match method {
        Method::Auto if all_discrete => Method::ChiSquareStratified,
        Method::Auto => Method::PartialRegressionWald,
        m => m,
    };
    let mut result = TestResult {
        statement: st.clone(),
        statistic: 0.0,
        p_value: 1.0,
        method,
        dof: None,
        permutations: None,
        n: p.n,
        cell_diagnostics: Vec::new(),
    };
    match method {
        Method::ChiSquareStratified => {
            if !all_discrete {
                return Err(StatsError::Test(format!(
                    "`{st}` involves a continuous variable; use PartialRegressionWald or Permutation"
                )));
            }
            let (stat, dof, diag) = chi_square(&p, opts);
            result.statistic = stat;
            result.dof = Some(dof);
            result.p_value = chi2_sf(stat, dof);
            result.cell_diagnostics = diag;
        }
        Method::PartialRegressionWald => {
            let cond = conditioning_design(&p.given);
            let stats: Vec<f64> = p.left.iter().map(|y| wald(y, &p.right, &cond)).collect();
            let dof = p.right.len() as f64;
            let min_p = stats.iter().map(|s| chi2_sf(*s, dof)).fold(1.0, f64::min);
            result.statistic = stats.iter().copied().fold(0.0, f64::max);
            result.dof = Some(dof);
            result.p_value = (min_p * p.left.len() as f64).min(1.0);
            if p.left.len() > 1 {
                result.cell_diagnostics.push(format!("{} left variables, Bonferroni-combined", p.left.len()));
            }
        }
        Method::Permutation => {
            let strata = permutation_strata(&p);
            let n_strata = strata.iter().max().map_or(1, |m| m + 1);
            let observed = within_corr(&p.left, &p.right, &strata, n_strata);
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_strata];
            for (i, s) in strata.iter().enumerate() {
                members[*s].push(i);
            }
            let b = opts.permutations;
            let exceed = (0..b)
                .into_par_iter()
                .filter(|&r| {
                    let mut g = rng::stream(seed, "permutation", r as u64);
                    let mut perm: Vec<usize> = (0..p.n).collect();
                    for m in &members {
                        let mut shuffled = m.clone();
                        shuffled.shuffle(&mut g);
                        for (a, b) in m.iter().zip(&shuffled) {
                            perm[*a] = *b;
                        }
                    }
                    let left: Vec<Vec<f64>> = p.left.iter().map(|c| perm.iter().map(|&j| c[j]).collect()).collect();
                    within_corr(&left, &p.right, &strata, n_strata) >= observed - 1e-12
                })
                .count();
            result.statistic = observed;
            result.permutations = Some(b);
            result.p_value = (exceed as f64 + 1.0) / (b as f64 + 1.0);
            result.cell_diagnostics.push(format!("{n_strata} permutation strata"));
        }
        Method::Auto => unreachable!("resolved above"),
    }
    result.cell_diagnostics.extend(notes);
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CatalogTest {
    pub entry: String,
    pub result: TestResult,
    pub adjusted_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CatalogReport {
    pub alpha: f64,
    pub multiplicity: Multiplicity,
    pub tests: Vec<CatalogTest>,
    pub reject: bool,
    pub failed_entries: Vec<String>,
}

/// Tests every observed-level statement of every entry; the catalog is rejected when any
/// adjusted p-value falls below `alpha`.
pub fn test_catalog(
    data: &Dataset,
    catalog: &ImplicationCatalog,
    method: Method,
    opts: &TestOptions,
    alpha: f64,
    multiplicity: Multiplicity,
    seed: u64,
) -> Result<CatalogReport> {
    let jobs: Vec<(&str, &CIStatement)> =
        catalog.entries.iter().flat_map(|e| e.implied.iter().map(move |s| (e.test_name.as_str(), s))).collect();
    let m = jobs.len() as f64;
    let tests = jobs
        .iter()
        .map(|(entry, st)| {
            let r = test_statement(data, st, method, opts, rng::derive_seed(seed, &st.to_string(), 0))?;
            let adjusted_p = match multiplicity {
                Multiplicity::None => r.p_value,
                Multiplicity::Bonferroni => (r.p_value * m).min(1.0),
            };
            Ok(CatalogTest { entry: entry.to_string(), result: r, adjusted_p })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut failed: Vec<String> = tests.iter().filter(|t| t.adjusted_p < alpha).map(|t| t.entry.clone()).collect();
    failed.dedup();
    Ok(CatalogReport { alpha, multiplicity, reject: !failed.is_empty(), failed_entries: failed, tests })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(cols: &[(&str, Vec<f64>)]) -> Dataset {
        Dataset::new(cols.iter().map(|c| c.0.to_string()).collect(), cols.iter().map(|c| c.1.clone()).collect()).unwrap()
    }

    #[test]
    fn identical_variables_are_dependent() {
        let a: Vec<f64> = (0..200).map(|i| (i % 2) as f64).collect();
        let d = table(&[("A", a.clone()), ("B", a)]);
        let st = CIStatement::parse("A _||_ B").unwrap();
        for m in [Method::ChiSquareStratified, Method::PartialRegressionWald] {
            let r = test_statement(&d, &st, m, &TestOptions::default(), 0).unwrap();
            assert!(r.p_value < 1e-6, "{m:?} {}", r.p_value);
        }
        let r = test_statement(&d, &st, Method::Permutation, &TestOptions { permutations: 99, ..Default::default() }, 0).unwrap();
        assert_eq!(r.p_value, 0.01);
    }

    #[test]
    fn continuous_variables_are_refused_by_chi_square() {
        let d = table(&[("A", (0..50).map(|i| i as f64 * 0.37).collect()), ("B", vec![1.0; 50])]);
        let st = CIStatement::parse("A _||_ B").unwrap();
        assert!(test_statement(&d, &st, Method::ChiSquareStratified, &TestOptions::default(), 0).is_err());
        assert_eq!(test_statement(&d, &st, Method::Auto, &TestOptions::default(), 0).unwrap().method, Method::PartialRegressionWald);
    }

    #[test]
    fn sparse_strata_merge() {
        // Stratum C=2 has 4 rows and must merge into C=1.
        let n = 84;
        let c: Vec<f64> = (0..n).map(|i| if i < 40 { 0.0 } else if i < 80 { 1.0 } else { 2.0 }).collect();
        let a: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let b: Vec<f64> = (0..n).map(|i| ((i / 2) % 2) as f64).collect();
        let d = table(&[("A", a), ("B", b), ("C", c)]);
        let r = test_statement(&d, &CIStatement::parse("A _||_ B | C").unwrap(), Method::Auto, &TestOptions::default(), 0).unwrap();
        assert_eq!(r.cell_diagnostics[0], "2 strata");
        assert!(r.cell_diagnostics[1].starts_with("merged stratum [2]"));
    }

    #[test]
    fn permutation_is_deterministic() {
        let a: Vec<f64> = (0..60).map(|i| ((i * 7) % 5) as f64).collect();
        let b: Vec<f64> = (0..60).map(|i| ((i * 3) % 4) as f64 + 0.5).collect();
        let d = table(&[("A", a), ("B", b)]);
        let st = CIStatement::parse("A _||_ B").unwrap();
        let o = TestOptions { permutations: 199, ..Default::default() };
        let r1 = test_statement(&d, &st, Method::Permutation, &o, 5).unwrap();
        let r2 = test_statement(&d, &st, Method::Permutation, &o, 5).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn empty_catalog_does_not_reject() {
        let d = table(&[("A", vec![0.0, 1.0, 0.0])]);
        let r = test_catalog(&d, &ImplicationCatalog::default(), Method::Auto, &TestOptions::default(), 0.05, Multiplicity::None, 0)
            .unwrap();
        assert!(r.tests.is_empty() && !r.reject);
    }

    #[test]
    fn selection_restricts_rows() {
        let s = vec![1.0, 1.0, 1.0, 0.0, 1.0];
        let y = vec![1.0, 2.0, 3.0, f64::NAN, 5.0];
        let d = table(&[("S", s), ("Y", y), ("D", vec![0.0, 1.0, 0.0, 1.0, 1.0])]);
        let o = TestOptions::default();
        let r = test_statement(&d, &CIStatement::parse("D _||_ Y_star [given S=1]").unwrap(), Method::PartialRegressionWald, &o, 0);
        assert_eq!(r.unwrap().n, 4);
        let r = test_statement(&d, &CIStatement::parse("D _||_ Y_star | S").unwrap(), Method::PartialRegressionWald, &o, 0).unwrap();
        assert_eq!(r.n, 4);
        assert_eq!(r.cell_diagnostics, vec!["stratum S=0 dropped: `Y_star` is missing there"]);
        let r = test_statement(&d, &CIStatement::parse("D _||_ Y").unwrap(), Method::PartialRegressionWald, &TestOptions::default(), 0);
        assert!(r.is_err());
    }
}
