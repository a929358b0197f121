//! Nuisance learners: conditional probabilities, means and quantiles.
//!
//! Quantiles use the inf-definition `inf{q : u <= F(q)}` throughout. Linear and tree
//! families produce quantiles as fitted mean plus a residual quantile, which is monotone in
//! the level by construction.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StatsError};
use crate::rng;

pub const DEFAULT_CLIP: f64 = 1e-6;
/// Penalty added when the least-squares normal equations are singular.
pub const RIDGE_FALLBACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Task {
    Probability,
    Mean,
    Quantile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    Logistic,
    Linear,
    HistGradientTrees,
    #[serde(rename = "KNN")]
    Knn,
    StratifiedEmpirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub task: Task,
    pub family: Family,
    #[serde(default)]
    pub hyperparams: BTreeMap<String, f64>,
}

impl LearnerSpec {
    pub fn new(task: Task, family: Family) -> Self {
        LearnerSpec { task, family, hyperparams: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.hyperparams.insert(key.to_string(), value);
        self
    }

    pub fn with_task(&self, task: Task) -> Self {
        LearnerSpec { task, ..self.clone() }
    }

    fn param(&self, key: &str, default: f64) -> f64 {
        self.hyperparams.get(key).copied().unwrap_or(default)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct FitFlags {
    /// Target was constant; the predictor returns it exactly.
    pub constant: bool,
    /// Normal equations were singular and the ridge fallback was used.
    pub ridge: bool,
}

/// Sorted `(value, weight)` pairs.
type Sample = Vec<(f64, f64)>;

#[derive(Debug, Clone)]
enum Model {
    Constant(f64),
    Linear(Vec<f64>),
    Logistic(Vec<f64>),
    Trees(Boosted),
    Knn(Neighbours),
    Strata { cells: BTreeMap<Vec<u64>, Sample>, pooled: Sample },
}

#[derive(Debug, Clone)]
pub struct FittedNuisance {
    task: Task,
    clip: f64,
    model: Model,
    /// Training residuals for location-shift quantiles.
    residuals: Option<Sample>,
    pub flags: FitFlags,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn sorted_sample(values: impl Iterator<Item = (f64, f64)>) -> Sample {
    let mut v: Sample = values.collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

/// Inf-definition quantile of a weighted sorted sample.
pub fn type1_quantile(sorted: &[(f64, f64)], u: f64) -> f64 {
    let total: f64 = sorted.iter().map(|p| p.1).sum();
    let target = u * total - 1e-9 * total;
    let mut cum = 0.0;
    for &(v, w) in sorted {
        cum += w;
        if cum >= target {
            return v;
        }
    }
    sorted.last().map_or(f64::NAN, |p| p.0)
}

fn weighted_mean(sample: &[(f64, f64)]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for &(v, w) in sample {
        num += v * w;
        den += w;
    }
    num / den
}

fn design(x: &[Vec<f64>]) -> DMatrix<f64> {
    let p = x.first().map_or(0, Vec::len);
    DMatrix::from_fn(x.len(), p + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] })
}

fn linear_predict(beta: &[f64], row: &[f64]) -> f64 {
    beta[0] + row.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>()
}

/// Solves `a b = rhs` for symmetric positive semi-definite `a`; returns whether a ridge
/// was needed.
fn spd_solve(mut a: DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, bool) {
    let scale = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if let Some(ch) = a.clone().cholesky() {
        let l = ch.l();
        let min_pivot = l.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v * v));
        if min_pivot > 1e-10 * scale {
            return (ch.solve(rhs), false);
        }
    }
    for i in 0..a.nrows() {
        a[(i, i)] += RIDGE_FALLBACK * scale;
    }
    let sol = match a.clone().cholesky() {
        Some(ch) => ch.solve(rhs),
        None => a.svd(true, true).solve(rhs, 1e-12).expect("svd solve"),
    };
    (sol, true)
}

fn fit_linear(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> (Vec<f64>, bool) {
    let xm = design(x);
    let wv = DVector::from_column_slice(w);
    let xtw = DMatrix::from_fn(xm.ncols(), xm.nrows(), |j, i| xm[(i, j)] * wv[i]);
    let (beta, ridge) = spd_solve(&xtw * &xm, &(&xtw * DVector::from_column_slice(y)));
    (beta.iter().copied().collect(), ridge)
}

fn fit_logistic(x: &[Vec<f64>], y: &[f64], w: &[f64], lambda: f64) -> (Vec<f64>, bool) {
    let xm = design(x);
    let k = xm.ncols();
    let mut beta = DVector::zeros(k);
    let mut ridge = false;
    for _ in 0..100 {
        let eta = &xm * &beta;
        let mut grad = DVector::zeros(k);
        let mut hess = DMatrix::zeros(k, k);
        for i in 0..xm.nrows() {
            let p = sigmoid(eta[i]);
            let h = (w[i] * p * (1.0 - p)).max(1e-12);
            let r = w[i] * (y[i] - p);
            for a in 0..k {
                grad[a] += xm[(i, a)] * r;
                for b in 0..=a {
                    hess[(a, b)] += xm[(i, a)] * xm[(i, b)] * h;
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
            if a > 0 {
                grad[a] -= lambda * beta[a];
                hess[(a, a)] += lambda;
            }
        }
        let (step, r) = spd_solve(hess, &grad);
        ridge |= r;
        beta += &step;
        if step.amax() < 1e-10 {
            break;
        }
    }
    (beta.iter().copied().collect(), ridge)
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
struct Boosted {
    init: f64,
    rate: f64,
    trees: Vec<Vec<Node>>,
    logistic: bool,
}

impl Boosted {
    fn raw(&self, row: &[f64]) -> f64 {
        let mut f = self.init;
        for t in &self.trees {
            let mut i = 0;
            loop {
                match t[i] {
                    Node::Leaf(v) => {
                        f += self.rate * v;
                        break;
                    }
                    Node::Split { feature, threshold, left, right } => {
                        i = if row[feature] <= threshold { left } else { right };
                    }
                }
            }
        }
        f
    }
}

struct TreeParams {
    depth: usize,
    min_leaf: usize,
    l2: f64,
}

/// Bin edges per feature: distinct training quantiles, at most `bins - 1` of them.
fn bin_edges(x: &[Vec<f64>], bins: usize) -> Vec<Vec<f64>> {
    let p = x.first().map_or(0, Vec::len);
    (0..p)
        .map(|j| {
            let mut v: Vec<f64> = x.iter().map(|r| r[j]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            if v.len() <= bins {
                return v[..v.len().saturating_sub(1)].to_vec();
            }
            let mut e: Vec<f64> = (1..bins).map(|b| v[b * v.len() / bins - 1]).collect();
            e.dedup();
            e
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn grow(
    nodes: &mut Vec<Node>,
    rows: &[usize],
    binned: &[Vec<usize>],
    edges: &[Vec<f64>],
    g: &[f64],
    h: &[f64],
    depth: usize,
    tp: &TreeParams,
) -> usize {
    let gs: f64 = rows.iter().map(|&i| g[i]).sum();
    let hs: f64 = rows.iter().map(|&i| h[i]).sum();
    let id = nodes.len();
    nodes.push(Node::Leaf(gs / (hs + tp.l2)));
    if depth >= tp.depth || rows.len() < 2 * tp.min_leaf {
        return id;
    }
    let parent = gs * gs / (hs + tp.l2);
    let mut best: Option<(f64, usize, usize)> = None;
    for (j, e) in edges.iter().enumerate() {
        let nb = e.len() + 1;
        let (mut hg, mut hh, mut hc) = (vec![0.0; nb], vec![0.0; nb], vec![0usize; nb]);
        for &i in rows {
            let b = binned[i][j];
            hg[b] += g[i];
            hh[b] += h[i];
            hc[b] += 1;
        }
        let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0usize);
        for b in 0..nb - 1 {
            gl += hg[b];
            hl += hh[b];
            cl += hc[b];
            let cr = rows.len() - cl;
            if cl < tp.min_leaf || cr < tp.min_leaf {
                continue;
            }
            let (gr, hr) = (gs - gl, hs - hl);
            let gain = gl * gl / (hl + tp.l2) + gr * gr / (hr + tp.l2) - parent;
            if gain > 1e-12 && best.is_none_or(|(bg, _, _)| gain > bg) {
                best = Some((gain, j, b));
            }
        }
    }
    if let Some((_, j, b)) = best {
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| binned[i][j] <= b);
        let left = grow(nodes, &l, binned, edges, g, h, depth + 1, tp);
        let right = grow(nodes, &r, binned, edges, g, h, depth + 1, tp);
        nodes[id] = Node::Split { feature: j, threshold: edges[j][b], left, right };
    }
    id
}

fn fit_trees(spec: &LearnerSpec, x: &[Vec<f64>], y: &[f64], w: &[f64], logistic: bool, seed: u64) -> Boosted {
    let n_trees = spec.param("trees", 100.0) as usize;
    let rate = spec.param("learning_rate", 0.1);
    let subsample = spec.param("subsample", 1.0);
    let tp = TreeParams {
        depth: spec.param("depth", 3.0) as usize,
        min_leaf: spec.param("min_leaf", 20.0) as usize,
        l2: spec.param("l2", 1.0),
    };
    let edges = bin_edges(x, spec.param("bins", 32.0) as usize);
    let binned: Vec<Vec<usize>> =
        x.iter().map(|r| r.iter().zip(&edges).map(|(v, e)| e.partition_point(|c| c < v)).collect()).collect();
    let wsum: f64 = w.iter().sum();
    let ybar = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / wsum;
    let init = if logistic { (ybar / (1.0 - ybar)).ln() } else { ybar };
    let mut f = vec![init; y.len()];
    let mut model = Boosted { init, rate, trees: Vec::new(), logistic };
    let mut rng = rng::stream(seed, "trees", 0);
    let all: Vec<usize> = (0..y.len()).collect();
    for _ in 0..n_trees {
        let (g, h): (Vec<f64>, Vec<f64>) = (0..y.len())
            .map(|i| {
                if logistic {
                    let p = sigmoid(f[i]);
                    (w[i] * (y[i] - p), w[i] * (p * (1.0 - p)).max(1e-6))
                } else {
                    (w[i] * (y[i] - f[i]), w[i])
                }
            })
            .unzip();
        let rows = if subsample < 1.0 {
            let mut r = all.clone();
            r.shuffle(&mut rng);
            r.truncate(((y.len() as f64) * subsample).ceil() as usize);
            r.sort_unstable();
            r
        } else {
            all.clone()
        };
        let mut nodes = Vec::new();
        grow(&mut nodes, &rows, &binned, &edges, &g, &h, 0, &tp);
        model.trees.push(nodes);
        let last = Boosted { init: 0.0, rate, trees: vec![model.trees.last().cloned().expect("pushed")], logistic };
        for i in 0..y.len() {
            f[i] += last.raw(&x[i]);
        }
    }
    model
}

#[derive(Debug, Clone)]
struct Neighbours {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    w: Vec<f64>,
    center: Vec<f64>,
    scale: Vec<f64>,
    k: usize,
}

impl Neighbours {
    fn sample(&self, row: &[f64]) -> Sample {
        let z: Vec<f64> = row.iter().zip(&self.center).zip(&self.scale).map(|((v, c), s)| (v - c) / s).collect();
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let k = self.k.min(d.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, cmp);
            d.truncate(k);
        }
        sorted_sample(d.into_iter().map(|(_, i)| (self.y[i], self.w[i])))
    }
}

fn cell_key(row: &[f64]) -> Vec<u64> {
    row.iter().map(|v| (v + 0.0).to_bits()).collect()
}

/// Fits `spec` on rows of `x` (row-major) against `y`.
pub fn fit(spec: &LearnerSpec, x: &[Vec<f64>], y: &[f64], weights: Option<&[f64]>, seed: u64) -> Result<FittedNuisance> {
    let n = y.len();
    if n == 0 {
        return Err(StatsError::InvalidLearner("no training rows".into()));
    }
    if x.len() != n {
        return Err(StatsError::InvalidLearner(format!("{} feature rows for {n} targets", x.len())));
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(StatsError::InvalidLearner("missing or non-finite training values".into()));
    }
    match spec.task {
        Task::Probability if y.iter().any(|v| !(0.0..=1.0).contains(v)) => {
            return Err(StatsError::InvalidLearner("probability targets must lie in [0,1]".into()))
        }
        Task::Quantile(u) if !(u > 0.0 && u <= 1.0) => {
            return Err(StatsError::InvalidLearner(format!("quantile level {u} outside (0,1]")))
        }
        Task::Quantile(_) if spec.family == Family::Logistic => {
            return Err(StatsError::InvalidLearner("Logistic cannot fit quantiles".into()))
        }
        Task::Mean if spec.family == Family::Logistic => {
            return Err(StatsError::InvalidLearner("Logistic fits probabilities only".into()))
        }
        _ => {}
    }
    let ones = vec![1.0; n];
    let w = weights.unwrap_or(&ones);
    let clip = spec.param("clip", DEFAULT_CLIP);
    let mut flags = FitFlags::default();
    if y.iter().all(|v| *v == y[0]) {
        flags.constant = true;
        return Ok(FittedNuisance { task: spec.task, clip, model: Model::Constant(y[0]), residuals: None, flags });
    }
    let model = match spec.family {
        Family::Linear => {
            let (b, ridge) = fit_linear(x, y, w);
            flags.ridge = ridge;
            Model::Linear(b)
        }
        Family::Logistic => {
            let (b, ridge) = fit_logistic(x, y, w, spec.param("lambda", 1e-6));
            flags.ridge = ridge;
            Model::Logistic(b)
        }
        Family::HistGradientTrees => Model::Trees(fit_trees(spec, x, y, w, spec.task == Task::Probability, seed)),
        Family::Knn => {
            let p = x.first().map_or(0, Vec::len);
            let wsum: f64 = w.iter().sum();
            let center: Vec<f64> =
                (0..p).map(|j| x.iter().zip(w).map(|(r, wi)| r[j] * wi).sum::<f64>() / wsum).collect();
            let scale: Vec<f64> = (0..p)
                .map(|j| {
                    let v = x.iter().zip(w).map(|(r, wi)| wi * (r[j] - center[j]).powi(2)).sum::<f64>() / wsum;
                    if v > 0.0 { v.sqrt() } else { 1.0 }
                })
                .collect();
            let xs = x.iter().map(|r| r.iter().enumerate().map(|(j, v)| (v - center[j]) / scale[j]).collect()).collect();
            Model::Knn(Neighbours {
                x: xs,
                y: y.to_vec(),
                w: w.to_vec(),
                center,
                scale,
                k: spec.param("k", 25.0).max(1.0) as usize,
            })
        }
        Family::StratifiedEmpirical => {
            let mut groups: BTreeMap<Vec<u64>, Vec<(f64, f64)>> = BTreeMap::new();
            for i in 0..n {
                groups.entry(cell_key(&x[i])).or_default().push((y[i], w[i]));
            }
            let cells = groups.into_iter().map(|(k, v)| (k, sorted_sample(v.into_iter()))).collect();
            Model::Strata { cells, pooled: sorted_sample(y.iter().copied().zip(w.iter().copied())) }
        }
    };
    let mut fitted = FittedNuisance { task: spec.task, clip, model, residuals: None, flags };
    if matches!(spec.task, Task::Quantile(_)) && matches!(spec.family, Family::Linear | Family::HistGradientTrees) {
        let r = (0..n).map(|i| (y[i] - fitted.mean(&x[i]), w[i]));
        fitted.residuals = Some(sorted_sample(r));
    }
    Ok(fitted)
}

impl FittedNuisance {
    pub fn task(&self) -> Task {
        self.task
    }

    /// Prediction for the learner's own task.
    pub fn predict(&self, row: &[f64]) -> f64 {
        match self.task {
            Task::Quantile(u) => self.quantile(row, u),
            Task::Mean => self.mean(row),
            Task::Probability => match self.model {
                Model::Constant(c) => c,
                _ => self.mean(row).clamp(self.clip, 1.0 - self.clip),
            },
        }
    }

    pub fn predict_all(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict(r)).collect()
    }

    fn mean(&self, row: &[f64]) -> f64 {
        match &self.model {
            Model::Constant(c) => *c,
            Model::Linear(b) => linear_predict(b, row),
            Model::Logistic(b) => sigmoid(linear_predict(b, row)),
            Model::Trees(t) => {
                let f = t.raw(row);
                if t.logistic {
                    sigmoid(f)
                } else {
                    f
                }
            }
            Model::Knn(k) => weighted_mean(&k.sample(row)),
            Model::Strata { cells, pooled } => weighted_mean(cells.get(&cell_key(row)).unwrap_or(pooled)),
        }
    }

    /// Conditional quantile at an arbitrary level in (0,1].
    pub fn quantile(&self, row: &[f64], u: f64) -> f64 {
        match &self.model {
            Model::Constant(c) => *c,
            Model::Knn(k) => type1_quantile(&k.sample(row), u),
            Model::Strata { cells, pooled } => type1_quantile(cells.get(&cell_key(row)).unwrap_or(pooled), u),
            _ => {
                let r = self.residuals.as_ref().expect("quantile learners keep residuals");
                self.mean(row) + type1_quantile(r, u)
            }
        }
    }

    /// Quantiles at several levels, sorted so they are non-decreasing in the level.
    pub fn quantiles(&self, row: &[f64], levels: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..levels.len()).collect();
        order.sort_by(|&a, &b| levels[a].total_cmp(&levels[b]));
        let mut q: Vec<f64> = levels.iter().map(|&u| self.quantile(row, u)).collect();
        let mut sorted: Vec<f64> = order.iter().map(|&i| q[i]).collect();
        sorted.sort_by(f64::total_cmp);
        for (rank, &i) in order.iter().enumerate() {
            q[i] = sorted[rank];
        }
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|x| vec![*x]).collect()
    }

    #[test]
    fn separable_logistic_is_clipped_not_broken() {
        let x = rows(&[-2.0, -1.0, 1.0, 2.0]);
        let y = [0.0, 0.0, 1.0, 1.0];
        let f = fit(&LearnerSpec::new(Task::Probability, Family::Logistic), &x, &y, None, 0).unwrap();
        for r in &x {
            let p = f.predict(r);
            assert!(p > 0.0 && p < 1.0 && p.is_finite());
        }
        assert!(f.predict(&[5.0]) <= 1.0 - DEFAULT_CLIP);
    }

    #[test]
    fn constant_target_is_exact() {
        let x = rows(&[1.0, 2.0, 3.0]);
        for fam in [Family::Logistic, Family::Linear, Family::StratifiedEmpirical] {
            let f = fit(&LearnerSpec::new(Task::Probability, fam), &x, &[1.0; 3], None, 0).unwrap();
            assert_eq!(f.predict(&[9.0]), 1.0);
            assert!(f.flags.constant);
        }
    }

    #[test]
    fn stratified_median_of_odd_cell() {
        let x = rows(&[0.0, 0.0, 0.0, 1.0]);
        let f = fit(&LearnerSpec::new(Task::Quantile(0.5), Family::StratifiedEmpirical), &x, &[3.0, 1.0, 2.0, 9.0], None, 0)
            .unwrap();
        assert_eq!(f.predict(&[0.0]), 2.0);
        assert_eq!(f.quantile(&[0.0], 1.0 / 3.0), 1.0);
        assert_eq!(f.quantile(&[0.0], 0.34), 2.0);
    }

    #[test]
    fn linear_recovers_coefficients_and_flags_collinearity() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 1.0 + 2.0 * r[0] - r[1]).collect();
        let f = fit(&LearnerSpec::new(Task::Mean, Family::Linear), &x, &y, None, 0).unwrap();
        assert!((f.predict(&[3.0, 1.0]) - 6.0).abs() < 1e-9);
        assert!(!f.flags.ridge);
        let dup: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0], r[0]]).collect();
        let f = fit(&LearnerSpec::new(Task::Mean, Family::Linear), &dup, &y, None, 0).unwrap();
        assert!(f.flags.ridge);
    }

    #[test]
    fn trees_fit_a_step() {
        let x: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 200.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| if r[0] < 0.5 { 0.0 } else { 1.0 }).collect();
        let f = fit(&LearnerSpec::new(Task::Mean, Family::HistGradientTrees), &x, &y, None, 0).unwrap();
        assert!(f.predict(&[0.1]) < 0.1 && f.predict(&[0.9]) > 0.9);
    }

    #[test]
    fn knn_uses_nearest_rows() {
        let x = rows(&[0.0, 0.1, 5.0, 5.1]);
        let f = fit(&LearnerSpec::new(Task::Mean, Family::Knn).with("k", 2.0), &x, &[1.0, 3.0, 10.0, 20.0], None, 0).unwrap();
        assert_eq!(f.predict(&[0.05]), 2.0);
        assert_eq!(f.predict(&[5.0]), 15.0);
    }

    #[test]
    fn quantiles_are_sorted() {
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![(i % 5) as f64]).collect();
        let y: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64).collect();
        let f = fit(&LearnerSpec::new(Task::Quantile(0.5), Family::Linear), &x, &y, None, 0).unwrap();
        let q = f.quantiles(&[2.0], &[0.9, 0.1, 0.5]);
        assert!(q[1] <= q[2] && q[2] <= q[0]);
    }
}
