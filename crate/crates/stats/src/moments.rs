//! Orthogonal moment signals and their aggregation.
//!
//! Signals are stored uncentered: the sample mean of a signal is the estimate. Signal
//! builders take nuisance vectors directly so that oracle nuisances can be injected.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::crossfit::{cross_fit, FoldPlan, Folds, DEFAULT_FOLDS};
use crate::dataset::{AnalysisData, Propensity};
use crate::error::{Result, StatsError};
use crate::learners::{fit, Family, LearnerSpec, Task, DEFAULT_CLIP};
use crate::rng;

/// Default two-sided level for point estimates.
pub const POINT_ALPHA: f64 = 0.05;
/// Default level for bound intervals.
pub const BOUND_ALPHA: f64 = 0.10;

pub(crate) const TREATED: &str = "S=1,D=1";
pub(crate) const CONTROL: &str = "S=1,D=0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Endpoint {
    Point,
    LowerBound,
    UpperBound,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub folds: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSignal {
    pub endpoint: Endpoint,
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl MomentSignal {
    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EstimateResult {
    pub estimand: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
    /// One entry for points, `[lower, upper]` for intervals.
    pub stderr: Vec<f64>,
    pub ci: [f64; 2],
    pub level: f64,
    pub n: usize,
    pub method: String,
    pub clip_count: usize,
    pub crossed: bool,
    pub collapsed: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Learner per nuisance role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSet {
    pub propensity: LearnerSpec,
    pub selection: LearnerSpec,
    pub outcome: LearnerSpec,
    /// Family used for conditional quantiles; the task is set per call.
    pub quantile: LearnerSpec,
}

impl LearnerSet {
    pub fn parametric() -> Self {
        LearnerSet {
            propensity: LearnerSpec::new(Task::Probability, Family::Logistic),
            selection: LearnerSpec::new(Task::Probability, Family::Logistic),
            outcome: LearnerSpec::new(Task::Mean, Family::Linear),
            quantile: LearnerSpec::new(Task::Quantile(0.5), Family::Linear),
        }
    }

    pub fn of_family(family: Family) -> Self {
        let prob = if family == Family::Linear { Family::Logistic } else { family };
        LearnerSet {
            propensity: LearnerSpec::new(Task::Probability, prob),
            selection: LearnerSpec::new(Task::Probability, prob),
            outcome: LearnerSpec::new(Task::Mean, family),
            quantile: LearnerSpec::new(Task::Quantile(0.5), family),
        }
    }
}

impl Default for LearnerSet {
    fn default() -> Self {
        Self::parametric()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    pub learners: LearnerSet,
    pub folds: usize,
    pub seed: u64,
    /// `None` picks the default for the estimator.
    pub alpha: Option<f64>,
    /// Fixed fold labels; overrides `folds` and the seeded assignment.
    pub fold_labels: Option<Vec<usize>>,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions { learners: LearnerSet::default(), folds: DEFAULT_FOLDS, seed: 0, alpha: None, fold_labels: None }
    }
}

impl EstimatorOptions {
    pub fn fold_split(&self, n: usize) -> Result<Folds> {
        match &self.fold_labels {
            Some(l) => Folds::new(n, &FoldPlan::Explicit(l.clone())),
            None => Folds::new(n, &FoldPlan::Seeded { k: self.folds, seed: self.seed }),
        }
    }

    fn provenance(&self, folds: &Folds) -> Provenance {
        Provenance { folds: folds.k, seed: self.seed }
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Standard error of the mean with the `n - 1` variance.
pub(crate) fn std_error(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
}

pub(crate) fn z(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

fn count_clipped(values: &[&[f64]]) -> usize {
    let n = values.first().map_or(0, |v| v.len());
    (0..n).filter(|&i| values.iter().any(|v| v[i] <= DEFAULT_CLIP || v[i] >= 1.0 - DEFAULT_CLIP)).count()
}

/// Cross-fitted nuisances shared by the point estimators, one entry per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmNuisances {
    /// `P(D=1|X)`.
    pub e: Vec<f64>,
    /// `P(S=1|D=1,X)` and `P(S=1|D=0,X)`.
    pub pi1: Vec<f64>,
    pub pi0: Vec<f64>,
    /// `E[Y|S=1,D=1,X]` and `E[Y|S=1,D=0,X]`.
    pub m1: Vec<f64>,
    pub m0: Vec<f64>,
}

fn propensity(data: &AnalysisData, opts: &EstimatorOptions, folds: &Folds) -> Result<Vec<f64>> {
    match data.propensity {
        Propensity::Known(p) => Ok(vec![p; data.n()]),
        Propensity::Estimate => {
            let spec = opts.learners.propensity.with_task(Task::Probability);
            cross_fit(&spec, &data.x, &data.d, &vec![true; data.n()], folds, opts.seed, "D")
        }
    }
}

fn arm_rows(data: &AnalysisData, arm: f64) -> Vec<bool> {
    data.d.iter().map(|d| *d == arm).collect()
}

fn selected_rows(data: &AnalysisData, arm: f64) -> Vec<bool> {
    data.d.iter().zip(&data.s).map(|(d, s)| *d == arm && *s == 1.0).collect()
}

/// Outcome vector with missing entries zeroed so that learners can take it as a target
/// (only selected rows are ever used for training).
fn outcome_target(data: &AnalysisData) -> Vec<f64> {
    data.y.iter().map(|y| if y.is_nan() { 0.0 } else { *y }).collect()
}

pub fn fit_arm_nuisances(data: &AnalysisData, opts: &EstimatorOptions, folds: &Folds) -> Result<ArmNuisances> {
    let sel = opts.learners.selection.with_task(Task::Probability);
    let out = opts.learners.outcome.with_task(Task::Mean);
    let y = outcome_target(data);
    Ok(ArmNuisances {
        e: propensity(data, opts, folds)?,
        pi1: cross_fit(&sel, &data.x, &data.s, &arm_rows(data, 1.0), folds, opts.seed, "D=1")?,
        pi0: cross_fit(&sel, &data.x, &data.s, &arm_rows(data, 0.0), folds, opts.seed, "D=0")?,
        m1: cross_fit(&out, &data.x, &y, &selected_rows(data, 1.0), folds, opts.seed, TREATED)?,
        m0: cross_fit(&out, &data.x, &y, &selected_rows(data, 0.0), folds, opts.seed, CONTROL)?,
    })
}

/// Residual term `S 1(D=arm) (Y - m) / w`, zero off the selected arm.
fn residual(data: &AnalysisData, i: usize, arm: f64, m: f64, w: f64) -> f64 {
    if data.s[i] == 1.0 && data.d[i] == arm {
        (data.y[i] - m) / w
    } else {
        0.0
    }
}

/// Per-row ATE signal. Selection enters the inverse weights, which reduce to the classic
/// AIPW form when every outcome is observed.
pub fn ate_signal(data: &AnalysisData, nu: &ArmNuisances) -> Vec<f64> {
    (0..data.n())
        .map(|i| {
            let t = residual(data, i, 1.0, nu.m1[i], nu.e[i] * nu.pi1[i]);
            let c = residual(data, i, 0.0, nu.m0[i], (1.0 - nu.e[i]) * nu.pi0[i]);
            t - c + nu.m1[i] - nu.m0[i]
        })
        .collect()
}

/// Weighting of the control regression in the ATT moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AttVariant {
    /// `E[Y|S=1,D=0,X]` weighted by `P(D=1|X)/P(D=1)`, mirroring the treated moment.
    #[default]
    Balanced,
    /// Control regression additionally reweighted by `SD/P(SD=1)`.
    AsPrinted,
}

/// Per-row ATT signal `psi11 - psi01`, with `p_d = P(D=1)`.
pub fn att_signal(data: &AnalysisData, nu: &ArmNuisances, p_d: f64, variant: AttVariant) -> Vec<f64> {
    let n = data.n();
    let sd: Vec<f64> = (0..n).map(|i| data.s[i] * data.d[i]).collect();
    let p_sd = mean(&sd);
    let psi01_parts: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let a = residual(data, i, 0.0, nu.m0[i], (1.0 - nu.e[i]) * nu.pi0[i]) * (nu.e[i] / p_d);
            (a, nu.m0[i] * (nu.e[i] / p_d))
        })
        .collect();
    let theta01 = match variant {
        AttVariant::Balanced => 0.0,
        AttVariant::AsPrinted => psi01_parts.iter().zip(&sd).map(|((a, b), w)| a + b * w / p_sd).sum::<f64>() / n as f64,
    };
    (0..n)
        .map(|i| {
            let psi11 = residual(data, i, 1.0, nu.m1[i], nu.e[i] * nu.pi1[i]) * (nu.e[i] / p_d) + nu.m1[i] * (nu.e[i] / p_d);
            let (a, b) = psi01_parts[i];
            let psi01 = match variant {
                AttVariant::Balanced => a + b,
                AttVariant::AsPrinted => {
                    let w = sd[i] / p_sd;
                    a + b * w + theta01 * (1.0 - w)
                }
            };
            psi11 - psi01
        })
        .collect()
}

pub fn point_result(estimand: &str, method: &str, values: &[f64], alpha: f64, clip_count: usize) -> EstimateResult {
    let point = mean(values);
    let se = std_error(values);
    let half = z(1.0 - alpha / 2.0) * se;
    EstimateResult {
        estimand: estimand.to_string(),
        point: Some(point),
        interval: None,
        stderr: vec![se],
        ci: [point - half, point + half],
        level: 1.0 - alpha,
        n: values.len(),
        method: method.to_string(),
        clip_count,
        crossed: false,
        collapsed: false,
        warnings: Vec::new(),
    }
}

pub fn ate_aipw(data: &AnalysisData, opts: &EstimatorOptions) -> Result<(MomentSignal, EstimateResult)> {
    let folds = opts.fold_split(data.n())?;
    let nu = fit_arm_nuisances(data, opts, &folds)?;
    let values = ate_signal(data, &nu);
    check_finite(&values)?;
    let clips = count_clipped(&[&nu.e, &nu.pi1, &nu.pi0]);
    let res = point_result("ate", "aipw", &values, opts.alpha.unwrap_or(POINT_ALPHA), clips);
    Ok((MomentSignal { endpoint: Endpoint::Point, values, provenance: opts.provenance(&folds) }, res))
}

pub fn att_m2(data: &AnalysisData, opts: &EstimatorOptions, variant: AttVariant) -> Result<(MomentSignal, EstimateResult)> {
    let folds = opts.fold_split(data.n())?;
    let p_d = mean(&data.d);
    let nu = fit_arm_nuisances(data, opts, &folds)?;
    let values = att_signal(data, &nu, p_d, variant);
    check_finite(&values)?;
    let clips = count_clipped(&[&nu.e, &nu.pi1, &nu.pi0]);
    let method = match variant {
        AttVariant::Balanced => "att-selection-weighted",
        AttVariant::AsPrinted => "att-selection-weighted-as-printed",
    };
    let mut res = point_result("att", method, &values, opts.alpha.unwrap_or(POINT_ALPHA), clips);
    if data.propensity == Propensity::Estimate {
        res.warnings.push("estimatedPropensityWarning: P(D=1|X) was estimated; no correction for that step is applied".into());
    }
    Ok((MomentSignal { endpoint: Endpoint::Point, values, provenance: opts.provenance(&folds) }, res))
}

fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(StatsError::Estimation(format!("non-finite moment at row {}", i + 1))),
        None => Ok(()),
    }
}

/// Which monotonicity assumption licenses the bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Monotonicity {
    /// `S(1) >= S(0)` everywhere; only the treated arm is trimmed.
    Global,
    /// Direction known per covariate cell: estimated from `P(S=1|D=0,x) <= P(S=1|D=1,x)`.
    Conditional,
    /// Direction given per row (true: treatment weakly raises selection).
    Declared(Vec<bool>),
}

/// One trimmed regression: per-row threshold `q` and `g = E[kept | S=1, D=arm, X]`, where
/// `kept = (Y - q) 1(keep)` on trimmed rows and `Y` otherwise. Measuring from `q` makes ties
/// at the threshold irrelevant and the moment insensitive to `q` at first order.
#[derive(Debug, Clone, PartialEq)]
pub struct Trim {
    /// Lower-side trims keep `Y <= threshold`; upper-side trims keep `Y >= threshold`.
    /// Untrimmed rows carry `+inf` / `-inf`.
    pub threshold: Vec<f64>,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeeNuisances {
    pub e: Vec<f64>,
    pub pi1: Vec<f64>,
    pub pi0: Vec<f64>,
    /// Row belongs to the cell type where treatment weakly raises selection.
    pub positive: Vec<bool>,
    pub lo1: Trim,
    pub hi1: Trim,
    pub lo0: Trim,
    pub hi0: Trim,
}

/// Trimming share for each arm: `p0 = P(S=1|D=0,x)/P(S=1|D=1,x)` for the treated arm
/// on positive rows, its inverse for the control arm otherwise. Returns whether a level
/// above 1 had to be clamped.
pub fn trimming_levels(pi1: f64, pi0: f64, positive: bool) -> (f64, f64, bool) {
    if positive {
        let p0 = pi0 / pi1;
        (p0.min(1.0), 1.0, p0 > 1.0)
    } else {
        let r = pi1 / pi0;
        (1.0, r.min(1.0), r > 1.0)
    }
}

fn is_trimmed(level: f64) -> bool {
    level < 1.0 - 1e-12
}

fn keep(y: f64, threshold: f64, upper: bool) -> bool {
    if upper {
        y >= threshold
    } else {
        y <= threshold
    }
}

fn kept(y: f64, threshold: f64, upper: bool) -> f64 {
    if !threshold.is_finite() {
        y
    } else if keep(y, threshold, upper) {
        y - threshold
    } else {
        0.0
    }
}

/// `1(D=arm) (S kept - pi g) / P(D=arm|X) + pi g`, plus `q` times the other arm's selection
/// signal when the arm is trimmed: `E[Y 1(Y <= q)]` at share `l` equals
/// `E[(Y - q) 1(Y <= q)] + q l`, and `pi l` is the other arm's selection probability.
fn trimmed_arm(data: &AnalysisData, i: usize, arm: f64, e_arm: f64, pi: f64, t: &Trim, upper: bool, other: f64) -> f64 {
    let (g, q) = (t.g[i], t.threshold[i]);
    let r = if data.d[i] == arm {
        let sk = if data.s[i] == 1.0 { kept(data.y[i], q, upper) } else { 0.0 };
        (sk - pi * g) / e_arm
    } else {
        0.0
    };
    r + pi * g + if q.is_finite() { q * other } else { 0.0 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeeSignals {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Per-row always-observed share signal and its mean.
    pub share: Vec<f64>,
    pub share_mean: f64,
}

/// Lower and upper bound signals. The bound numerators are divided by the always-observed
/// share `E[min(P(S=1|D=0,X), P(S=1|D=1,X))]`, linearized so each signal's mean is the
/// ratio estimate.
pub fn lee_signals(data: &AnalysisData, nu: &LeeNuisances) -> LeeSignals {
    let n = data.n();
    let mut num_l = Vec::with_capacity(n);
    let mut num_u = Vec::with_capacity(n);
    let mut share = Vec::with_capacity(n);
    for i in 0..n {
        let (e1, e0) = (nu.e[i], 1.0 - nu.e[i]);
        // Selection signals of each arm; the trimmed arm borrows the other arm's.
        let sel0 = nu.pi0[i] + if data.d[i] == 0.0 { (data.s[i] - nu.pi0[i]) / e0 } else { 0.0 };
        let sel1 = nu.pi1[i] + if data.d[i] == 1.0 { (data.s[i] - nu.pi1[i]) / e1 } else { 0.0 };
        let t_lo1 = trimmed_arm(data, i, 1.0, e1, nu.pi1[i], &nu.lo1, false, sel0);
        let t_hi1 = trimmed_arm(data, i, 1.0, e1, nu.pi1[i], &nu.hi1, true, sel0);
        let t_lo0 = trimmed_arm(data, i, 0.0, e0, nu.pi0[i], &nu.lo0, false, sel1);
        let t_hi0 = trimmed_arm(data, i, 0.0, e0, nu.pi0[i], &nu.hi0, true, sel1);
        num_l.push(t_lo1 - t_hi0);
        num_u.push(t_hi1 - t_lo0);
        share.push(if nu.positive[i] { sel0 } else { sel1 });
    }
    let a = mean(&share);
    let linearize = |num: &[f64]| {
        let theta = mean(num) / a;
        num.iter().zip(&share).map(|(v, s)| theta + (v - theta * s) / a).collect::<Vec<f64>>()
    };
    LeeSignals { lower: linearize(&num_l), upper: linearize(&num_u), share, share_mean: a }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BoundsDiagnostics {
    /// Rows whose trimming share exceeded 1 and was clamped.
    pub clamped_levels: usize,
    pub negative_share: f64,
    pub always_observed_share: f64,
}

fn fit_rows(spec: &LearnerSpec, x: &[Vec<f64>], target: &[f64], rows: &[usize], seed: u64) -> Result<crate::learners::FittedNuisance> {
    let tx: Vec<Vec<f64>> = rows.iter().map(|&i| x[i].clone()).collect();
    let ty: Vec<f64> = rows.iter().map(|&i| target[i]).collect();
    fit(spec, &tx, &ty, None, seed)
}

pub fn fit_lee_nuisances(
    data: &AnalysisData,
    opts: &EstimatorOptions,
    folds: &Folds,
    mono: &Monotonicity,
) -> Result<(LeeNuisances, usize)> {
    if let Monotonicity::Declared(v) = mono {
        if v.len() != data.n() {
            return Err(StatsError::InvalidData(format!("{} declared monotonicity types for {} rows", v.len(), data.n())));
        }
    }
    let e = propensity(data, opts, folds)?;
    let sel = opts.learners.selection.with_task(Task::Probability);
    let out = opts.learners.outcome.with_task(Task::Mean);
    let quant = opts.learners.quantile.with_task(Task::Quantile(0.5));
    let y = outcome_target(data);
    let neg_y: Vec<f64> = y.iter().map(|v| -v).collect();
    let x = &data.x;
    let seed = opts.seed;
    let cols = folds.map(12, |fold, train, test| {
        let f = fold as u64;
        let pick = |pred: &dyn Fn(usize) -> bool| train.iter().copied().filter(|&i| pred(i)).collect::<Vec<usize>>();
        let nonempty = |rows: Vec<usize>, cell: &str| {
            if rows.is_empty() {
                Err(StatsError::EmptyTrainingCell { fold, cell: cell.to_string() })
            } else {
                Ok(rows)
            }
        };
        let arm1 = nonempty(pick(&|i| data.d[i] == 1.0), "D=1")?;
        let arm0 = nonempty(pick(&|i| data.d[i] == 0.0), "D=0")?;
        let sel1 = nonempty(pick(&|i| data.d[i] == 1.0 && data.s[i] == 1.0), TREATED)?;
        let sel0 = nonempty(pick(&|i| data.d[i] == 0.0 && data.s[i] == 1.0), CONTROL)?;
        let p1 = fit_rows(&sel, x, &data.s, &arm1, rng::derive_seed(seed, "D=1", f))?;
        let p0 = fit_rows(&sel, x, &data.s, &arm0, rng::derive_seed(seed, "D=0", f))?;
        let positive = |i: usize, pi1: f64, pi0: f64| match mono {
            Monotonicity::Global => true,
            Monotonicity::Conditional => pi0 <= pi1,
            Monotonicity::Declared(v) => v[i],
        };
        // Levels for every row touched in this fold: (treated level, control level, clamped).
        let level = |i: usize| {
            let (a, b) = (p1.predict(&x[i]), p0.predict(&x[i]));
            let pos = positive(i, a, b);
            let (l1, l0, c) = trimming_levels(a, b, pos);
            (a, b, pos, l1, l0, c)
        };
        let mut out_cols: Vec<Vec<f64>> = vec![Vec::with_capacity(test.len()); 12];
        let test_levels: Vec<_> = test.iter().map(|&i| level(i)).collect();
        // For each arm and side: threshold model on the training selected rows, then the
        // trimmed regression.
        let configs: [(f64, bool, &Vec<usize>, &str); 4] =
            [(1.0, false, &sel1, TREATED), (1.0, true, &sel1, TREATED), (0.0, false, &sel0, CONTROL), (0.0, true, &sel0, CONTROL)];
        let mut trims: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        for (arm, upper, rows, cell) in configs {
            let lvl = |l: &(f64, f64, bool, f64, f64, bool)| if arm == 1.0 { l.3 } else { l.4 };
            let train_levels: Vec<f64> = rows.iter().map(|&i| lvl(&level(i))).collect();
            let any_trim =
                train_levels.iter().copied().chain(test_levels.iter().map(lvl)).any(is_trimmed);
            let none = if upper { f64::NEG_INFINITY } else { f64::INFINITY };
            let q_model = if any_trim {
                let tgt = if upper { &neg_y } else { &y };
                Some(fit_rows(&quant, x, tgt, rows, rng::derive_seed(seed, "quantile", f))?)
            } else {
                None
            };
            let threshold = |i: usize, l: f64| match &q_model {
                Some(m) if is_trimmed(l) => {
                    let q = m.quantile(&x[i], l);
                    if upper {
                        -q
                    } else {
                        q
                    }
                }
                _ => none,
            };
            let mut tgt = y.clone();
            for (k, &i) in rows.iter().enumerate() {
                tgt[i] = kept(y[i], threshold(i, train_levels[k]), upper);
            }
            let g_model = fit_rows(&out, x, &tgt, rows, rng::derive_seed(seed, cell, f))?;
            let th: Vec<f64> = test.iter().zip(&test_levels).map(|(&i, l)| threshold(i, lvl(l))).collect();
            let g: Vec<f64> = test.iter().map(|&i| g_model.predict(&x[i])).collect();
            trims.push((th, g));
        }
        for (j, l) in test_levels.iter().enumerate() {
            out_cols[0].push(l.0);
            out_cols[1].push(l.1);
            out_cols[2].push(if l.2 { 1.0 } else { 0.0 });
            out_cols[3].push(if l.5 { 1.0 } else { 0.0 });
            for (c, (th, g)) in trims.iter().enumerate() {
                out_cols[4 + 2 * c].push(th[j]);
                out_cols[5 + 2 * c].push(g[j]);
            }
        }
        Ok(out_cols)
    })?;
    let trim = |c: usize| Trim { threshold: cols[4 + 2 * c].clone(), g: cols[5 + 2 * c].clone() };
    let clamped = cols[3].iter().filter(|v| **v == 1.0).count();
    Ok((
        LeeNuisances {
            e,
            pi1: cols[0].clone(),
            pi0: cols[1].clone(),
            positive: cols[2].iter().map(|v| *v == 1.0).collect(),
            lo1: trim(0),
            hi1: trim(1),
            lo0: trim(2),
            hi0: trim(3),
        },
        clamped,
    ))
}

/// Interval from lower and upper signals: one-sided normal limits at `alpha` on each
/// endpoint; crossed endpoints collapse to their midpoint.
pub fn bounds_result(estimand: &str, method: &str, lower: &[f64], upper: &[f64], alpha: f64, clip_count: usize) -> EstimateResult {
    let (mut l, mut u) = (mean(lower), mean(upper));
    let (se_l, se_u) = (std_error(lower), std_error(upper));
    // Gaps within rounding of zero count as equal endpoints, not as a crossing.
    let tie = 1e-12 * l.abs().max(1.0);
    let crossed = l - u > tie;
    if l > u {
        let mid = 0.5 * (l + u);
        l = mid;
        u = mid;
    }
    let zq = z(1.0 - alpha);
    let collapsed = u - l <= tie;
    EstimateResult {
        estimand: estimand.to_string(),
        point: None,
        interval: Some([l, u]),
        stderr: vec![se_l, se_u],
        ci: [l - zq * se_l, u + zq * se_u],
        level: 1.0 - alpha,
        n: lower.len(),
        method: method.to_string(),
        clip_count,
        crossed,
        collapsed,
        warnings: Vec::new(),
    }
}

/// Trimming bounds on the always-observed effect. With `use_covariates` false all
/// nuisances are marginal, which gives the classic no-covariate bounds.
pub fn zr_lee_bounds(
    data: &AnalysisData,
    opts: &EstimatorOptions,
    mono: &Monotonicity,
    use_covariates: bool,
) -> Result<(MomentSignal, MomentSignal, EstimateResult, BoundsDiagnostics)> {
    let marginal;
    let data = if use_covariates {
        data
    } else {
        marginal = data.without_covariates();
        &marginal
    };
    let folds = opts.fold_split(data.n())?;
    let (nu, clamped) = fit_lee_nuisances(data, opts, &folds, mono)?;
    let sig = lee_signals(data, &nu);
    check_finite(&sig.lower)?;
    check_finite(&sig.upper)?;
    let clips = count_clipped(&[&nu.e, &nu.pi1, &nu.pi0]);
    let method = if use_covariates { "trimming-bounds-covariates" } else { "trimming-bounds-marginal" };
    let mut res = bounds_result("always-observed", method, &sig.lower, &sig.upper, opts.alpha.unwrap_or(BOUND_ALPHA), clips);
    res.method.push_str("; ci: conservative substitute");
    if clamped > 0 {
        res.warnings.push(format!("{clamped} rows had a trimming share above 1, clamped to 1"));
    }
    if res.crossed {
        res.warnings.push("estimated lower bound exceeded the upper bound; collapsed to the midpoint".into());
    }
    let diag = BoundsDiagnostics {
        clamped_levels: clamped,
        negative_share: nu.positive.iter().filter(|p| !**p).count() as f64 / data.n() as f64,
        always_observed_share: sig.share_mean,
    };
    let prov = opts.provenance(&folds);
    Ok((
        MomentSignal { endpoint: Endpoint::LowerBound, values: sig.lower, provenance: prov.clone() },
        MomentSignal { endpoint: Endpoint::UpperBound, values: sig.upper, provenance: prov },
        res,
        diag,
    ))
}
