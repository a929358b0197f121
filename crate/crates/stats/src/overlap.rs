//! Selection-probability overlap and monotonicity-type shares.

use serde::Serialize;

use crate::crossfit::cross_fit;
use crate::dataset::AnalysisData;
use crate::error::Result;
use crate::learners::Task;
use crate::moments::EstimatorOptions;

pub const BIN_WIDTH: f64 = 0.02;
pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.01, 0.05, 0.1];

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ArmSummary {
    pub arm: u8,
    pub min: f64,
    pub max: f64,
    /// 10th, 20th, ..., 90th percentiles.
    pub deciles: Vec<f64>,
    /// `(threshold, share of rows below it)`.
    pub below: Vec<(f64, f64)>,
    /// Counts per bin of width 0.02 on `[0, 1]`; the last bin includes 1.
    pub histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct OverlapReport {
    pub n: usize,
    pub arms: Vec<ArmSummary>,
    /// Share of rows with `P(S=1|D=0,x) <= P(S=1|D=1,x)`.
    pub positive_share: f64,
    pub negative_share: f64,
    /// True when no arm has mass below any threshold.
    pub no_trimming_required: bool,
    #[serde(skip)]
    pub pi1: Vec<f64>,
    #[serde(skip)]
    pub pi0: Vec<f64>,
}

fn summarize(arm: u8, p: &[f64], thresholds: &[f64]) -> ArmSummary {
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let at = |u: f64| sorted[((u * n as f64).ceil() as usize).clamp(1, n) - 1];
    let bins = (1.0 / BIN_WIDTH).round() as usize;
    let mut histogram = vec![0; bins];
    for v in p {
        histogram[((v / BIN_WIDTH).floor() as usize).min(bins - 1)] += 1;
    }
    ArmSummary {
        arm,
        min: sorted[0],
        max: sorted[n - 1],
        deciles: (1..10).map(|k| at(k as f64 / 10.0)).collect(),
        below: thresholds.iter().map(|&t| (t, p.iter().filter(|v| **v < t).count() as f64 / n as f64)).collect(),
        histogram,
    }
}

pub fn overlap_report(data: &AnalysisData, opts: &EstimatorOptions, thresholds: &[f64]) -> Result<OverlapReport> {
    let folds = opts.fold_split(data.n())?;
    let sel = opts.learners.selection.with_task(Task::Probability);
    let arm = |a: f64| data.d.iter().map(|d| *d == a).collect::<Vec<bool>>();
    let pi1 = cross_fit(&sel, &data.x, &data.s, &arm(1.0), &folds, opts.seed, "D=1")?;
    let pi0 = cross_fit(&sel, &data.x, &data.s, &arm(0.0), &folds, opts.seed, "D=0")?;
    let arms = vec![summarize(0, &pi0, thresholds), summarize(1, &pi1, thresholds)];
    let positive = pi0.iter().zip(&pi1).filter(|(a, b)| a <= b).count() as f64 / data.n() as f64;
    let no_trimming_required = arms.iter().all(|a| a.below.iter().all(|(_, s)| *s == 0.0));
    Ok(OverlapReport { n: data.n(), arms, positive_share: positive, negative_share: 1.0 - positive, no_trimming_required, pi1, pi0 })
}

impl OverlapReport {
    /// Plot-ready histogram: `bin_lower,bin_upper,arm0,arm1`.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("bin_lower,bin_upper,arm0,arm1\n");
        for b in 0..self.arms[0].histogram.len() {
            let lo = b as f64 * BIN_WIDTH;
            out.push_str(&format!(
                "{},{},{},{}\n",
                (lo * 100.0).round() / 100.0,
                ((lo + BIN_WIDTH) * 100.0).round() / 100.0,
                self.arms[0].histogram[b],
                self.arms[1].histogram[b]
            ));
        }
        out
    }
}
