//! K-fold cross-fitting: every row's prediction comes from a model that never saw it.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StatsError};
use crate::learners::{fit, LearnerSpec};
use crate::rng;

pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FoldPlan {
    /// Seeded permutation cut into `k` near-equal blocks.
    Seeded { k: usize, seed: u64 },
    /// Caller-supplied fold label per row, labels `0..k`.
    Explicit(Vec<usize>),
}

/// Fold label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Folds {
    pub labels: Vec<usize>,
    pub k: usize,
}

impl Folds {
    pub fn new(n: usize, plan: &FoldPlan) -> Result<Self> {
        let (labels, k) = match plan {
            FoldPlan::Seeded { k, seed } => {
                let k = *k;
                if k < 2 {
                    return Err(StatsError::InvalidFolds(format!("need at least 2 folds, got {k}")));
                }
                if k > n {
                    return Err(StatsError::InvalidFolds(format!("{k} folds for {n} rows")));
                }
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng::stream(*seed, "folds", 0));
                let mut labels = vec![0; n];
                for (pos, &row) in perm.iter().enumerate() {
                    labels[row] = pos * k / n;
                }
                (labels, k)
            }
            FoldPlan::Explicit(labels) => {
                if labels.len() != n {
                    return Err(StatsError::InvalidFolds(format!("{} labels for {n} rows", labels.len())));
                }
                let k = labels.iter().max().map_or(0, |m| m + 1);
                if k < 2 {
                    return Err(StatsError::InvalidFolds("need at least 2 folds".into()));
                }
                (labels.clone(), k)
            }
        };
        if let Some(f) = (0..k).find(|f| !labels.contains(f)) {
            return Err(StatsError::InvalidFolds(format!("fold {f} is empty")));
        }
        Ok(Folds { labels, k })
    }

    pub fn train(&self, fold: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] != fold).collect()
    }

    pub fn test(&self, fold: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == fold).collect()
    }

    /// Runs `f(fold, train, test)` for every fold in parallel and scatters each returned
    /// vector (one entry per test row, `width` values each) back into row order.
    pub fn map<F>(&self, width: usize, f: F) -> Result<Vec<Vec<f64>>>
    where
        F: Fn(usize, &[usize], &[usize]) -> Result<Vec<Vec<f64>>> + Sync,
    {
        let parts: Vec<(Vec<usize>, Vec<Vec<f64>>)> = (0..self.k)
            .into_par_iter()
            .map(|fold| {
                let (train, test) = (self.train(fold), self.test(fold));
                let out = f(fold, &train, &test)?;
                debug_assert!(out.iter().all(|v| v.len() == test.len()));
                Ok((test, out))
            })
            .collect::<Result<_>>()?;
        let mut res = vec![vec![f64::NAN; self.labels.len()]; width];
        for (test, out) in parts {
            for (c, col) in out.into_iter().enumerate() {
                for (j, &row) in test.iter().enumerate() {
                    res[c][row] = col[j];
                }
            }
        }
        Ok(res)
    }
}

/// Out-of-fold predictions of `spec` for all rows. Training uses rows of the other folds
/// where `eligible` holds; `cell` names that subsample in errors.
pub fn cross_fit(
    spec: &LearnerSpec,
    x: &[Vec<f64>],
    target: &[f64],
    eligible: &[bool],
    folds: &Folds,
    seed: u64,
    cell: &str,
) -> Result<Vec<f64>> {
    let mut out = folds.map(1, |fold, train, test| {
        let rows: Vec<usize> = train.iter().copied().filter(|&i| eligible[i]).collect();
        if rows.is_empty() {
            return Err(StatsError::EmptyTrainingCell { fold, cell: cell.to_string() });
        }
        let tx: Vec<Vec<f64>> = rows.iter().map(|&i| x[i].clone()).collect();
        let ty: Vec<f64> = rows.iter().map(|&i| target[i]).collect();
        let model = fit(spec, &tx, &ty, None, rng::derive_seed(seed, cell, fold as u64))?;
        Ok(vec![test.iter().map(|&i| model.predict(&x[i])).collect()])
    })?;
    Ok(out.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{Family, Task};

    #[test]
    fn folds_are_balanced_and_reproducible() {
        let a = Folds::new(23, &FoldPlan::Seeded { k: 5, seed: 3 }).unwrap();
        let b = Folds::new(23, &FoldPlan::Seeded { k: 5, seed: 3 }).unwrap();
        assert_eq!(a, b);
        for f in 0..5 {
            let m = a.test(f).len();
            assert!(m == 4 || m == 5);
        }
        assert!(Folds::new(3, &FoldPlan::Seeded { k: 4, seed: 0 }).is_err());
        assert!(Folds::new(3, &FoldPlan::Seeded { k: 1, seed: 0 }).is_err());
    }

    #[test]
    fn constant_target_predicts_constant() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let folds = Folds::new(10, &FoldPlan::Seeded { k: 2, seed: 1 }).unwrap();
        let p = cross_fit(&LearnerSpec::new(Task::Mean, Family::Linear), &x, &[4.5; 10], &[true; 10], &folds, 0, "y")
            .unwrap();
        assert!(p.iter().all(|v| *v == 4.5));
    }

    #[test]
    fn predictions_never_see_their_own_row() {
        // Identical features put every row in one cell, so each prediction is the mean of
        // the other folds' targets.
        let x = vec![vec![0.0]; 12];
        let y: Vec<f64> = (0..12).map(f64::from).collect();
        let folds = Folds::new(12, &FoldPlan::Seeded { k: 3, seed: 9 }).unwrap();
        let spec = LearnerSpec::new(Task::Mean, Family::StratifiedEmpirical);
        let p = cross_fit(&spec, &x, &y, &[true; 12], &folds, 0, "y").unwrap();
        for i in 0..12 {
            let own = folds.labels[i];
            let others: Vec<f64> = (0..12).filter(|&j| folds.labels[j] != own).map(|j| y[j]).collect();
            let mean = others.iter().sum::<f64>() / others.len() as f64;
            assert!((p[i] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_cell_is_named() {
        let x = vec![vec![0.0]; 4];
        let folds = Folds::new(4, &FoldPlan::Explicit(vec![0, 0, 1, 1])).unwrap();
        let err = cross_fit(
            &LearnerSpec::new(Task::Mean, Family::Linear),
            &x,
            &[1.0; 4],
            &[true, true, false, false],
            &folds,
            0,
            "S=1,D=1",
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "fold 0: no training rows in S=1,D=1");
    }
}
