//! Cross-fitted trimming bounds against the exhaustive finite-population oracle.
//!
//! The data are `K` identical copies of a population, one copy per fold, and every learner
//! is a cell-wise empirical one. Each fold's training sample then has exactly the
//! population's conditional distributions, so the estimator must reproduce the oracle.

use mswig_oracles::bounds::{trimming_bounds, Atom};
use mswig_stats::dataset::{AnalysisData, Propensity};
use mswig_stats::learners::{Family, LearnerSpec, Task};
use mswig_stats::moments::{zr_lee_bounds, EstimatorOptions, LearnerSet, Monotonicity};
use proptest::prelude::*;

const COPIES: usize = 3;
const TOL: f64 = 1e-9;

fn replicate(atoms: &[Atom]) -> (AnalysisData, Vec<usize>) {
    let (mut d, mut s, mut y, mut x, mut folds) = (vec![], vec![], vec![], vec![], vec![]);
    for copy in 0..COPIES {
        for a in atoms {
            for _ in 0..a.count {
                d.push(a.d as f64);
                s.push(a.s as f64);
                y.push(if a.s == 1 { a.y } else { f64::NAN });
                x.push(vec![a.x as f64]);
                folds.push(copy);
            }
        }
    }
    let data = AnalysisData { d, s, y, x, covariate_names: vec!["X".into()], propensity: Propensity::Estimate };
    (data, folds)
}

fn empirical_options(folds: Vec<usize>) -> EstimatorOptions {
    let spec = |task| LearnerSpec::new(task, Family::StratifiedEmpirical).with("clip", 0.0);
    EstimatorOptions {
        learners: LearnerSet {
            propensity: spec(Task::Probability),
            selection: spec(Task::Probability),
            outcome: spec(Task::Mean),
            quantile: spec(Task::Quantile(0.5)),
        },
        fold_labels: Some(folds),
        ..Default::default()
    }
}

fn estimated(atoms: &[Atom], mono: Monotonicity, covariates: bool) -> (f64, f64) {
    let (data, folds) = replicate(atoms);
    let (lo, hi, res, _) = zr_lee_bounds(&data, &empirical_options(folds), &mono, covariates).unwrap();
    assert!(!res.crossed);
    (lo.mean(), hi.mean())
}

fn atom(x: u32, d: u8, s: u8, y: f64, count: u32) -> Atom {
    Atom { x, d, s, y, count }
}

/// Eight `(x, d, s)` cells. In `x = 0` treatment raises selection; in `x = 1` it lowers it.
fn eight_cell_toy() -> Vec<Atom> {
    vec![
        atom(0, 1, 1, 1.0, 2),
        atom(0, 1, 1, 2.0, 3),
        atom(0, 1, 1, 5.0, 3),
        atom(0, 1, 0, 0.0, 2),
        atom(0, 0, 1, 1.5, 2),
        atom(0, 0, 1, 0.5, 2),
        atom(0, 0, 0, 0.0, 6),
        atom(1, 1, 1, 3.0, 2),
        atom(1, 1, 1, -1.0, 1),
        atom(1, 1, 0, 0.0, 5),
        atom(1, 0, 1, 0.0, 3),
        atom(1, 0, 1, 4.0, 2),
        atom(1, 0, 1, 2.0, 1),
        atom(1, 0, 0, 0.0, 2),
    ]
}

#[test]
fn eight_cell_toy_matches_oracle_with_conditional_monotonicity() {
    let atoms = eight_cell_toy();
    let o = trimming_bounds(&atoms, true, false);
    let (lo, hi) = estimated(&atoms, Monotonicity::Conditional, true);
    assert!((lo - o.lower).abs() < TOL, "{lo} vs {}", o.lower);
    assert!((hi - o.upper).abs() < TOL, "{hi} vs {}", o.upper);
    assert!(o.lower < o.upper);
}

#[test]
fn eight_cell_toy_matches_pooled_oracle() {
    let atoms = eight_cell_toy();
    let o = trimming_bounds(&atoms, false, true);
    let (lo, hi) = estimated(&atoms, Monotonicity::Global, false);
    assert!((lo - o.lower).abs() < TOL, "{lo} vs {}", o.lower);
    assert!((hi - o.upper).abs() < TOL, "{hi} vs {}", o.upper);
}

#[test]
fn eight_cell_toy_frozen_values() {
    // Worked by hand. x=0: pi1=0.8, pi0=0.4, keep the 4 lowest / highest of 8 treated
    // units. x=1: pi1=3/8, pi0=3/4, keep half of the 6 control units. Cell weights 20/36 and
    // 16/36 give L = -6/14 and U = 36/14.
    let o = trimming_bounds(&eight_cell_toy(), true, false);
    assert!((o.lower - (-3.0 / 7.0)).abs() < 1e-12, "{}", o.lower);
    assert!((o.upper - 18.0 / 7.0).abs() < 1e-12, "{}", o.upper);
}

fn arm_atoms() -> impl Strategy<Value = Vec<(u8, u32)>> {
    // Outcome levels 0..4 with counts; at least one selected unit per arm-cell.
    prop::collection::vec((0u8..4, 1u32..4), 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_populations_match_oracle(
        cells in prop::collection::vec((arm_atoms(), 0u32..4, arm_atoms(), 0u32..4), 1..3),
        conditional in any::<bool>(),
    ) {
        let mut atoms = Vec::new();
        for (x, (treated, t_out, control, c_out)) in cells.iter().enumerate() {
            let x = x as u32;
            for (y, c) in treated {
                atoms.push(atom(x, 1, 1, *y as f64 * 0.75 - 1.0, *c));
            }
            for (y, c) in control {
                atoms.push(atom(x, 0, 1, *y as f64 * 1.25, *c));
            }
            if *t_out > 0 {
                atoms.push(atom(x, 1, 0, 0.0, *t_out));
            }
            if *c_out > 0 {
                atoms.push(atom(x, 0, 0, 0.0, *c_out));
            }
        }
        let o = trimming_bounds(&atoms, conditional, false);
        let mono = if conditional { Monotonicity::Conditional } else { Monotonicity::Global };
        let (lo, hi) = estimated(&atoms, mono, true);
        prop_assert!((lo - o.lower).abs() < TOL, "lower {} vs {}", lo, o.lower);
        prop_assert!((hi - o.upper).abs() < TOL, "upper {} vs {}", hi, o.upper);
    }
}
