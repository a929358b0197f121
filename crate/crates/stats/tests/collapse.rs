//! With every outcome observed, the missing-data estimators reduce to their complete-data
//! counterparts exactly.

use mswig_stats::dataset::{AnalysisData, Propensity, Roles};
use mswig_stats::learners::Family;
use mswig_stats::moments::{ate_aipw, att_m2, zr_lee_bounds, AttVariant, EstimatorOptions, LearnerSet, Monotonicity};
use mswig_stats::sim::{simulate, ScmSpec, Template};

fn complete(n: usize, seed: u64, propensity: Propensity) -> AnalysisData {
    // s.0 large makes every unit selected.
    let sim = simulate(&ScmSpec::new(Template::M2, n, seed).with("s.0", 60.0)).unwrap();
    assert!(sim.observed.column("S").unwrap().iter().all(|s| *s == 1.0));
    AnalysisData::from_dataset(&sim.observed, &Roles::new("D", "S", "Y", &["X"]), propensity).unwrap()
}

#[test]
fn att_equals_aipw_when_randomized_and_complete() {
    let base = complete(800, 5, Propensity::Estimate);
    let p = base.d.iter().sum::<f64>() / base.n() as f64;
    let data = AnalysisData { propensity: Propensity::Known(p), ..base };
    for learners in [LearnerSet::parametric(), LearnerSet::of_family(Family::HistGradientTrees)] {
        let opts = EstimatorOptions { learners, folds: 5, seed: 11, ..Default::default() };
        let (_, ate) = ate_aipw(&data, &opts).unwrap();
        let (_, att) = att_m2(&data, &opts, AttVariant::Balanced).unwrap();
        let gap = (att.point.unwrap() - ate.point.unwrap()).abs();
        assert!(gap < 1e-10, "{gap}");
    }
}

#[test]
fn bounds_collapse_to_aipw() {
    let data = complete(600, 6, Propensity::Estimate);
    let opts = EstimatorOptions { folds: 4, seed: 3, ..Default::default() };
    let (_, ate) = ate_aipw(&data, &opts).unwrap();
    for (mono, covs) in [(Monotonicity::Conditional, true), (Monotonicity::Global, true)] {
        let (lo, hi, res, diag) = zr_lee_bounds(&data, &opts, &mono, covs).unwrap();
        assert!(res.collapsed && !res.crossed);
        assert_eq!(lo.values, hi.values);
        assert!((lo.mean() - ate.point.unwrap()).abs() < 1e-10);
        assert_eq!(diag.always_observed_share, 1.0);
    }
}

#[test]
fn marginal_bounds_collapse_to_mean_difference() {
    let data = complete(400, 7, Propensity::Estimate);
    let opts = EstimatorOptions { folds: 4, ..Default::default() };
    let (_, _, res, _) = zr_lee_bounds(&data, &opts, &Monotonicity::Global, false).unwrap();
    let [l, u] = res.interval.unwrap();
    assert!(res.collapsed && (l - u).abs() < 1e-12);
}
