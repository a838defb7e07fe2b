mod common;

use common::*;
use pairlik::covariance::{CovarianceSpec, Family, Param, ParamSet};
use pairlik::geometry::Cutoff;
use pairlik::inference::{fit, Bounds, FitOptions, Information, Starts};
use pairlik::objective::{Objective, ObjectiveSpec, PlKind};
use pairlik::simulate::simulate_grf;

fn setup(seed: u64) -> (pairlik::geometry::LocationSet, Vec<f64>, CovarianceSpec) {
    let mut r = rng(seed);
    let locs = random_sites(&mut r, 300);
    let truth = CovarianceSpec::new(Family::Exponential, 1.0, 0.3).unwrap();
    let z = simulate_grf(&truth, &locs, seed).unwrap().values;
    (locs, z, truth)
}

#[test]
fn estimates_maximize_their_objectives() {
    let (locs, z, truth) = setup(31);
    let params = ParamSet::variance_and_range();
    let start = CovarianceSpec::new(Family::Exponential, 0.6, 0.15).unwrap();
    let bounds = Bounds::around(&start, &params);
    for os in [
        ObjectiveSpec::ml(),
        ObjectiveSpec::taper1(0.2).unwrap(),
        ObjectiveSpec::taper2(0.2).unwrap(),
        ObjectiveSpec::pl(PlKind::Marginal, Cutoff::Finite(0.1)).unwrap(),
        ObjectiveSpec::pl(PlKind::Conditional, Cutoff::Finite(0.1)).unwrap(),
        ObjectiveSpec::pl(PlKind::Difference, Cutoff::Finite(0.1)).unwrap(),
    ] {
        let obj = Objective::new(os, &locs, &z).unwrap();
        let res = fit(&obj, &start, &params, &bounds, &FitOptions::default()).unwrap();
        assert!(res.convergence.converged, "{}", res.method);
        assert!(res.objective >= obj.value(&truth).unwrap() - 1e-9, "{}", res.method);
        let g = obj.evaluate(res.fitted_spec(), &params).unwrap().grad;
        assert!(g.iter().all(|v| v.abs() < 1e-3 * obj.value(&truth).unwrap().abs()), "{}: {g:?}", res.method);
        let s2 = res.estimate(Param::Sigma2).unwrap();
        let phi = res.estimate(Param::Phi).unwrap();
        assert!((0.3..3.0).contains(&s2) && (0.08..1.0).contains(&phi), "{}: {s2} {phi}", res.method);
        if matches!(os.kind, pairlik::objective::ObjectiveKind::Taper1) {
            assert!(res.information.is_none() && res.information_note.is_some());
        } else {
            assert!(res.information.is_some(), "{}", res.method);
        }
    }
}

#[test]
fn fits_are_reproducible() {
    let (locs, z, truth) = setup(32);
    let params = ParamSet::all();
    let start = truth.with_nugget(0.1).unwrap();
    let bounds = Bounds::around(&start, &params);
    let obj = Objective::new(ObjectiveSpec::pl(PlKind::Marginal, Cutoff::Finite(0.15)).unwrap(), &locs, &z).unwrap();
    let a = fit(&obj, &start, &params, &bounds, &FitOptions::default()).unwrap();
    let b = fit(&obj, &start, &params, &bounds, &FitOptions::default()).unwrap();
    assert_eq!(a.estimates, b.estimates);
    assert_eq!(a.information, b.information);
    assert!(matches!(a.information, Some(Information::Godambe { .. })));
}

#[test]
fn multi_start_is_no_worse_than_single() {
    let (locs, z, truth) = setup(33);
    let params = ParamSet::variance_and_range();
    let bounds = Bounds::around(&truth, &params);
    let obj = Objective::new(ObjectiveSpec::pl(PlKind::Difference, Cutoff::Finite(0.2)).unwrap(), &locs, &z).unwrap();
    let single = FitOptions {
        starts: Starts::Single,
        information: false,
        ..FitOptions::default()
    };
    let multi = FitOptions {
        information: false,
        ..FitOptions::default()
    };
    let a = fit(&obj, &truth, &params, &bounds, &single).unwrap();
    let b = fit(&obj, &truth, &params, &bounds, &multi).unwrap();
    assert!(b.objective >= a.objective - 1e-9);
    assert_eq!(b.convergence.starts, 5);
}

#[test]
fn start_outside_bounds_is_rejected() {
    let (locs, z, truth) = setup(34);
    let params = ParamSet::variance_and_range();
    let bounds = Bounds {
        lower: vec![0.5, 0.5],
        upper: vec![2.0, 2.0],
    };
    let obj = Objective::new(ObjectiveSpec::ml(), &locs, &z).unwrap();
    assert!(fit(&obj, &truth, &params, &bounds, &FitOptions::default()).is_err());
}
