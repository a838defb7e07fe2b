mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use pairlik::covariance::{cov, taper, CovarianceSpec, Family, ParamSet, Taper};
use pairlik::geometry::{pairs_within, Cutoff, LocationSet};
use pairlik::objective::*;
use proptest::prelude::*;
use rand::Rng;

fn dense_cov(spec: &CovarianceSpec, t: &Taper, locs: &LocationSet) -> DMatrix<f64> {
    let n = locs.len();
    DMatrix::from_fn(n, n, |i, j| {
        let h = locs.dist(i, j);
        cov(spec, h).unwrap() * taper(t, h)
    })
}

/// `-1/2 log|A| - 1/2 z^T A^{-1} z` by LU.
fn lu_loglik(a: &DMatrix<f64>, z: &[f64]) -> f64 {
    let lu = a.clone().lu();
    let zv = DVector::from_column_slice(z);
    let x = lu.solve(&zv).unwrap();
    -0.5 * lu.determinant().ln() - 0.5 * zv.dot(&x)
}

#[test]
fn exact_and_first_taper_match_lu() {
    let mut r = rng(1);
    for case in 0..24 {
        let n = r.random_range(2..=100);
        let locs = random_sites(&mut r, n);
        let fam = Family::ALL[case % 4];
        let spec = random_spec(&mut r, fam, case % 2 == 0);
        let z = normals(&mut r, n);
        let want = lu_loglik(&dense_cov(&spec, &Taper::None, &locs), &z);
        let got = loglik_value(&spec, &locs, &z).unwrap();
        assert!(rel_close(got, want, 1e-10), "ML {fam} n={n}: {got} vs {want}");

        let t = Taper::wendland(r.random_range(0.05..0.5)).unwrap();
        let pairs = pairs_within(&locs, t.cutoff());
        let want = lu_loglik(&dense_cov(&spec, &t, &locs), &z);
        let got = loglik_taper1_value(&spec, &t, &locs, &pairs, &z).unwrap();
        assert!(rel_close(got, want, 1e-10), "TAP1 {fam} n={n}: {got} vs {want}");
    }
}

#[test]
fn second_taper_matches_explicit_inverse() {
    let mut r = rng(2);
    for case in 0..24 {
        let n = r.random_range(3..=100);
        let locs = random_sites(&mut r, n);
        let spec = random_spec(&mut r, Family::ALL[case % 4], case % 3 == 0);
        let z = normals(&mut r, n);
        let t = Taper::wendland(r.random_range(0.05..0.5)).unwrap();
        let pairs = pairs_within(&locs, t.cutoff());
        let st = dense_cov(&spec, &t, &locs);
        let rmat = DMatrix::from_fn(n, n, |i, j| taper(&t, locs.dist(i, j)));
        let inv = st.clone().try_inverse().unwrap();
        let zv = DVector::from_column_slice(&z);
        let quad = zv.dot(&(inv.component_mul(&rmat) * &zv));
        let want = -0.5 * st.clone().lu().determinant().ln() - 0.5 * quad;
        let got = loglik_taper2_value(&spec, &t, &locs, &pairs, &z).unwrap();
        assert!(rel_close(got, want, 1e-10), "case {case}: {got} vs {want}");
    }
}

/// Pair log-densities written in correlation form.
fn oracle_pl(kind: PlKind, spec: &CovarianceSpec, locs: &LocationSet, cutoff: Cutoff, z: &[f64]) -> f64 {
    let s2 = spec.sigma2 + spec.nugget;
    let mut total = 0.0;
    for i in 0..locs.len() {
        for j in i + 1..locs.len() {
            let h = locs.dist(i, j);
            if !cutoff.admits(h) {
                continue;
            }
            let rho = spec.sigma2 * spec.correlation(h) / s2;
            let (zi, zj) = (z[i], z[j]);
            let lij = -0.5
                * (2.0 * s2.ln()
                    + (1.0 - rho * rho).ln()
                    + (zi * zi + zj * zj - 2.0 * rho * zi * zj) / (s2 * (1.0 - rho * rho)));
            let li = -0.5 * s2.ln() - zi * zi / (2.0 * s2);
            let lj = -0.5 * s2.ln() - zj * zj / (2.0 * s2);
            total += match kind {
                PlKind::Marginal => lij,
                PlKind::Conditional => 2.0 * lij - li - lj,
                PlKind::Difference => {
                    -0.5 * (s2.ln() + (1.0 - rho).ln() + (zi - zj).powi(2) / (2.0 * s2 * (1.0 - rho)))
                }
            };
        }
    }
    total
}

#[test]
fn pairwise_match_double_loop() {
    let mut r = rng(3);
    for case in 0..30 {
        let n = r.random_range(2..=100);
        let locs = random_sites(&mut r, n);
        let spec = random_spec(&mut r, Family::ALL[case % 4], case % 2 == 1);
        let z = normals(&mut r, n);
        for cutoff in [Cutoff::Unbounded, Cutoff::Finite(r.random_range(0.05..0.6))] {
            let pairs = pairs_within(&locs, cutoff);
            for kind in [PlKind::Marginal, PlKind::Conditional, PlKind::Difference] {
                let want = oracle_pl(kind, &spec, &locs, cutoff, &z);
                let got = pl_value(kind, &spec, &pairs, &z).unwrap();
                assert!(
                    (got - want).abs() <= 1e-10 * want.abs().max(1.0),
                    "{kind:?} case {case}: {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn conditional_identity() {
    let mut r = rng(4);
    for case in 0..100 {
        let n = r.random_range(2..=60);
        let locs = random_sites(&mut r, n);
        let spec = random_spec(&mut r, Family::ALL[case % 4], case % 2 == 0);
        let z = normals(&mut r, n);
        let pairs = pairs_within(&locs, Cutoff::Finite(r.random_range(0.05..1.5)));
        let s2 = spec.total_variance();
        let mut mult = vec![0.0; n];
        for p in pairs.pairs() {
            mult[p.i] += 1.0;
            mult[p.j] += 1.0;
        }
        let marg: f64 = (0..n).map(|i| mult[i] * (-0.5 * s2.ln() - z[i] * z[i] / (2.0 * s2))).sum();
        let m = pl_value(PlKind::Marginal, &spec, &pairs, &z).unwrap();
        let c = pl_value(PlKind::Conditional, &spec, &pairs, &z).unwrap();
        let want = 2.0 * m - marg;
        assert!((c - want).abs() <= 1e-12 * want.abs().max(1.0), "case {case}: {c} vs {want}");
    }
}

#[test]
fn conditional_and_marginal_share_the_range_profile() {
    let mut r = rng(5);
    let locs = random_sites(&mut r, 80);
    let z = normals(&mut r, 80);
    let pairs = pairs_within(&locs, Cutoff::Finite(0.3));
    let gap = |phi: f64| {
        let s = CovarianceSpec::new(Family::Exponential, 1.0, phi).unwrap();
        pl_value(PlKind::Conditional, &s, &pairs, &z).unwrap() - 2.0 * pl_value(PlKind::Marginal, &s, &pairs, &z).unwrap()
    };
    let g0 = gap(0.1);
    for phi in [0.05, 0.2, 0.4, 0.9, 2.0] {
        assert!((gap(phi) - g0).abs() < 1e-9 * g0.abs().max(1.0));
    }
}

#[test]
fn thread_count_does_not_change_values() {
    let mut r = rng(6);
    let locs = random_sites(&mut r, 400);
    let z = normals(&mut r, 400);
    let spec = random_spec(&mut r, Family::Cauchy, true);
    let pairs = pairs_within(&locs, Cutoff::Finite(0.4));
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let p = pl(PlKind::Marginal, &spec, &ParamSet::all(), &pairs, &z).unwrap();
                let t = loglik_taper2(&spec, &ParamSet::all(), &Taper::wendland(0.2).unwrap(), &locs, &pairs.restrict(Cutoff::Finite(0.2)).unwrap(), &z).unwrap();
                (p, t)
            })
    };
    assert_eq!(run(1), run(4));
}

fn check_gradient(obj: &Objective<'_>, spec: &CovarianceSpec, params: &ParamSet) -> std::result::Result<(), String> {
    let g = obj.evaluate(spec, params).map_err(|e| e.to_string())?;
    for (k, &p) in params.params().iter().enumerate() {
        let step = 1e-6 * spec.get(p);
        let mut up = *spec;
        up.set(p, spec.get(p) + step);
        let mut dn = *spec;
        dn.set(p, spec.get(p) - step);
        let fd = (obj.value(&up).unwrap() - obj.value(&dn).unwrap()) / (2.0 * step);
        let tol = 1e-5 * g.grad[k].abs().max(fd.abs()).max(1.0);
        if (g.grad[k] - fd).abs() > tol {
            return Err(format!("{} {:?}: analytic {} vs fd {fd}", obj.spec().label(), p, g.grad[k]));
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradients_match_finite_differences(
        seed in 0u64..1_000_000,
        fam in 0usize..4,
        sigma2 in 0.3f64..3.0,
        phi in 0.1f64..0.8,
        nugget in 0.01f64..0.5,
    ) {
        let mut r = rng(seed);
        let locs = random_sites(&mut r, 30);
        let z = normals(&mut r, 30);
        let spec = CovarianceSpec::new(Family::ALL[fam], sigma2, phi).unwrap().with_nugget(nugget).unwrap();
        let params = ParamSet::all();
        for os in [
            ObjectiveSpec::ml(),
            ObjectiveSpec::taper1(0.35).unwrap(),
            ObjectiveSpec::taper2(0.35).unwrap(),
            ObjectiveSpec::pl(PlKind::Marginal, Cutoff::Finite(0.3)).unwrap(),
            ObjectiveSpec::pl(PlKind::Conditional, Cutoff::Finite(0.3)).unwrap(),
            ObjectiveSpec::pl(PlKind::Difference, Cutoff::Finite(0.3)).unwrap(),
        ] {
            let obj = Objective::new(os, &locs, &z).unwrap();
            prop_assert!(check_gradient(&obj, &spec, &params).is_ok(), "{:?}", check_gradient(&obj, &spec, &params));
        }
    }
}
