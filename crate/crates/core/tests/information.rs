mod common;

use common::*;
use nalgebra::{DMatrix, Matrix2, Vector2};
use pairlik::covariance::{cov, taper, CovarianceSpec, Family, Param, ParamSet, Taper};
use pairlik::geometry::{pairs_within, Cutoff, LocationSet, PairSet};
use pairlik::inference::{are, are_sweep, fisher_info, godambe_cl, godambe_taper, AreMethod};
use pairlik::objective::PlKind;

fn spd_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().unwrap()
}

fn perturbed(spec: &CovarianceSpec, p: Param, rel: f64) -> CovarianceSpec {
    let mut s = *spec;
    s.set(p, spec.get(p) * (1.0 + rel));
    s
}

/// Central difference of a matrix-valued map in the parameter `p`.
fn d_matrix<F: Fn(&CovarianceSpec) -> DMatrix<f64>>(f: &F, spec: &CovarianceSpec, p: Param) -> DMatrix<f64> {
    let eps = 1e-6;
    let step = eps * spec.get(p);
    (f(&perturbed(spec, p, eps)) - f(&perturbed(spec, p, -eps))) / (2.0 * step)
}

/// Central second difference of a scalar map.
fn d2_scalar<F: Fn(&CovarianceSpec) -> f64>(f: &F, spec: &CovarianceSpec, p: Param, q: Param) -> f64 {
    let eps = 1e-4;
    let (hp, hq) = (eps * spec.get(p), eps * spec.get(q));
    let at = |a: f64, b: f64| f(&perturbed(&perturbed(spec, p, a), q, b));
    (at(eps, eps) - at(eps, -eps) - at(-eps, eps) + at(-eps, -eps)) / (4.0 * hp * hq)
}

fn sigma(spec: &CovarianceSpec, locs: &LocationSet, t: &Taper) -> DMatrix<f64> {
    let n = locs.len();
    DMatrix::from_fn(n, n, |i, j| {
        let h = locs.dist(i, j);
        cov(spec, h).unwrap() * taper(t, h)
    })
}

fn close_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    (a - b).amax() <= tol * b.amax().max(1e-300)
}

#[test]
fn fisher_matches_numerical_derivatives() {
    let mut r = rng(11);
    for case in 0..8 {
        let locs = random_sites(&mut r, 40);
        let spec = random_spec(&mut r, Family::ALL[case % 4], true);
        let params = ParamSet::all();
        let f = |s: &CovarianceSpec| sigma(s, &locs, &Taper::None);
        let q = spd_inverse(&f(&spec));
        let y: Vec<DMatrix<f64>> = params.params().iter().map(|&p| &q * d_matrix(&f, &spec, p)).collect();
        let want = DMatrix::from_fn(3, 3, |k, l| 0.5 * (&y[k] * &y[l]).trace());
        let got = fisher_info(&spec, &params, &locs).unwrap();
        assert!(close_matrix(&got, &want, 1e-6), "case {case}\n{got}\n{want}");
    }
}

/// Pair precision `P` and normalizer `c` with `l(z) = -1/2 z^T P z + c` per kind.
fn pair_form(kind: PlKind, spec: &CovarianceSpec, h: f64) -> (Matrix2<f64>, f64) {
    let s = spec.sigma2 + spec.nugget;
    let c = spec.sigma2 * spec.correlation(h);
    let k = Matrix2::new(s, c, c, s);
    let kinv = k.try_inverse().unwrap();
    match kind {
        PlKind::Marginal => (kinv, -0.5 * k.determinant().ln()),
        PlKind::Conditional => (
            2.0 * kinv - Matrix2::identity() / s,
            -k.determinant().ln() + s.ln(),
        ),
        PlKind::Difference => {
            let v = 2.0 * (s - c);
            let e = Vector2::new(1.0, -1.0);
            (e * e.transpose() / v, -0.5 * v.ln())
        }
    }
}

/// Sensitivity by differentiating the expected objective twice; variability
/// by summing score covariances over every couple of pairs.
fn cl_oracle(kind: PlKind, spec: &CovarianceSpec, params: &ParamSet, locs: &LocationSet, pairs: &PairSet) -> (DMatrix<f64>, DMatrix<f64>) {
    let sig = sigma(spec, locs, &Taper::None);
    let sub = |a: (usize, usize), b: (usize, usize)| {
        Matrix2::new(sig[(a.0, b.0)], sig[(a.0, b.1)], sig[(a.1, b.0)], sig[(a.1, b.1)])
    };
    let expected = |s: &CovarianceSpec| -> f64 {
        pairs
            .pairs()
            .iter()
            .map(|pr| {
                let (p, c) = pair_form(kind, s, pr.h);
                -0.5 * (p * sub((pr.i, pr.j), (pr.i, pr.j))).trace() + c
            })
            .sum()
    };
    let ps = params.params();
    let np = ps.len();
    let h = DMatrix::from_fn(np, np, |k, l| -d2_scalar(&expected, spec, ps[k], ps[l]));
    // A_k = -dP/dtheta_k for each pair
    let a: Vec<Vec<Matrix2<f64>>> = pairs
        .pairs()
        .iter()
        .map(|pr| {
            ps.iter()
                .map(|&p| {
                    let eps = 1e-6;
                    let step = eps * spec.get(p);
                    -(pair_form(kind, &perturbed(spec, p, eps), pr.h).0 - pair_form(kind, &perturbed(spec, p, -eps), pr.h).0)
                        / (2.0 * step)
                })
                .collect()
        })
        .collect();
    let mut j = DMatrix::zeros(np, np);
    let list = pairs.pairs();
    for (x, px) in list.iter().enumerate() {
        for (y, py) in list.iter().enumerate() {
            let sab = sub((px.i, px.j), (py.i, py.j));
            let sba = sab.transpose();
            for k in 0..np {
                for l in 0..np {
                    j[(k, l)] += 0.5 * (a[x][k] * sab * a[y][l] * sba).trace();
                }
            }
        }
    }
    (h, j)
}

#[test]
fn pairwise_godambe_matches_pair_couple_oracle() {
    let mut r = rng(12);
    for case in 0..6 {
        let locs = random_sites(&mut r, 24);
        let spec = random_spec(&mut r, Family::ALL[case % 4], true);
        let pairs = pairs_within(&locs, Cutoff::Finite(0.35));
        let params = ParamSet::all();
        for kind in [PlKind::Marginal, PlKind::Conditional, PlKind::Difference] {
            let params = if kind == PlKind::Difference {
                // the difference likelihood does not identify the total variance split
                ParamSet::variance_and_range()
            } else {
                params.clone()
            };
            let g = godambe_cl(kind, &spec, &params, &locs, &pairs).unwrap();
            let (h, j) = cl_oracle(kind, &spec, &params, &locs, &pairs);
            assert!(close_matrix(&g.h, &h, 1e-5), "{kind:?} H case {case}\n{}\n{h}", g.h);
            assert!(close_matrix(&g.j, &j, 1e-6), "{kind:?} J case {case}\n{}\n{j}", g.j);
        }
    }
}

#[test]
fn taper_godambe_matches_numerical_oracle() {
    let mut r = rng(13);
    for case in 0..4 {
        let locs = random_sites(&mut r, 30);
        let spec = random_spec(&mut r, Family::ALL[case % 4], case % 2 == 0);
        let params = if spec.nugget > 0.0 { ParamSet::all() } else { ParamSet::variance_and_range() };
        let t = Taper::wendland(0.4).unwrap();
        let rm = DMatrix::from_fn(30, 30, |i, j| taper(&t, locs.dist(i, j)));
        let sig0 = sigma(&spec, &locs, &Taper::None);
        let w = |s: &CovarianceSpec| spd_inverse(&sigma(s, &locs, &t)).component_mul(&rm);
        let expected = |s: &CovarianceSpec| {
            let st = sigma(s, &locs, &t);
            -0.5 * st.clone().cholesky().unwrap().determinant().ln() - 0.5 * (w(s) * &sig0).trace()
        };
        let ps = params.params();
        let np = ps.len();
        let h = DMatrix::from_fn(np, np, |k, l| -d2_scalar(&expected, &spec, ps[k], ps[l]));
        let a: Vec<DMatrix<f64>> = ps.iter().map(|&p| -d_matrix(&w, &spec, p)).collect();
        let j = DMatrix::from_fn(np, np, |k, l| 0.5 * (&a[k] * &sig0 * &a[l] * &sig0).trace());
        let g = godambe_taper(&spec, &params, &t, &locs, &pairs_within(&locs, t.cutoff())).unwrap();
        assert!(close_matrix(&g.h, &h, 1e-5), "H case {case}\n{}\n{h}", g.h);
        assert!(close_matrix(&g.j, &j, 1e-6), "J case {case}\n{}\n{j}", g.j);
    }
}

#[test]
fn godambe_is_dominated_by_fisher() {
    let mut r = rng(14);
    for case in 0..8 {
        let locs = random_sites(&mut r, 50);
        let spec = random_spec(&mut r, Family::ALL[case % 4], true);
        let params = ParamSet::all();
        let fisher = fisher_info(&spec, &params, &locs).unwrap();
        let finv = spd_inverse(&fisher);
        let pairs = pairs_within(&locs, Cutoff::Finite(0.3));
        let mut gs = vec![godambe_taper(&spec, &params, &Taper::wendland(0.3).unwrap(), &locs, &pairs).unwrap().g];
        for kind in [PlKind::Marginal, PlKind::Conditional] {
            gs.push(godambe_cl(kind, &spec, &params, &locs, &pairs).unwrap().g);
        }
        for g in gs {
            let gap = spd_inverse(&g) - &finv;
            let eig = gap.symmetric_eigenvalues();
            assert!(eig.min() >= -1e-8 * eig.amax(), "case {case}: {eig}");
            let e = are(&g, &fisher).unwrap();
            assert!(e > 0.0 && e <= 1.0 + 1e-10, "case {case}: are {e}");
        }
    }
}

#[test]
fn two_sites_pairwise_is_exact() {
    let locs = LocationSet::planar(vec![[0.0, 0.0], [0.2, 0.1]]).unwrap();
    // two sites carry only two moments
    let spec = CovarianceSpec::new(Family::Cauchy, 1.3, 0.5).unwrap();
    let params = ParamSet::variance_and_range();
    let pairs = pairs_within(&locs, Cutoff::Unbounded);
    let g = godambe_cl(PlKind::Marginal, &spec, &params, &locs, &pairs).unwrap();
    let i = fisher_info(&spec, &params, &locs).unwrap();
    assert!(close_matrix(&g.g, &i, 1e-10));
}

#[test]
fn wide_taper_recovers_fisher() {
    let mut r = rng(15);
    let locs = random_sites(&mut r, 40);
    let spec = random_spec(&mut r, Family::Exponential, true);
    let params = ParamSet::all();
    let t = Taper::wendland(1e4).unwrap();
    let g = godambe_taper(&spec, &params, &t, &locs, &pairs_within(&locs, t.cutoff())).unwrap();
    let i = fisher_info(&spec, &params, &locs).unwrap();
    assert!((are(&g.g, &i).unwrap() - 1.0).abs() < 1e-5);
}

#[test]
fn relabelling_sites_leaves_information_unchanged() {
    let mut r = rng(16);
    let locs = random_sites(&mut r, 40);
    let perm: Vec<usize> = (0..40).rev().collect();
    let shuffled = locs.subset(&perm).unwrap();
    let spec = random_spec(&mut r, Family::Wave, true);
    let params = ParamSet::all();
    let c = Cutoff::Finite(0.3);
    let a = godambe_cl(PlKind::Conditional, &spec, &params, &locs, &pairs_within(&locs, c)).unwrap();
    let b = godambe_cl(PlKind::Conditional, &spec, &params, &shuffled, &pairs_within(&shuffled, c)).unwrap();
    assert!(close_matrix(&a.g, &b.g, 1e-10));
    let t = Taper::wendland(0.3).unwrap();
    let a = godambe_taper(&spec, &params, &t, &locs, &pairs_within(&locs, t.cutoff())).unwrap();
    let b = godambe_taper(&spec, &params, &t, &shuffled, &pairs_within(&shuffled, t.cutoff())).unwrap();
    assert!(close_matrix(&a.g, &b.g, 1e-9));
}

#[test]
fn marginal_and_conditional_agree_on_the_range_alone() {
    let mut r = rng(17);
    let locs = random_sites(&mut r, 50);
    let spec = random_spec(&mut r, Family::Exponential, true);
    let params = ParamSet::only(Param::Phi);
    let pairs = pairs_within(&locs, Cutoff::Finite(0.25));
    let m = godambe_cl(PlKind::Marginal, &spec, &params, &locs, &pairs).unwrap();
    let c = godambe_cl(PlKind::Conditional, &spec, &params, &locs, &pairs).unwrap();
    assert!(rel_close(m.g[(0, 0)], c.g[(0, 0)], 1e-10));
}

#[test]
fn sweep_reports_each_method_and_fraction() {
    let mut r = rng(18);
    let locs = random_sites(&mut r, 60);
    let spec = random_spec(&mut r, Family::Exponential, false);
    let params = ParamSet::variance_and_range();
    let fr = [0.05, 0.1, 0.2];
    let out = are_sweep(&spec, &params, &locs, &AreMethod::ALL, &fr).unwrap();
    assert_eq!(out.len(), 12);
    for rep in &out {
        let e = *rep.are.as_ref().unwrap();
        assert!(e > 0.0 && e <= 1.0 + 1e-10);
        assert!(rep.nonzero_fraction >= rep.target - 1e-12);
        assert!(rep.nonzero_fraction <= rep.target + 2.0 / 3600.0 + 1e-12);
    }
}
