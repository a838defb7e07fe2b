//! Fisher and Godambe information for the exact, tapered and pairwise objectives.
//!
//! Every score is a centred Gaussian quadratic form `1/2 z^T M z + const`,
//! so variances follow from `cov(z^T A z, z^T B z) = 2 tr(A Sigma B Sigma)`.
//! The pairwise sensitivities are sums of per-pair Fisher terms.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{sigma_derivatives, sigma_matrix, taper_matrix, CovarianceSpec, ParamSet, Taper};
use crate::error::{Error, Result};
use crate::geometry::{LocationSet, PairSet};
use crate::linalg::{CsrMatrix, DenseCholesky};
use crate::objective::{PairMoments, PlKind};

/// Largest site count for which information matrices are computed with dense algebra.
pub const DENSE_INFO_LIMIT: usize = 2000;

/// Sensitivity `H`, variability `J` and Godambe information `G = H J^{-1} H`.
#[derive(Debug, Clone, PartialEq)]
pub struct Godambe {
    pub h: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

impl Godambe {
    pub fn from_parts(h: DMatrix<f64>, j: DMatrix<f64>) -> Result<Self> {
        let jinv = symmetric_inverse(&j)?;
        let g = symmetrize(&(&h * jinv * h.transpose()));
        Ok(Self { h, j, g })
    }
}

/// Information matrix attached to a fit, in the natural parametrization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Information {
    Fisher { fisher: Vec<Vec<f64>> },
    Godambe { h: Vec<Vec<f64>>, j: Vec<Vec<f64>>, g: Vec<Vec<f64>> },
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl Information {
    pub fn fisher(i: &DMatrix<f64>) -> Self {
        Information::Fisher { fisher: rows(i) }
    }

    pub fn godambe(g: &Godambe) -> Self {
        Information::Godambe {
            h: rows(&g.h),
            j: rows(&g.j),
            g: rows(&g.g),
        }
    }

    /// The matrix whose inverse is the asymptotic covariance.
    pub fn matrix(&self) -> DMatrix<f64> {
        let r = match self {
            Information::Fisher { fisher } => fisher,
            Information::Godambe { g, .. } => g,
        };
        let p = r.len();
        DMatrix::from_fn(p, p, |i, j| r[i][j])
    }

    /// `sqrt(diag(G^{-1}))`.
    pub fn std_errors(&self) -> Result<Vec<f64>> {
        let inv = symmetric_inverse(&self.matrix())?;
        Ok((0..inv.nrows()).map(|i| inv[(i, i)].max(0.0).sqrt()).collect())
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Inverse of a symmetric positive-definite matrix.
pub fn symmetric_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularInformation);
    }
    match DenseCholesky::factor(m) {
        Ok(f) => Ok(symmetrize(&f.inverse())),
        Err(_) => Err(Error::SingularInformation),
    }
}

fn check_dense_size(n: usize) -> Result<()> {
    if n > DENSE_INFO_LIMIT {
        return Err(Error::Precondition(format!(
            "information matrices use dense algebra and are limited to {DENSE_INFO_LIMIT} sites (got {n})"
        )));
    }
    Ok(())
}

/// `1/2 tr(A_k A_l^T)`-style contraction `1/2 sum_ab X[a,b] Y[b,a]`.
fn half_trace_product(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    0.5 * x.iter().zip(y.transpose().iter()).map(|(a, b)| a * b).sum::<f64>()
}

fn gram<F: Fn(usize, usize) -> f64 + Sync>(p: usize, f: F) -> DMatrix<f64> {
    let entries: Vec<(usize, usize, f64)> = (0..p)
        .flat_map(|k| (k..p).map(move |l| (k, l)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(k, l)| (k, l, f(k, l)))
        .collect();
    let mut m = DMatrix::zeros(p, p);
    for (k, l, v) in entries {
        m[(k, l)] = v;
        m[(l, k)] = v;
    }
    m
}

/// Fisher information `1/2 tr(Sigma^{-1} S_k Sigma^{-1} S_l)`.
pub fn fisher_info(spec: &CovarianceSpec, params: &ParamSet, locs: &LocationSet) -> Result<DMatrix<f64>> {
    spec.validate()?;
    check_dense_size(locs.len())?;
    let q = DenseCholesky::factor(&sigma_matrix(spec, locs))?.inverse();
    let y: Vec<DMatrix<f64>> = sigma_derivatives(spec, params, locs)
        .into_iter()
        .map(|s| &q * s)
        .collect();
    Ok(gram(params.len(), |k, l| half_trace_product(&y[k], &y[l])))
}

/// Godambe information of the second tapered likelihood (dense algebra).
///
/// `H_kl = 1/2 tr(B_k (S_l o R))`, `J_kl = 1/2 tr((B_k o R) Sigma (B_l o R) Sigma)`,
/// `B_k = Sigma_T^{-1} (S_k o R) Sigma_T^{-1}`.
pub fn godambe_taper(
    spec: &CovarianceSpec,
    params: &ParamSet,
    taper: &Taper,
    locs: &LocationSet,
    pairs: &PairSet,
) -> Result<Godambe> {
    spec.validate()?;
    check_dense_size(locs.len())?;
    if pairs.cutoff() != taper.cutoff() || pairs.n_sites() != locs.len() {
        return Err(Error::Contract("pair set does not match the taper".into()));
    }
    let sigma = sigma_matrix(spec, locs);
    let r = taper_matrix(taper, locs);
    let sigma_t = sigma.component_mul(&r);
    let zt = DenseCholesky::factor(&sigma_t)?.inverse();
    let tk: Vec<DMatrix<f64>> = sigma_derivatives(spec, params, locs)
        .into_iter()
        .map(|s| s.component_mul(&r))
        .collect();
    let bk: Vec<DMatrix<f64>> = tk.iter().map(|t| symmetrize(&(&zt * t * &zt))).collect();
    let yk: Vec<DMatrix<f64>> = bk.iter().map(|b| b.component_mul(&r) * &sigma).collect();
    let p = params.len();
    let h = gram(p, |k, l| 0.5 * bk[k].iter().zip(tk[l].iter()).map(|(a, b)| a * b).sum::<f64>());
    let j = gram(p, |k, l| half_trace_product(&yk[k], &yk[l]));
    Godambe::from_parts(h, j)
}

/// Per-pair score matrices and sensitivities.
struct PairScore {
    /// `[[a, b], [b, d]]` per parameter on `(z_i, z_j)`; the score is `1/2 z_p^T A z_p + const`.
    a: Vec<[f64; 3]>,
    h: DMatrix<f64>,
}

fn marginal_score(m: &PairMoments, params: &ParamSet) -> Result<PairScore> {
    let det = m.s * m.s - m.c * m.c;
    if !(det > 0.0) {
        return Err(Error::Definiteness);
    }
    let (s, c) = (m.s / det, -m.c / det); // K^{-1} = [[s, c], [c, s]]
    let ds = params.select(&m.ds);
    let dc = params.select(&m.dc);
    // A_k = K^{-1} K_k K^{-1} for symmetric-circulant 2x2 matrices
    let a: Vec<[f64; 3]> = ds
        .iter()
        .zip(&dc)
        .map(|(&u, &v)| {
            // K^{-1} K_k = [[s u + c v, s v + c u], [c u + s v, c v + s u]]
            let (p0, p1) = (s * u + c * v, s * v + c * u);
            let diag = p0 * s + p1 * c;
            let off = p0 * c + p1 * s;
            [diag, off, diag]
        })
        .collect();
    let k = params.len();
    // 1/2 tr(K^{-1} K_k K^{-1} K_l) = 1/2 tr(A_k K_l)
    let h = DMatrix::from_fn(k, k, |x, y| 0.5 * (2.0 * a[x][0] * ds[y] + 2.0 * a[x][1] * dc[y]));
    Ok(PairScore { a, h })
}

fn difference_score(m: &PairMoments, params: &ParamSet) -> Result<PairScore> {
    let v = 2.0 * (m.s - m.c);
    if !(v > 0.0) {
        return Err(Error::Definiteness);
    }
    let dv: Vec<f64> = params
        .select(&m.ds)
        .iter()
        .zip(params.select(&m.dc))
        .map(|(s, c)| 2.0 * (s - c))
        .collect();
    // score: 1/2 (v_k / v^2) U^2, U = z_i - z_j
    let a = dv.iter().map(|&d| {
        let w = d / (v * v);
        [w, -w, w]
    });
    let k = params.len();
    let h = DMatrix::from_fn(k, k, |x, y| 0.5 * dv[x] * dv[y] / (v * v));
    Ok(PairScore { a: a.collect(), h })
}

/// Score matrix and sensitivity of one site's marginal, `-1/2 log s - z^2/(2s)`.
fn site_score(m: &PairMoments, params: &ParamSet) -> (Vec<f64>, DMatrix<f64>) {
    let ds = params.select(&m.ds);
    let k = params.len();
    let a = ds.iter().map(|d| d / (m.s * m.s)).collect();
    let h = DMatrix::from_fn(k, k, |x, y| 0.5 * ds[x] * ds[y] / (m.s * m.s));
    (a, h)
}

fn pair_score(kind: PlKind, m: &PairMoments, params: &ParamSet) -> Result<PairScore> {
    match kind {
        PlKind::Marginal => marginal_score(m, params),
        PlKind::Difference => difference_score(m, params),
        PlKind::Conditional => {
            let mut ps = marginal_score(m, params)?;
            let (sa, sh) = site_score(m, params);
            for (a, s) in ps.a.iter_mut().zip(&sa) {
                *a = [2.0 * a[0] - s, 2.0 * a[1], 2.0 * a[2] - s];
            }
            ps.h = ps.h * 2.0 - sh * 2.0;
            Ok(ps)
        }
    }
}

/// Score matrices `M_k` (sparse, on the pair pattern) and the summed sensitivity.
pub(crate) fn pairwise_score_matrices(
    kind: PlKind,
    spec: &CovarianceSpec,
    params: &ParamSet,
    pairs: &PairSet,
) -> Result<(Vec<CsrMatrix>, DMatrix<f64>)> {
    let n = pairs.n_sites();
    let p = params.len();
    let mut diag = vec![vec![0.0; n]; p];
    let mut upper: Vec<Vec<(usize, usize, f64)>> = vec![Vec::with_capacity(pairs.len()); p];
    let mut h = DMatrix::zeros(p, p);
    for pr in pairs.pairs() {
        let m = PairMoments::new(spec, pr.h);
        let ps = pair_score(kind, &m, params).map_err(|_| Error::DegenerateCorrelation {
            i: pr.i,
            j: pr.j,
            rho: m.c / m.s,
        })?;
        for k in 0..p {
            diag[k][pr.i] += ps.a[k][0];
            diag[k][pr.j] += ps.a[k][2];
            upper[k].push((pr.i, pr.j, ps.a[k][1]));
        }
        h += ps.h;
    }
    let mats = diag
        .iter()
        .zip(&upper)
        .map(|(d, u)| CsrMatrix::symmetric(d, u))
        .collect::<Result<Vec<_>>>()?;
    Ok((mats, h))
}

/// `M Sigma` for sparse `M` and dense `Sigma`.
fn sparse_times_dense(m: &CsrMatrix, sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    // compute (M Sigma)^T = Sigma M columnwise: column r of the transpose is row r of M Sigma
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let (idx, vals) = m.row(r);
            let mut out = vec![0.0; n];
            for (&c, &v) in idx.iter().zip(vals) {
                // row c of Sigma equals column c by symmetry
                for (o, s) in out.iter_mut().zip(sigma.column(c).iter()) {
                    *o += v * s;
                }
            }
            out
        })
        .collect();
    // cols[r] is row r of M Sigma
    DMatrix::from_fn(n, n, |i, j| cols[i][j])
}

/// Godambe information of a weighted pairwise likelihood.
///
/// `J_kl = 1/2 tr(M_k Sigma M_l Sigma)` with `M_k` the sum of the embedded
/// pair score matrices, which is exactly the double sum over pair couples of
/// the score covariances.
pub fn godambe_cl(
    kind: PlKind,
    spec: &CovarianceSpec,
    params: &ParamSet,
    locs: &LocationSet,
    pairs: &PairSet,
) -> Result<Godambe> {
    spec.validate()?;
    check_dense_size(locs.len())?;
    if pairs.n_sites() != locs.len() {
        return Err(Error::Contract("pair set does not match the locations".into()));
    }
    let (mats, h) = pairwise_score_matrices(kind, spec, params, pairs)?;
    let sigma = sigma_matrix(spec, locs);
    let y: Vec<DMatrix<f64>> = mats.iter().map(|m| sparse_times_dense(m, &sigma)).collect();
    let j = gram(params.len(), |k, l| half_trace_product(&y[k], &y[l]));
    Godambe::from_parts(symmetrize(&h), j)
}
