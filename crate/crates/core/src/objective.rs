//! Exact, tapered and pairwise composite log-likelihoods with analytic gradients.
//!
//! Additive constants in `log 2pi` are dropped everywhere. Pairwise objects
//! use the bivariate marginal of the full model: total variance
//! `s = sigma2 + nugget` and pair covariance `c = sigma2 * rho(h)`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{
    assemble_tapered_sigma, sigma_matrix, CovarianceSpec, ParamSet, Taper,
};
use crate::error::{Error, Result};
use crate::geometry::{pairs_within, Cutoff, LocationSet, Pair, PairSet};
use crate::linalg::{DenseCholesky, Matrix, SparseCholesky};

/// Pairs per work unit; partial sums are combined in chunk order.
const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlKind {
    Marginal,
    Conditional,
    Difference,
}

impl PlKind {
    pub fn letter(&self) -> &'static str {
        match self {
            PlKind::Marginal => "M",
            PlKind::Conditional => "C",
            PlKind::Difference => "D",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectiveKind {
    Ml,
    Taper1,
    Taper2,
    Pl(PlKind),
}

/// Which objective to evaluate, with its taper or pair cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    pub taper: Taper,
    pub cutoff: Cutoff,
}

impl ObjectiveSpec {
    pub fn ml() -> Self {
        Self {
            kind: ObjectiveKind::Ml,
            taper: Taper::None,
            cutoff: Cutoff::Unbounded,
        }
    }

    /// Tapered likelihoods; `Taper::None` is accepted as the untapered override.
    pub fn tapered(kind: ObjectiveKind, taper: Taper) -> Result<Self> {
        if !matches!(kind, ObjectiveKind::Taper1 | ObjectiveKind::Taper2) {
            return Err(Error::Contract(format!("{kind:?} is not a tapered likelihood")));
        }
        Ok(Self {
            kind,
            taper,
            cutoff: taper.cutoff(),
        })
    }

    pub fn taper1(range: f64) -> Result<Self> {
        Self::tapered(ObjectiveKind::Taper1, Taper::wendland(range)?)
    }

    pub fn taper2(range: f64) -> Result<Self> {
        Self::tapered(ObjectiveKind::Taper2, Taper::wendland(range)?)
    }

    pub fn pl(kind: PlKind, cutoff: Cutoff) -> Result<Self> {
        if let Cutoff::Finite(d) = cutoff {
            if !(d > 0.0) {
                return Err(Error::Parameter(format!("cutoff {d} must be positive")));
            }
        }
        Ok(Self {
            kind: ObjectiveKind::Pl(kind),
            taper: Taper::None,
            cutoff,
        })
    }

    /// Pair cutoff needed to evaluate this objective (`None` for ML).
    pub fn pair_cutoff(&self) -> Option<Cutoff> {
        match self.kind {
            ObjectiveKind::Ml => None,
            _ => Some(self.cutoff),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ObjectiveKind::Ml => Ok(()),
            ObjectiveKind::Taper1 | ObjectiveKind::Taper2 => {
                if self.cutoff != self.taper.cutoff() {
                    return Err(Error::Contract("taper objective cutoff must equal the taper range".into()));
                }
                Ok(())
            }
            ObjectiveKind::Pl(_) => {
                if self.taper != Taper::None {
                    return Err(Error::Contract("pairwise likelihoods take a cutoff, not a taper".into()));
                }
                Ok(())
            }
        }
    }

    /// Display label: `ML`, `TAP1(d)`, `TAP(d)`, `PL_M(d)`, ...; `(d)` is
    /// dropped when the cutoff is unbounded.
    pub fn label(&self) -> String {
        let base = match self.kind {
            ObjectiveKind::Ml => return "ML".into(),
            ObjectiveKind::Taper1 => "TAP1".to_string(),
            ObjectiveKind::Taper2 => "TAP".to_string(),
            ObjectiveKind::Pl(k) => format!("PL_{}", k.letter()),
        };
        match self.cutoff {
            Cutoff::Finite(d) => format!("{base}({d})"),
            Cutoff::Unbounded => base,
        }
    }
}

impl fmt::Display for ObjectiveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Objective value and its gradient over the free parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn check_data(locs: &LocationSet, z: &[f64]) -> Result<()> {
    if z.len() != locs.len() {
        return Err(Error::Dimension {
            expected: locs.len(),
            got: z.len(),
        });
    }
    if locs.is_empty() {
        return Err(Error::Precondition("no observations".into()));
    }
    Ok(())
}

fn check_pairs(pairs: &PairSet, z: &[f64]) -> Result<()> {
    if pairs.n_sites() != z.len() {
        return Err(Error::Dimension {
            expected: pairs.n_sites(),
            got: z.len(),
        });
    }
    Ok(())
}

#[inline]
fn add3(a: &mut [f64; 3], w: f64, b: &[f64; 3]) {
    a[0] += w * b[0];
    a[1] += w * b[1];
    a[2] += w * b[2];
}

/// Deterministic chunked sum of `(value, gradient)` over pairs.
fn pair_sum<F>(pairs: &[Pair], f: F) -> Result<(f64, [f64; 3])>
where
    F: Fn(&Pair, &mut f64, &mut [f64; 3]) -> Result<()> + Sync,
{
    let partial: Vec<Result<(f64, [f64; 3])>> = pairs
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut v = 0.0;
            let mut g = [0.0; 3];
            for p in chunk {
                f(p, &mut v, &mut g)?;
            }
            Ok((v, g))
        })
        .collect();
    let mut v = 0.0;
    let mut g = [0.0; 3];
    for r in partial {
        let (pv, pg) = r?;
        v += pv;
        add3(&mut g, 1.0, &pg);
    }
    Ok((v, g))
}

// ---------------------------------------------------------------- exact

/// `-1/2 log|Sigma| - 1/2 z^T Sigma^{-1} z`.
pub fn loglik_value(spec: &CovarianceSpec, locs: &LocationSet, z: &[f64]) -> Result<f64> {
    check_data(locs, z)?;
    spec.validate()?;
    let f = DenseCholesky::factor(&sigma_matrix(spec, locs))?;
    Ok(-0.5 * f.log_det() - 0.5 * f.quad_form(z)?)
}

/// Exact log-likelihood and gradient
/// `-1/2 tr(Sigma^{-1} S_k) + 1/2 alpha^T S_k alpha`, `alpha = Sigma^{-1} z`.
pub fn loglik(spec: &CovarianceSpec, params: &ParamSet, locs: &LocationSet, z: &[f64]) -> Result<ObjectiveValue> {
    check_data(locs, z)?;
    spec.validate()?;
    let f = DenseCholesky::factor(&sigma_matrix(spec, locs))?;
    let alpha = f.solve(z)?;
    let value = -0.5 * f.log_det() - 0.5 * z.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>();
    let q = f.inverse();
    let n = locs.len();
    let g0 = spec.cov_grad_at(0.0);
    let cols: Vec<[f64; 3]> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut g = [0.0; 3];
            add3(&mut g, 0.5 * (alpha[j] * alpha[j] - q[(j, j)]), &g0);
            for i in j + 1..n {
                let w = alpha[i] * alpha[j] - q[(i, j)];
                add3(&mut g, w, &spec.cov_grad_at(locs.dist(i, j)));
            }
            g
        })
        .collect();
    let mut g = [0.0; 3];
    for c in &cols {
        add3(&mut g, 1.0, c);
    }
    Ok(ObjectiveValue {
        value,
        grad: params.select(&g),
    })
}

// --------------------------------------------------------------- tapered

/// Tapered covariance factor plus per-pair taper weights.
struct TaperedSystem {
    factor: SparseCholesky,
    /// `(i, j, r(h), h)` for pairs with positive taper.
    support: Vec<(usize, usize, f64, f64)>,
}

impl TaperedSystem {
    fn new(spec: &CovarianceSpec, taper: &Taper, locs: &LocationSet, pairs: &PairSet) -> Result<Self> {
        let sigma = assemble_tapered_sigma(spec, taper, locs, pairs)?;
        let factor = match sigma.into_storage() {
            Matrix::Sparse(m) => SparseCholesky::factor(&m)?,
            Matrix::Dense(_) => unreachable!("tapered assembly is sparse"),
        };
        let support = pairs
            .pairs()
            .iter()
            .filter_map(|p| {
                let r = taper.eval(p.h);
                (r > 0.0).then_some((p.i, p.j, r, p.h))
            })
            .collect();
        Ok(Self { factor, support })
    }
}

fn check_tapered(locs: &LocationSet, pairs: &PairSet, z: &[f64]) -> Result<()> {
    check_data(locs, z)?;
    check_pairs(pairs, z)
}

/// `-1/2 log|Sigma_T| - 1/2 z^T Sigma_T^{-1} z` by sparse factorization.
pub fn loglik_taper1_value(
    spec: &CovarianceSpec,
    taper: &Taper,
    locs: &LocationSet,
    pairs: &PairSet,
    z: &[f64],
) -> Result<f64> {
    check_tapered(locs, pairs, z)?;
    let sys = TaperedSystem::new(spec, taper, locs, pairs)?;
    Ok(-0.5 * sys.factor.log_det() - 0.5 * sys.factor.quad_form(z)?)
}

pub fn loglik_taper1(
    spec: &CovarianceSpec,
    params: &ParamSet,
    taper: &Taper,
    locs: &LocationSet,
    pairs: &PairSet,
    z: &[f64],
) -> Result<ObjectiveValue> {
    check_tapered(locs, pairs, z)?;
    let sys = TaperedSystem::new(spec, taper, locs, pairs)?;
    let alpha = sys.factor.solve(z)?;
    let value = -0.5 * sys.factor.log_det() - 0.5 * z.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>();
    let zinv = sys.factor.selected_inverse();
    let g0 = spec.cov_grad_at(0.0);
    let mut g = [0.0; 3];
    for a in 0..z.len() {
        let zaa = zinv.get(a, a).expect("diagonal is in the factor pattern");
        add3(&mut g, 0.5 * (alpha[a] * alpha[a] - zaa), &g0);
    }
    for &(i, j, r, h) in &sys.support {
        let zij = zinv.get(i, j).expect("support is in the factor pattern");
        add3(&mut g, r * (alpha[i] * alpha[j] - zij), &spec.cov_grad_at(h));
    }
    Ok(ObjectiveValue {
        value,
        grad: params.select(&g),
    })
}

/// `-1/2 log|Sigma_T| - 1/2 z^T (Sigma_T^{-1} o R) z`; the quadratic term only
/// touches inverse entries on the taper support.
pub fn loglik_taper2_value(
    spec: &CovarianceSpec,
    taper: &Taper,
    locs: &LocationSet,
    pairs: &PairSet,
    z: &[f64],
) -> Result<f64> {
    check_tapered(locs, pairs, z)?;
    let sys = TaperedSystem::new(spec, taper, locs, pairs)?;
    let zinv = sys.factor.selected_inverse();
    Ok(-0.5 * sys.factor.log_det() - 0.5 * masked_quadratic(&sys, &zinv, z))
}

fn masked_quadratic(sys: &TaperedSystem, zinv: &crate::linalg::SelectedInverse<'_>, z: &[f64]) -> f64 {
    let mut quad = 0.0;
    for (a, &za) in z.iter().enumerate() {
        quad += zinv.get(a, a).expect("diagonal is in the factor pattern") * za * za;
    }
    for &(i, j, r, _) in &sys.support {
        quad += 2.0 * zinv.get(i, j).expect("support is in the factor pattern") * r * z[i] * z[j];
    }
    quad
}

/// Second tapered likelihood and its gradient
/// `1/2 sum_supp [S_k o R]_ab (V_ab - [Sigma_T^{-1}]_ab)` with
/// `V = Sigma_T^{-1} (R o z z^T) Sigma_T^{-1}`, assembled one column at a
/// time from two sparse solves.
pub fn loglik_taper2(
    spec: &CovarianceSpec,
    params: &ParamSet,
    taper: &Taper,
    locs: &LocationSet,
    pairs: &PairSet,
    z: &[f64],
) -> Result<ObjectiveValue> {
    check_tapered(locs, pairs, z)?;
    let n = z.len();
    let sys = TaperedSystem::new(spec, taper, locs, pairs)?;
    let zinv = sys.factor.selected_inverse();
    let value = -0.5 * sys.factor.log_det() - 0.5 * masked_quadratic(&sys, &zinv, z);

    // adjacency of the support with taper weight and covariance gradient
    let mut adj: Vec<Vec<(usize, f64, [f64; 3])>> = vec![Vec::new(); n];
    for &(i, j, r, h) in &sys.support {
        let g = spec.cov_grad_at(h);
        adj[i].push((j, r, g));
        adj[j].push((i, r, g));
    }
    let g0 = spec.cov_grad_at(0.0);
    let cols: Vec<Result<[f64; 3]>> = (0..n)
        .into_par_iter()
        .map(|b| {
            let mut e = vec![0.0; n];
            e[b] = 1.0;
            let q = sys.factor.solve(&e)?;
            let w: Vec<f64> = (0..n)
                .map(|a| {
                    let s = q[a] * z[a] + adj[a].iter().map(|&(c, r, _)| r * z[c] * q[c]).sum::<f64>();
                    z[a] * s
                })
                .collect();
            let v = sys.factor.solve(&w)?;
            let mut g = [0.0; 3];
            add3(&mut g, 0.5 * (v[b] - q[b]), &g0);
            for &(a, r, ref ga) in &adj[b] {
                add3(&mut g, 0.5 * r * (v[a] - q[a]), ga);
            }
            Ok(g)
        })
        .collect();
    let mut g = [0.0; 3];
    for c in cols {
        add3(&mut g, 1.0, &c?);
    }
    Ok(ObjectiveValue {
        value,
        grad: params.select(&g),
    })
}

// -------------------------------------------------------------- pairwise

/// Bivariate pair moments `(s, c)` and their parameter derivatives.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PairMoments {
    pub s: f64,
    pub c: f64,
    pub ds: [f64; 3],
    pub dc: [f64; 3],
}

impl PairMoments {
    #[inline]
    pub fn new(spec: &CovarianceSpec, h: f64) -> Self {
        let (r, dr) = spec.correlation_and_dphi(h);
        Self {
            s: spec.total_variance(),
            c: spec.sigma2 * r,
            ds: [1.0, 0.0, 1.0],
            dc: [r, spec.sigma2 * dr, 0.0],
        }
    }
}

fn degenerate(p: &Pair, m: &PairMoments) -> Error {
    Error::DegenerateCorrelation {
        i: p.i,
        j: p.j,
        rho: m.c / m.s,
    }
}

/// Marginal pair log-density `-1/2 [log D + Q/D]`, `D = s^2 - c^2`, with
/// partials in `(s, c)`.
#[inline]
fn marginal_pair(m: &PairMoments, zi: f64, zj: f64) -> Option<(f64, f64, f64)> {
    let d = m.s * m.s - m.c * m.c;
    if !(d > 0.0) {
        return None;
    }
    let sq = zi * zi + zj * zj;
    let cross = zi * zj;
    let q = m.s * sq - 2.0 * m.c * cross;
    let v = -0.5 * (d.ln() + q / d);
    let dd2 = d * d;
    let d_s = -0.5 * (2.0 * m.s / d + sq / d - 2.0 * m.s * q / dd2);
    let d_c = -0.5 * (-2.0 * m.c / d - 2.0 * cross / d + 2.0 * m.c * q / dd2);
    Some((v, d_s, d_c))
}

/// Single-site log-density `-1/2 log s - z^2 / (2 s)` and its `s` partial.
#[inline]
fn marginal_site(s: f64, z: f64) -> (f64, f64) {
    (-0.5 * s.ln() - z * z / (2.0 * s), -0.5 / s + z * z / (2.0 * s * s))
}

/// Difference log-density `-1/2 [log(v/2) + U^2/v]`, `v = 2(s - c)`.
#[inline]
fn difference_pair(m: &PairMoments, zi: f64, zj: f64) -> Option<(f64, f64, f64)> {
    let v = 2.0 * (m.s - m.c);
    if !(v > 0.0) {
        return None;
    }
    let u2 = (zi - zj) * (zi - zj);
    let val = -0.5 * ((0.5 * v).ln() + u2 / v);
    let dv = -0.5 * (1.0 / v - u2 / (v * v));
    Some((val, 2.0 * dv, -2.0 * dv))
}

/// One pair's contribution to a weighted pairwise objective, with partials in `(s, c)`.
#[inline]
fn pair_term(kind: PlKind, m: &PairMoments, zi: f64, zj: f64) -> Option<(f64, f64, f64)> {
    match kind {
        PlKind::Marginal => marginal_pair(m, zi, zj),
        PlKind::Difference => difference_pair(m, zi, zj),
        PlKind::Conditional => {
            let (v, d_s, d_c) = marginal_pair(m, zi, zj)?;
            let (ai, bi) = marginal_site(m.s, zi);
            let (aj, bj) = marginal_site(m.s, zj);
            Some((2.0 * v - ai - aj, 2.0 * d_s - bi - bj, 2.0 * d_c))
        }
    }
}

fn pl_impl(kind: PlKind, spec: &CovarianceSpec, pairs: &PairSet, z: &[f64], grad: bool) -> Result<(f64, [f64; 3])> {
    spec.validate()?;
    check_pairs(pairs, z)?;
    pair_sum(pairs.pairs(), |p, v, g| {
        let m = PairMoments::new(spec, p.h);
        let (val, d_s, d_c) = pair_term(kind, &m, z[p.i], z[p.j]).ok_or_else(|| degenerate(p, &m))?;
        *v += val;
        if grad {
            add3(g, d_s, &m.ds);
            add3(g, d_c, &m.dc);
        }
        Ok(())
    })
}

/// Weighted pairwise log-likelihood value; weights are 1 on `pairs`, 0 elsewhere.
pub fn pl_value(kind: PlKind, spec: &CovarianceSpec, pairs: &PairSet, z: &[f64]) -> Result<f64> {
    Ok(pl_impl(kind, spec, pairs, z, false)?.0)
}

pub fn pl(kind: PlKind, spec: &CovarianceSpec, params: &ParamSet, pairs: &PairSet, z: &[f64]) -> Result<ObjectiveValue> {
    let (value, g) = pl_impl(kind, spec, pairs, z, true)?;
    Ok(ObjectiveValue {
        value,
        grad: params.select(&g),
    })
}

// ------------------------------------------------------------- dispatch

/// An objective bound to one data set, with its pair set built once.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    spec: ObjectiveSpec,
    locs: &'a LocationSet,
    z: &'a [f64],
    pairs: Option<PairSet>,
}

impl<'a> Objective<'a> {
    pub fn new(spec: ObjectiveSpec, locs: &'a LocationSet, z: &'a [f64]) -> Result<Self> {
        let pairs = spec.pair_cutoff().map(|c| pairs_within(locs, c));
        Self::with_pairs(spec, locs, z, pairs)
    }

    /// Reuse a pair set whose cutoff matches the objective.
    pub fn with_pairs(spec: ObjectiveSpec, locs: &'a LocationSet, z: &'a [f64], pairs: Option<PairSet>) -> Result<Self> {
        spec.validate()?;
        check_data(locs, z)?;
        match (spec.pair_cutoff(), &pairs) {
            (None, _) => {}
            (Some(c), Some(p)) if p.cutoff() == c && p.n_sites() == locs.len() => {}
            (Some(c), Some(p)) => {
                return Err(Error::Contract(format!(
                    "pair set cutoff {:?} does not match objective cutoff {c:?}",
                    p.cutoff()
                )))
            }
            (Some(_), None) => return Err(Error::Contract("pair set required".into())),
        }
        Ok(Self { spec, locs, z, pairs })
    }

    pub fn spec(&self) -> &ObjectiveSpec {
        &self.spec
    }

    pub fn locations(&self) -> &LocationSet {
        self.locs
    }

    pub fn data(&self) -> &[f64] {
        self.z
    }

    pub fn pairs(&self) -> Option<&PairSet> {
        self.pairs.as_ref()
    }

    fn pair_set(&self) -> &PairSet {
        self.pairs.as_ref().expect("pair set present for non-ML objectives")
    }

    pub fn value(&self, cov: &CovarianceSpec) -> Result<f64> {
        match self.spec.kind {
            ObjectiveKind::Ml => loglik_value(cov, self.locs, self.z),
            ObjectiveKind::Taper1 => loglik_taper1_value(cov, &self.spec.taper, self.locs, self.pair_set(), self.z),
            ObjectiveKind::Taper2 => loglik_taper2_value(cov, &self.spec.taper, self.locs, self.pair_set(), self.z),
            ObjectiveKind::Pl(k) => pl_value(k, cov, self.pair_set(), self.z),
        }
    }

    pub fn evaluate(&self, cov: &CovarianceSpec, params: &ParamSet) -> Result<ObjectiveValue> {
        match self.spec.kind {
            ObjectiveKind::Ml => loglik(cov, params, self.locs, self.z),
            ObjectiveKind::Taper1 => loglik_taper1(cov, params, &self.spec.taper, self.locs, self.pair_set(), self.z),
            ObjectiveKind::Taper2 => loglik_taper2(cov, params, &self.spec.taper, self.locs, self.pair_set(), self.z),
            ObjectiveKind::Pl(k) => pl(k, cov, params, self.pair_set(), self.z),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::Family;

    fn spec(family: Family, sigma2: f64, phi: f64, nugget: f64) -> CovarianceSpec {
        CovarianceSpec::new(family, sigma2, phi).unwrap().with_nugget(nugget).unwrap()
    }

    fn far_pair() -> LocationSet {
        LocationSet::planar(vec![[0.0, 0.0], [5.0, 0.0]]).unwrap()
    }

    #[test]
    fn exact_small_cases() {
        let one = LocationSet::planar(vec![[0.0, 0.0]]).unwrap();
        let s = spec(Family::Exponential, 1.0, 0.4, 0.0);
        assert!((loglik_value(&s, &one, &[1.0]).unwrap() + 0.5).abs() < 1e-15);
        let sph = spec(Family::Spherical, 1.0, 0.4, 0.0);
        let v = loglik(&sph, &ParamSet::variance_and_range(), &far_pair(), &[1.0, 1.0]).unwrap();
        assert!((v.value + 1.0).abs() < 1e-15);
        assert_eq!(v.grad.len(), 2);
        assert!(loglik_value(&s, &one, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pairwise_hand_values() {
        let locs = far_pair();
        let pairs = pairs_within(&locs, Cutoff::Unbounded);
        let s = spec(Family::Spherical, 1.0, 0.4, 0.0);
        let m = pl_value(PlKind::Marginal, &s, &pairs, &[1.0, 1.0]).unwrap();
        assert!((m + 1.0).abs() < 1e-15);
        let d = pl_value(PlKind::Difference, &s, &pairs, &[1.0, 0.0]).unwrap();
        assert!((d + 0.25).abs() < 1e-15);
    }

    #[test]
    fn difference_ignores_a_common_shift() {
        let locs = LocationSet::planar(vec![[0.0, 0.0], [0.2, 0.1], [0.3, 0.5]]).unwrap();
        let pairs = pairs_within(&locs, Cutoff::Unbounded);
        let s = spec(Family::Cauchy, 1.3, 0.4, 0.1);
        let a = pl_value(PlKind::Difference, &s, &pairs, &[0.3, -1.0, 0.8]).unwrap();
        let b = pl_value(PlKind::Difference, &s, &pairs, &[3.3, 2.0, 3.8]).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn degenerate_correlation_is_reported() {
        let locs = LocationSet::planar(vec![[0.0, 0.0], [1e-9, 0.0]]).unwrap();
        let pairs = pairs_within(&locs, Cutoff::Unbounded);
        let s = spec(Family::Exponential, 1.0, 1e9, 0.0);
        let err = pl_value(PlKind::Marginal, &s, &pairs, &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::DegenerateCorrelation { i: 0, j: 1, .. }));
        assert!(pl_value(PlKind::Difference, &s, &pairs, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn taper_limits() {
        let locs = LocationSet::planar(vec![[0.0, 0.0], [0.3, 0.0], [0.0, 0.45], [0.5, 0.5]]).unwrap();
        let z = [0.4, -1.2, 0.7, 2.0];
        let s = spec(Family::Exponential, 1.2, 0.4, 0.3);
        let all = pairs_within(&locs, Cutoff::Unbounded);
        let exact = loglik_value(&s, &locs, &z).unwrap();
        let t1 = loglik_taper1_value(&s, &Taper::None, &locs, &all, &z).unwrap();
        let t2 = loglik_taper2_value(&s, &Taper::None, &locs, &all, &z).unwrap();
        assert!((t1 - exact).abs() < 1e-12);
        assert!((t2 - exact).abs() < 1e-12);

        let tiny = Taper::wendland(0.1).unwrap();
        let none = pairs_within(&locs, tiny.cutoff());
        let tot = s.total_variance();
        let indep = -2.0 * tot.ln() - 0.5 * z.iter().map(|v| v * v).sum::<f64>() / tot;
        let t1 = loglik_taper1_value(&s, &tiny, &locs, &none, &z).unwrap();
        let t2 = loglik_taper2_value(&s, &tiny, &locs, &none, &z).unwrap();
        assert!((t1 - indep).abs() < 1e-12);
        assert!((t2 - indep).abs() < 1e-12);
    }

    #[test]
    fn labels() {
        assert_eq!(ObjectiveSpec::ml().label(), "ML");
        assert_eq!(ObjectiveSpec::taper2(0.1).unwrap().label(), "TAP(0.1)");
        assert_eq!(ObjectiveSpec::taper1(0.1).unwrap().label(), "TAP1(0.1)");
        assert_eq!(ObjectiveSpec::pl(PlKind::Conditional, Cutoff::Finite(0.05)).unwrap().label(), "PL_C(0.05)");
        assert_eq!(ObjectiveSpec::pl(PlKind::Marginal, Cutoff::Unbounded).unwrap().label(), "PL_M");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let locs = LocationSet::planar(
            (0..20)
                .map(|k| {
                    let t = k as f64;
                    [(t * 0.37).fract(), (t * 0.61 + 0.13).fract()]
                })
                .collect(),
        )
        .unwrap();
        let z: Vec<f64> = (0..20).map(|k| ((k * 7 % 11) as f64 - 5.0) / 3.0).collect();
        let params = ParamSet::all();
        let specs = [
            ObjectiveSpec::ml(),
            ObjectiveSpec::taper1(0.5).unwrap(),
            ObjectiveSpec::taper2(0.5).unwrap(),
            ObjectiveSpec::pl(PlKind::Marginal, Cutoff::Finite(0.4)).unwrap(),
            ObjectiveSpec::pl(PlKind::Conditional, Cutoff::Finite(0.4)).unwrap(),
            ObjectiveSpec::pl(PlKind::Difference, Cutoff::Unbounded).unwrap(),
        ];
        for fam in Family::ALL {
            let s = spec(fam, 1.1, 0.35, 0.15);
            for os in specs {
                let obj = Objective::new(os, &locs, &z).unwrap();
                let g = obj.evaluate(&s, &params).unwrap();
                assert!((g.value - obj.value(&s).unwrap()).abs() < 1e-10);
                for (k, &p) in params.params().iter().enumerate() {
                    let step = 1e-6 * s.get(p);
                    let mut up = s;
                    up.set(p, s.get(p) + step);
                    let mut dn = s;
                    dn.set(p, s.get(p) - step);
                    let fd = (obj.value(&up).unwrap() - obj.value(&dn).unwrap()) / (2.0 * step);
                    let tol = 1e-5 * g.grad[k].abs().max(fd.abs()).max(1.0);
                    assert!(
                        (g.grad[k] - fd).abs() <= tol,
                        "{fam} {} {:?}: {} vs {fd}",
                        os.label(),
                        p,
                        g.grad[k]
                    );
                }
            }
        }
    }
}
