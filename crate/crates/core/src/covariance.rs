//! Isotropic covariance families, their parameter derivatives, and the
//! Wendland taper used to sparsify covariance matrices.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Cutoff, LocationSet, PairSet};
use crate::linalg::{CsrMatrix, SpdMatrix};

/// Argument scale of the cardinal-sine model under the practical-range convention.
pub const WAVE_CONSTANT: f64 = 20.371;
const CAUCHY_CONSTANT_SQ: f64 = 19.0;
const EXPONENTIAL_CONSTANT: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Exponential,
    Cauchy,
    Spherical,
    Wave,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Exponential,
        Family::Cauchy,
        Family::Spherical,
        Family::Wave,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Family::Exponential => "exponential",
            Family::Cauchy => "cauchy",
            Family::Spherical => "spherical",
            Family::Wave => "wave",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Parameter(format!("unknown covariance family '{s}'")))
    }
}

/// How `phi` scales the lag.
///
/// `Practical`: correlation has dropped to about 0.05 (0 for the spherical
/// model) at lag `phi`. `Natural`: the lag is divided by `phi` alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeConvention {
    #[default]
    Practical,
    Natural,
}

/// Covariance parameter, in the canonical order used for gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Sigma2,
    Phi,
    Nugget,
}

impl Param {
    pub fn name(&self) -> &'static str {
        match self {
            Param::Sigma2 => "sigma2",
            Param::Phi => "phi",
            Param::Nugget => "nugget",
        }
    }

    fn index(&self) -> usize {
        *self as usize
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma2" => Ok(Param::Sigma2),
            "phi" => Ok(Param::Phi),
            "nugget" | "tau2" => Ok(Param::Nugget),
            other => Err(Error::Parameter(format!("unknown parameter '{other}'"))),
        }
    }
}

/// The free parameters of an estimation problem, kept in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSet(Vec<Param>);

impl ParamSet {
    pub fn new(mut params: Vec<Param>) -> Result<Self> {
        params.sort();
        params.dedup();
        if params.is_empty() {
            return Err(Error::Parameter("no free parameters".into()));
        }
        Ok(Self(params))
    }

    /// `sigma2` and `phi` free.
    pub fn variance_and_range() -> Self {
        Self(vec![Param::Sigma2, Param::Phi])
    }

    /// `sigma2`, `phi` and `nugget` free.
    pub fn all() -> Self {
        Self(vec![Param::Sigma2, Param::Phi, Param::Nugget])
    }

    pub fn only(p: Param) -> Self {
        Self(vec![p])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn params(&self) -> &[Param] {
        &self.0
    }

    pub fn contains(&self, p: Param) -> bool {
        self.0.contains(&p)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.0.iter().map(Param::name).collect()
    }

    pub fn values(&self, spec: &CovarianceSpec) -> Vec<f64> {
        self.0.iter().map(|&p| spec.get(p)).collect()
    }

    /// A copy of `spec` with the free parameters replaced by `values`.
    pub fn with_values(&self, spec: &CovarianceSpec, values: &[f64]) -> Result<CovarianceSpec> {
        if values.len() != self.0.len() {
            return Err(Error::Dimension {
                expected: self.0.len(),
                got: values.len(),
            });
        }
        let mut s = *spec;
        for (&p, &v) in self.0.iter().zip(values) {
            s.set(p, v);
        }
        s.validate()?;
        Ok(s)
    }

    /// Project a full `[sigma2, phi, nugget]` derivative triple onto the free parameters.
    #[inline]
    pub fn select(&self, full: &[f64; 3]) -> Vec<f64> {
        self.0.iter().map(|p| full[p.index()]).collect()
    }

    /// Accumulate a full derivative triple into `dst` (length `self.len()`).
    #[inline]
    pub fn accumulate(&self, dst: &mut [f64], weight: f64, full: &[f64; 3]) {
        for (d, p) in dst.iter_mut().zip(&self.0) {
            *d += weight * full[p.index()];
        }
    }
}

/// A parametric stationary isotropic covariance, optionally with a nugget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub family: Family,
    pub sigma2: f64,
    pub phi: f64,
    #[serde(default)]
    pub nugget: f64,
    #[serde(default)]
    pub convention: RangeConvention,
}

impl CovarianceSpec {
    pub fn new(family: Family, sigma2: f64, phi: f64) -> Result<Self> {
        let s = Self {
            family,
            sigma2,
            phi,
            nugget: 0.0,
            convention: RangeConvention::Practical,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_nugget(mut self, nugget: f64) -> Result<Self> {
        self.nugget = nugget;
        self.validate()?;
        Ok(self)
    }

    pub fn with_convention(mut self, convention: RangeConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(Error::Parameter(format!("sigma2 = {} must be positive", self.sigma2)));
        }
        if !(self.phi > 0.0) || !self.phi.is_finite() {
            return Err(Error::Parameter(format!("phi = {} must be positive", self.phi)));
        }
        if !(self.nugget >= 0.0) || !self.nugget.is_finite() {
            return Err(Error::Parameter(format!(
                "nugget = {} must be non-negative",
                self.nugget
            )));
        }
        Ok(())
    }

    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::Sigma2 => self.sigma2,
            Param::Phi => self.phi,
            Param::Nugget => self.nugget,
        }
    }

    pub fn set(&mut self, p: Param, v: f64) {
        match p {
            Param::Sigma2 => self.sigma2 = v,
            Param::Phi => self.phi = v,
            Param::Nugget => self.nugget = v,
        }
    }

    /// Variance at lag zero, `sigma2 + nugget`.
    pub fn total_variance(&self) -> f64 {
        self.sigma2 + self.nugget
    }

    fn lag_scale(&self) -> f64 {
        match (self.convention, self.family) {
            (RangeConvention::Natural, _) | (_, Family::Spherical) => 1.0,
            (RangeConvention::Practical, Family::Exponential) => EXPONENTIAL_CONSTANT,
            (RangeConvention::Practical, Family::Cauchy) => CAUCHY_CONSTANT_SQ.sqrt(),
            (RangeConvention::Practical, Family::Wave) => WAVE_CONSTANT,
        }
    }

    /// Correlation `rho(h; phi)` and its derivative with respect to `phi`.
    #[inline]
    pub fn correlation_and_dphi(&self, h: f64) -> (f64, f64) {
        let phi = self.phi;
        if h == 0.0 {
            return (1.0, 0.0);
        }
        let x = self.lag_scale() * h / phi;
        match self.family {
            Family::Exponential => {
                let r = (-x).exp();
                (r, r * x / phi)
            }
            Family::Cauchy => {
                let r = 1.0 / (1.0 + x * x);
                (r, 2.0 * x * x * r * r / phi)
            }
            Family::Spherical => {
                if x < 1.0 {
                    let r = 1.0 - 1.5 * x + 0.5 * x * x * x;
                    (r, 1.5 * x * (1.0 - x * x) / phi)
                } else {
                    // left limit of the derivative at x = 1 is also zero
                    (0.0, 0.0)
                }
            }
            Family::Wave => {
                if x < 1e-4 {
                    let x2 = x * x;
                    (1.0 - x2 / 6.0 + x2 * x2 / 120.0, (x2 / 3.0 - x2 * x2 / 30.0) / phi)
                } else {
                    let (s, c) = x.sin_cos();
                    (s / x, (s - x * c) / (x * phi))
                }
            }
        }
    }

    #[inline]
    pub fn correlation(&self, h: f64) -> f64 {
        self.correlation_and_dphi(h).0
    }

    /// `C(h) = nugget * 1{h = 0} + sigma2 * rho(h; phi)`.
    #[inline]
    pub fn cov_at(&self, h: f64) -> f64 {
        if h == 0.0 {
            self.sigma2 + self.nugget
        } else {
            self.sigma2 * self.correlation(h)
        }
    }

    /// `[dC/dsigma2, dC/dphi, dC/dnugget]` at lag `h`.
    #[inline]
    pub fn cov_grad_at(&self, h: f64) -> [f64; 3] {
        let (r, dr) = self.correlation_and_dphi(h);
        let dn = if h == 0.0 { 1.0 } else { 0.0 };
        [r, self.sigma2 * dr, dn]
    }
}

fn check_lag(h: f64) -> Result<()> {
    if !(h >= 0.0) {
        return Err(Error::Parameter(format!("lag {h} must be non-negative")));
    }
    Ok(())
}

/// Covariance at lag `h`.
pub fn cov(spec: &CovarianceSpec, h: f64) -> Result<f64> {
    spec.validate()?;
    check_lag(h)?;
    Ok(spec.cov_at(h))
}

/// Partial derivatives of the covariance at lag `h` with respect to the free parameters.
pub fn cov_grad(spec: &CovarianceSpec, params: &ParamSet, h: f64) -> Result<Vec<f64>> {
    spec.validate()?;
    check_lag(h)?;
    Ok(params.select(&spec.cov_grad_at(h)))
}

/// Compactly supported taper applied elementwise to a covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Taper {
    /// Identically one (no tapering).
    None,
    /// `(1 - h/d)^4_+ (1 + 4h/d)`.
    Wendland { range: f64 },
}

impl Taper {
    pub fn wendland(range: f64) -> Result<Self> {
        if !(range > 0.0) || !range.is_finite() {
            return Err(Error::Parameter(format!("taper range {range} must be positive")));
        }
        Ok(Taper::Wendland { range })
    }

    /// The pair cutoff whose pattern contains the taper support.
    pub fn cutoff(&self) -> Cutoff {
        match *self {
            Taper::None => Cutoff::Unbounded,
            Taper::Wendland { range } => Cutoff::Finite(range),
        }
    }

    #[inline]
    pub fn eval(&self, h: f64) -> f64 {
        match *self {
            Taper::None => 1.0,
            Taper::Wendland { range } => {
                let r = h / range;
                if r >= 1.0 {
                    0.0
                } else {
                    let a = 1.0 - r;
                    let a2 = a * a;
                    a2 * a2 * (1.0 + 4.0 * r)
                }
            }
        }
    }
}

/// Taper correlation at lag `h`.
pub fn taper(t: &Taper, h: f64) -> f64 {
    t.eval(h)
}

/// Dense covariance matrix of the sites.
pub fn sigma_matrix(spec: &CovarianceSpec, locs: &LocationSet) -> DMatrix<f64> {
    let n = locs.len();
    let mut m = DMatrix::zeros(n, n);
    let total = spec.total_variance();
    for j in 0..n {
        m[(j, j)] = total;
        for i in j + 1..n {
            let v = spec.sigma2 * spec.correlation(locs.dist(i, j));
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Dense `dSigma/dtheta_k` for every free parameter.
pub fn sigma_derivatives(spec: &CovarianceSpec, params: &ParamSet, locs: &LocationSet) -> Vec<DMatrix<f64>> {
    let n = locs.len();
    let mut out = vec![DMatrix::zeros(n, n); params.len()];
    let diag = params.select(&spec.cov_grad_at(0.0));
    for j in 0..n {
        for (m, &d) in out.iter_mut().zip(&diag) {
            m[(j, j)] = d;
        }
        for i in j + 1..n {
            let g = params.select(&spec.cov_grad_at(locs.dist(i, j)));
            for (m, &v) in out.iter_mut().zip(&g) {
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    }
    out
}

/// Dense taper matrix `R(d)`.
pub fn taper_matrix(t: &Taper, locs: &LocationSet) -> DMatrix<f64> {
    let n = locs.len();
    let mut m = DMatrix::from_element(n, n, 1.0);
    if let Taper::Wendland { .. } = t {
        for j in 0..n {
            for i in j + 1..n {
                let v = t.eval(locs.dist(i, j));
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    }
    m
}

pub fn assemble_sigma(spec: &CovarianceSpec, locs: &LocationSet) -> Result<SpdMatrix> {
    spec.validate()?;
    SpdMatrix::dense(sigma_matrix(spec, locs))
}

fn check_taper_pairs(t: &Taper, locs: &LocationSet, pairs: &PairSet) -> Result<()> {
    if pairs.n_sites() != locs.len() {
        return Err(Error::Contract(format!(
            "pair set built for {} sites, location set has {}",
            pairs.n_sites(),
            locs.len()
        )));
    }
    if pairs.cutoff() != t.cutoff() {
        return Err(Error::Contract(format!(
            "pair cutoff {:?} does not match taper support {:?}",
            pairs.cutoff(),
            t.cutoff()
        )));
    }
    Ok(())
}

/// Sparse `Sigma o R(d)`: entries where the taper is positive, plus the diagonal.
pub fn assemble_tapered_sigma(
    spec: &CovarianceSpec,
    t: &Taper,
    locs: &LocationSet,
    pairs: &PairSet,
) -> Result<SpdMatrix> {
    spec.validate()?;
    check_taper_pairs(t, locs, pairs)?;
    let diag = vec![spec.total_variance(); locs.len()];
    let upper: Vec<(usize, usize, f64)> = pairs
        .pairs()
        .iter()
        .filter_map(|p| {
            let r = t.eval(p.h);
            (r > 0.0).then(|| (p.i, p.j, spec.sigma2 * spec.correlation(p.h) * r))
        })
        .collect();
    SpdMatrix::sparse(CsrMatrix::symmetric(&diag, &upper)?)
}
