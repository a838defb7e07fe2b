//! Asymptotic relative efficiency and its sweep over matrix sparsity.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::info::{fisher_info, godambe_cl, godambe_taper};
use crate::covariance::{CovarianceSpec, ParamSet, Taper};
use crate::error::{Error, Result};
use crate::geometry::{pairs_within, Cutoff, LocationSet, PairSet};
use crate::objective::PlKind;

/// `(|G| / |I|)^(1/p)`.
pub fn are(g: &DMatrix<f64>, fisher: &DMatrix<f64>) -> Result<f64> {
    let p = g.nrows();
    if p == 0 || g.ncols() != p || fisher.shape() != (p, p) {
        return Err(Error::Dimension {
            expected: p,
            got: fisher.nrows(),
        });
    }
    let dg = crate::linalg::spd_log_det(g)?;
    let di = crate::linalg::spd_log_det(fisher)?;
    Ok(((dg - di) / p as f64).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AreMethod {
    Taper,
    Pl(PlKind),
}

impl AreMethod {
    pub const ALL: [AreMethod; 4] = [
        AreMethod::Taper,
        AreMethod::Pl(PlKind::Marginal),
        AreMethod::Pl(PlKind::Conditional),
        AreMethod::Pl(PlKind::Difference),
    ];

    pub fn letter(&self) -> &'static str {
        match self {
            AreMethod::Taper => "T",
            AreMethod::Pl(k) => k.letter(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "T" | "TAP" => Ok(AreMethod::Taper),
            "M" => Ok(AreMethod::Pl(PlKind::Marginal)),
            "C" => Ok(AreMethod::Pl(PlKind::Conditional)),
            "D" => Ok(AreMethod::Pl(PlKind::Difference)),
            _ => Err(Error::Parameter(format!("unknown efficiency method '{s}'"))),
        }
    }
}

impl fmt::Display for AreMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letter())
    }
}

/// One point of an efficiency curve; `are` carries its own failure.
#[derive(Debug, Clone, PartialEq)]
pub struct AreReport {
    pub method: AreMethod,
    /// Requested fraction of nonzero matrix entries.
    pub target: f64,
    /// Achieved fraction `(n + 2 P) / n^2`.
    pub nonzero_fraction: f64,
    pub d: f64,
    pub p: usize,
    pub are: Result<f64>,
}

/// Distance whose pair set gives the nonzero fraction closest above `fraction`.
///
/// `sorted` holds all pair distances in increasing order. The returned
/// distance sits halfway between the last admitted and first excluded pair.
pub fn cutoff_for_fraction(n: usize, sorted: &[f64], fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Parameter(format!("nonzero fraction {fraction} outside (0, 1]")));
    }
    let nf = n as f64;
    let want = ((fraction * nf * nf - nf) / 2.0).ceil().max(0.0) as usize;
    let p = want.min(sorted.len());
    Ok(match p {
        0 => 0.5 * sorted.first().copied().unwrap_or(1.0),
        p if p == sorted.len() => sorted[p - 1] * (1.0 + 1e-9) + f64::MIN_POSITIVE,
        p => 0.5 * (sorted[p - 1] + sorted[p]),
    })
}

/// Efficiency curves for each method over the target nonzero fractions.
///
/// Fisher information is computed once; per-point failures are kept in the
/// report rather than aborting the sweep.
pub fn are_sweep(
    spec: &CovarianceSpec,
    params: &ParamSet,
    locs: &LocationSet,
    methods: &[AreMethod],
    fractions: &[f64],
) -> Result<Vec<AreReport>> {
    let fisher = fisher_info(spec, params, locs)?;
    let all = pairs_within(locs, Cutoff::Unbounded);
    let mut sorted: Vec<f64> = all.pairs().iter().map(|p| p.h).collect();
    sorted.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(methods.len() * fractions.len());
    for &f in fractions {
        let d = cutoff_for_fraction(locs.len(), &sorted, f)?;
        let pairs = all.restrict(Cutoff::Finite(d))?;
        for &m in methods {
            let are = method_information(m, spec, params, locs, &pairs, d).and_then(|g| are(&g, &fisher));
            out.push(AreReport {
                method: m,
                target: f,
                nonzero_fraction: pairs.nonzero_fraction(),
                d,
                p: params.len(),
                are,
            });
        }
    }
    Ok(out)
}

fn method_information(
    m: AreMethod,
    spec: &CovarianceSpec,
    params: &ParamSet,
    locs: &LocationSet,
    pairs: &PairSet,
    d: f64,
) -> Result<DMatrix<f64>> {
    match m {
        AreMethod::Taper => Ok(godambe_taper(spec, params, &Taper::wendland(d)?, locs, pairs)?.g),
        AreMethod::Pl(k) => Ok(godambe_cl(k, spec, params, locs, pairs)?.g),
    }
}

/// The default target sequence `0.01, 0.02, ..., 0.20`.
pub fn default_fractions() -> Vec<f64> {
    (1..=20).map(|k| k as f64 / 100.0).collect()
}
