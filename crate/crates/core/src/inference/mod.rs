//! Estimation by numerical maximization of any objective, with plug-in
//! information matrices and asymptotic relative efficiency.

mod are;
mod info;
mod optimize;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use are::{are, are_sweep, cutoff_for_fraction, default_fractions, AreMethod, AreReport};
pub use info::{
    fisher_info, godambe_cl, godambe_taper, symmetric_inverse, Godambe, Information, DENSE_INFO_LIMIT,
};
pub use optimize::{minimize, Function, MinimizeOptions, Minimum, Solver};

use crate::covariance::{CovarianceSpec, Param, ParamSet};
use crate::error::{Error, Result};
use crate::objective::{Objective, ObjectiveKind};

/// Box constraints on the free parameters, in their natural scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Smallest admissible nugget; the optimizer works on `log(nugget)`.
pub const NUGGET_FLOOR: f64 = 1e-10;

impl Bounds {
    /// `sigma2` within a factor 100, `phi` within a factor 20 of the start,
    /// `nugget` between a tiny floor and ten times the start's total variance.
    pub fn around(spec: &CovarianceSpec, params: &ParamSet) -> Self {
        let (mut lower, mut upper) = (Vec::new(), Vec::new());
        for p in params.params() {
            let (l, u) = match p {
                Param::Sigma2 => (spec.sigma2 / 100.0, spec.sigma2 * 100.0),
                Param::Phi => (spec.phi / 20.0, spec.phi * 20.0),
                Param::Nugget => (NUGGET_FLOOR, 10.0 * spec.total_variance()),
            };
            lower.push(l);
            upper.push(u);
        }
        Self { lower, upper }
    }

    fn validate(&self, params: &ParamSet) -> Result<()> {
        if self.lower.len() != params.len() || self.upper.len() != params.len() {
            return Err(Error::Dimension {
                expected: params.len(),
                got: self.lower.len().min(self.upper.len()),
            });
        }
        for ((l, u), p) in self.lower.iter().zip(&self.upper).zip(params.params()) {
            if !(*l > 0.0 && l <= u && u.is_finite()) {
                return Err(Error::Precondition(format!(
                    "bounds [{l}, {u}] for {} must be positive and ordered",
                    p.name()
                )));
            }
        }
        Ok(())
    }
}

/// Starting values for the range parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Starts {
    /// Only the supplied starting point.
    Single,
    /// `k` values of `phi` log-spaced inside its bounds.
    LogSpaced(usize),
    /// Explicit `phi` values.
    Grid(Vec<f64>),
}

impl Default for Starts {
    fn default() -> Self {
        Starts::LogSpaced(5)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub starts: Starts,
    pub minimize: MinimizeOptions,
    /// Attach information matrices and standard errors.
    pub information: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: Starts::default(),
            minimize: MinimizeOptions::default(),
            information: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub solver: Solver,
    pub starts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub method: String,
    pub params: Vec<String>,
    pub estimates: Vec<f64>,
    pub objective: f64,
    pub convergence: Convergence,
    pub std_errors: Option<Vec<f64>>,
    pub information: Option<Information>,
    /// Why information or standard errors are absent, when they were requested.
    pub information_note: Option<String>,
    pub n_sites: usize,
    pub n_pairs: Option<usize>,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub spec: Option<CovarianceSpec>,
}

impl FitResult {
    pub fn fitted_spec(&self) -> &CovarianceSpec {
        self.spec.as_ref().expect("fit results carry their specification")
    }

    pub fn estimate(&self, p: Param) -> Option<f64> {
        self.params.iter().position(|n| n == p.name()).map(|k| self.estimates[k])
    }
}

/// Negated objective in log-parameters.
struct LogProblem<'a, 'b> {
    objective: &'a Objective<'b>,
    base: CovarianceSpec,
    params: &'a ParamSet,
}

impl LogProblem<'_, '_> {
    fn spec_at(&self, x: &[f64]) -> Result<CovarianceSpec> {
        let theta: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        self.params.with_values(&self.base, &theta)
    }
}

impl Function for LogProblem<'_, '_> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(-self.objective.value(&self.spec_at(x)?)?)
    }

    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let s = self.spec_at(x)?;
        let v = self.objective.evaluate(&s, self.params)?;
        let g = v
            .grad
            .iter()
            .zip(self.params.params())
            .map(|(g, &p)| -g * s.get(p))
            .collect();
        Ok((-v.value, g))
    }
}

fn phi_starts(starts: &Starts, spec0: &CovarianceSpec, params: &ParamSet, bounds: &Bounds) -> Vec<Option<f64>> {
    let Some(k) = params.params().iter().position(|&p| p == Param::Phi) else {
        return vec![None];
    };
    let (lo, hi) = (bounds.lower[k], bounds.upper[k]);
    match starts {
        Starts::Single => vec![None],
        Starts::LogSpaced(0) => vec![None],
        Starts::LogSpaced(m) => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..*m)
                .map(|i| Some((a + (b - a) * (i as f64 + 0.5) / *m as f64).exp()))
                .collect()
        }
        Starts::Grid(g) if g.is_empty() => vec![Some(spec0.phi)],
        Starts::Grid(g) => g.iter().map(|&v| Some(v.clamp(lo, hi))).collect(),
    }
}

/// Maximize `objective` over the free parameters from `spec0`.
///
/// Runs one quasi-Newton search per range start; the best objective wins,
/// ties going to the smallest range. Non-convergence is reported, not
/// raised.
pub fn fit(
    objective: &Objective<'_>,
    spec0: &CovarianceSpec,
    params: &ParamSet,
    bounds: &Bounds,
    options: &FitOptions,
) -> Result<FitResult> {
    let clock = Instant::now();
    spec0.validate()?;
    bounds.validate(params)?;
    let theta0 = params.values(spec0);
    for (((&v, &l), &u), p) in theta0.iter().zip(&bounds.lower).zip(&bounds.upper).zip(params.params()) {
        if !(v >= l && v <= u) {
            return Err(Error::Precondition(format!(
                "starting value {} = {v} outside [{l}, {u}]",
                p.name()
            )));
        }
    }
    let problem = LogProblem {
        objective,
        base: *spec0,
        params,
    };
    let lo: Vec<f64> = bounds.lower.iter().map(|v| v.ln()).collect();
    let hi: Vec<f64> = bounds.upper.iter().map(|v| v.ln()).collect();
    let phi_k = params.params().iter().position(|&p| p == Param::Phi);

    let starts = phi_starts(&options.starts, spec0, params, bounds);
    let n_starts = starts.len();
    let mut best: Option<Minimum> = None;
    let mut first_err = None;
    let mut evaluations = 0;
    for start in starts {
        let mut x0: Vec<f64> = theta0.iter().map(|v| v.ln()).collect();
        if let (Some(phi), Some(k)) = (start, phi_k) {
            x0[k] = phi.ln();
        }
        match minimize(&problem, &x0, &lo, &hi, &options.minimize) {
            Ok(m) => {
                evaluations += m.evaluations;
                let better = match &best {
                    None => true,
                    Some(b) => {
                        m.f < b.f || (m.f == b.f && phi_k.is_some_and(|k| m.x[k] < b.x[k]))
                    }
                };
                if better {
                    best = Some(m);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some(best) = best else {
        return Err(first_err.expect("at least one start"));
    };
    let estimates: Vec<f64> = best.x.iter().map(|v| v.exp()).collect();
    let spec = params.with_values(spec0, &estimates)?;

    let (information, std_errors, information_note) = if options.information {
        match information(objective, &spec, params) {
            Ok(Some(info)) => match info.std_errors() {
                Ok(se) => (Some(info), Some(se), None),
                Err(e) => (Some(info), None, Some(e.to_string())),
            },
            Ok(None) => (None, None, Some("no information matrix for this method".into())),
            Err(e) => (None, None, Some(e.to_string())),
        }
    } else {
        (None, None, None)
    };

    Ok(FitResult {
        method: objective.spec().label(),
        params: params.names().into_iter().map(String::from).collect(),
        estimates,
        objective: -best.f,
        convergence: Convergence {
            converged: best.converged,
            iterations: best.iterations,
            evaluations,
            solver: best.solver,
            starts: n_starts,
        },
        std_errors,
        information,
        information_note,
        n_sites: objective.locations().len(),
        n_pairs: objective.pairs().map(|p| p.len()),
        wall_time_s: clock.elapsed().as_secs_f64(),
        spec: Some(spec),
    })
}

/// Plug-in information for the objective at `spec`; `None` for the first
/// tapered likelihood, whose Godambe matrix is not provided.
pub fn information(objective: &Objective<'_>, spec: &CovarianceSpec, params: &ParamSet) -> Result<Option<Information>> {
    let locs = objective.locations();
    Ok(match objective.spec().kind {
        ObjectiveKind::Ml => Some(Information::fisher(&fisher_info(spec, params, locs)?)),
        ObjectiveKind::Taper1 => None,
        ObjectiveKind::Taper2 => {
            let pairs = objective.pairs().expect("tapered objectives carry pairs");
            Some(Information::godambe(&godambe_taper(spec, params, &objective.spec().taper, locs, pairs)?))
        }
        ObjectiveKind::Pl(k) => {
            let pairs = objective.pairs().expect("pairwise objectives carry pairs");
            Some(Information::godambe(&godambe_cl(k, spec, params, locs, pairs)?))
        }
    })
}
