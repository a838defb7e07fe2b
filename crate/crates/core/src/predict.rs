//! Leave-one-out conditional prediction and proper scoring rules.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::covariance::{sigma_matrix, CovarianceSpec};
use crate::error::{Error, Result};
use crate::geometry::LocationSet;
use crate::linalg::DenseCholesky;

/// Conditional mean and variance of each observation given all the others.
#[derive(Debug, Clone, PartialEq)]
pub struct LooPrediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub rmse: f64,
    pub lscore: f64,
    pub crps: f64,
}

/// Precision-matrix identity: with `Q = Sigma^{-1}`,
/// `mean_i = z_i - (Q z)_i / Q_ii` and `variance_i = 1 / Q_ii`.
///
/// Prediction always uses the untapered covariance.
pub fn loo_predict(spec: &CovarianceSpec, locs: &LocationSet, z: &[f64]) -> Result<LooPrediction> {
    spec.validate()?;
    if z.len() != locs.len() {
        return Err(Error::Dimension {
            expected: locs.len(),
            got: z.len(),
        });
    }
    let f = DenseCholesky::factor(&sigma_matrix(spec, locs))?;
    let q = f.inverse();
    let qz = &q * nalgebra::DVector::from_column_slice(z);
    let mut mean = Vec::with_capacity(z.len());
    let mut variance = Vec::with_capacity(z.len());
    for (i, &zi) in z.iter().enumerate() {
        let qii = q[(i, i)];
        mean.push(zi - qz[i] / qii);
        variance.push(1.0 / qii);
    }
    Ok(LooPrediction { mean, variance })
}

/// Gaussian CRPS `v [u (2 Phi(u) - 1) + 2 phi(u) - 1/sqrt(pi)]`, `u = (z - m) / v`.
pub fn crps_gaussian(mean: f64, sd: f64, z: f64) -> f64 {
    let n = Normal::standard();
    let u = (z - mean) / sd;
    sd * (u * (2.0 * n.cdf(u) - 1.0) + 2.0 * n.pdf(u) - 1.0 / std::f64::consts::PI.sqrt())
}

/// RMSE, mean negative log predictive density, and mean CRPS.
pub fn scores(pred: &LooPrediction, z: &[f64]) -> Result<ScoreReport> {
    let n = z.len();
    if pred.mean.len() != n || pred.variance.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: pred.mean.len().min(pred.variance.len()),
        });
    }
    if n == 0 {
        return Err(Error::Precondition("no observations to score".into()));
    }
    if let Some(v) = pred.variance.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Precondition(format!("predictive variance {v} must be positive")));
    }
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let (mut se, mut ls, mut cr) = (0.0, 0.0, 0.0);
    for ((&m, &v), &zi) in pred.mean.iter().zip(&pred.variance).zip(z) {
        let e = zi - m;
        se += e * e;
        ls += 0.5 * (ln2pi + v.ln()) + e * e / (2.0 * v);
        cr += crps_gaussian(m, v.sqrt(), zi);
    }
    let nf = n as f64;
    Ok(ScoreReport {
        rmse: (se / nf).sqrt(),
        lscore: ls / nf,
        crps: cr / nf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::Family;

    #[test]
    fn bivariate_conditional() {
        let locs = LocationSet::planar(vec![[0.0, 0.0], [0.1, 0.0]]).unwrap();
        let s = CovarianceSpec::new(Family::Exponential, 1.0, 0.4).unwrap();
        let rho = s.correlation(0.1);
        let z = [0.7, -1.1];
        let p = loo_predict(&s, &locs, &z).unwrap();
        assert!((p.mean[0] - rho * z[1]).abs() < 1e-14);
        assert!((p.variance[0] - (1.0 - rho * rho)).abs() < 1e-14);
    }

    #[test]
    fn independent_sites() {
        let locs = LocationSet::planar(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let s = CovarianceSpec::new(Family::Spherical, 1.0, 0.4).unwrap().with_nugget(0.5).unwrap();
        let p = loo_predict(&s, &locs, &[1.0, 2.0, 3.0]).unwrap();
        assert!(p.mean.iter().all(|m| m.abs() < 1e-15));
        assert!(p.variance.iter().all(|v| (v - 1.5).abs() < 1e-14));
    }

    #[test]
    fn scores_at_the_mean() {
        let pred = LooPrediction {
            mean: vec![0.3, -1.0],
            variance: vec![1.0, 1.0],
        };
        let r = scores(&pred, &[0.3, -1.0]).unwrap();
        assert_eq!(r.rmse, 0.0);
        assert!((r.crps - 0.23369).abs() < 1e-5);
        assert!((r.lscore - 0.91894).abs() < 1e-5);
        let bad = LooPrediction {
            mean: vec![0.0],
            variance: vec![0.0],
        };
        assert!(scores(&bad, &[0.0]).is_err());
    }

    #[test]
    fn translation_invariance() {
        let p = LooPrediction {
            mean: vec![0.1, 0.5, -0.2],
            variance: vec![0.3, 1.2, 0.8],
        };
        let z = [0.4, 0.0, -1.0];
        let shifted = LooPrediction {
            mean: p.mean.iter().map(|m| m + 5.0).collect(),
            variance: p.variance.clone(),
        };
        let zs: Vec<f64> = z.iter().map(|v| v + 5.0).collect();
        let a = scores(&p, &z).unwrap();
        let b = scores(&shifted, &zs).unwrap();
        assert!((a.rmse - b.rmse).abs() < 1e-12);
        assert!((a.lscore - b.lscore).abs() < 1e-12);
        assert!((a.crps - b.crps).abs() < 1e-12);
    }
}
