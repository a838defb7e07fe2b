#![allow(dead_code)]

use pairlik::covariance::{CovarianceSpec, Family};
use pairlik::geometry::{LocationSet, Metric};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_sites(rng: &mut ChaCha8Rng, n: usize) -> LocationSet {
    let pts = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
    LocationSet::planar(pts).unwrap()
}

pub fn random_lonlat(rng: &mut ChaCha8Rng, n: usize) -> LocationSet {
    let pts = (0..n)
        .map(|_| [rng.random_range(-125.0..-65.0), rng.random_range(25.0..50.0)])
        .collect();
    LocationSet::new(pts, Metric::great_circle()).unwrap()
}

pub fn random_spec(rng: &mut ChaCha8Rng, family: Family, nugget: bool) -> CovarianceSpec {
    let s = CovarianceSpec::new(family, rng.random_range(0.5..2.0), rng.random_range(0.15..0.6)).unwrap();
    if nugget {
        s.with_nugget(rng.random_range(0.05..0.5)).unwrap()
    } else {
        s
    }
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u1: f64 = rng.random::<f64>().max(1e-300);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}
