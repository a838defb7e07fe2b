//! Zero-mean Gaussian random field draws by Cholesky colouring of white noise.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::covariance::{sigma_matrix, CovarianceSpec};
use crate::error::{Error, Result};
use crate::geometry::LocationSet;
use crate::linalg::DenseCholesky;

/// One field realization at the sites of a location set.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub values: Vec<f64>,
    pub seed: u64,
    pub spec: CovarianceSpec,
}

/// Stream seed for replicate `rep` of a batch seeded with `seed`.
///
/// A SplitMix64 finalizer over the pair, so neighbouring replicates get
/// unrelated ChaCha streams.
pub fn derive_seed(seed: u64, rep: u64) -> u64 {
    let mut z = seed
        .wrapping_add(rep.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard normal draws from uniforms strictly inside (0, 1).
fn standard_normals(seed: u64, n: usize) -> Vec<f64> {
    let normal = Normal::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u = ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
            normal.inverse_cdf(u)
        })
        .collect()
}

/// Reusable sampler holding the factor of one covariance matrix.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    spec: CovarianceSpec,
    factor: DenseCholesky,
}

impl FieldSampler {
    pub fn new(spec: &CovarianceSpec, locs: &LocationSet) -> Result<Self> {
        spec.validate()?;
        let factor = DenseCholesky::factor(&sigma_matrix(spec, locs))?;
        Ok(Self { spec: *spec, factor })
    }

    pub fn n_sites(&self) -> usize {
        self.factor.order()
    }

    /// `Z = L eps` with `eps` drawn from the stream `seed`.
    pub fn draw(&self, seed: u64) -> Realization {
        let n = self.n_sites();
        let eps = standard_normals(seed, n);
        let l = self.factor.lower().as_slice();
        let mut values = vec![0.0; n];
        for (j, &e) in eps.iter().enumerate() {
            let col = &l[j * n..(j + 1) * n];
            for (v, &lij) in values[j..].iter_mut().zip(&col[j..]) {
                *v += lij * e;
            }
        }
        Realization {
            values,
            seed,
            spec: self.spec,
        }
    }

    /// Replicates `0..n_reps`, each on its derived stream.
    pub fn batch(&self, n_reps: usize, seed: u64) -> Vec<Realization> {
        (0..n_reps as u64)
            .into_par_iter()
            .map(|r| self.draw(derive_seed(seed, r)))
            .collect()
    }
}

pub fn simulate_grf(spec: &CovarianceSpec, locs: &LocationSet, seed: u64) -> Result<Realization> {
    Ok(FieldSampler::new(spec, locs)?.draw(seed))
}

/// Replicate `r` equals `simulate_grf(spec, locs, derive_seed(seed, r))`.
pub fn simulate_batch(
    spec: &CovarianceSpec,
    locs: &LocationSet,
    n_reps: usize,
    seed: u64,
) -> Result<Vec<Realization>> {
    if n_reps == 0 {
        return Err(Error::Parameter("at least one replicate is required".into()));
    }
    Ok(FieldSampler::new(spec, locs)?.batch(n_reps, seed))
}
