//! Sampling locations, distance metrics and fixed-radius pair enumeration.
//!
//! Every objective in the crate consumes a [`LocationSet`] and, for the
//! sparse methods, a [`PairSet`] holding the unordered site pairs whose
//! separation is at most a cutoff distance.

use std::collections::HashMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A planar point `(x, y)` or a spherical point `(lon, lat)` in degrees.
pub type Point = [f64; 2];

/// Mean Earth radius used when no radius is configured.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Metric {
    Euclidean,
    /// Haversine distance on a sphere of the given radius; points are `(lon, lat)` in degrees.
    GreatCircle { radius_km: f64 },
}

impl Metric {
    pub fn great_circle() -> Self {
        Metric::GreatCircle {
            radius_km: EARTH_RADIUS_KM,
        }
    }
}

fn check_point(p: &Point, metric: Metric) -> Result<()> {
    if !p[0].is_finite() || !p[1].is_finite() {
        return Err(Error::Domain(format!("non-finite coordinate {p:?}")));
    }
    if let Metric::GreatCircle { radius_km } = metric {
        if !(radius_km > 0.0) {
            return Err(Error::Domain(format!("sphere radius {radius_km} must be positive")));
        }
        let (lon, lat) = (p[0], p[1]);
        if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::Domain(format!(
                "(lon {lon}, lat {lat}) outside [-180, 180] x [-90, 90]"
            )));
        }
    }
    Ok(())
}

fn haversine(a: &Point, b: &Point, radius: f64) -> f64 {
    let (lon1, lat1) = (a[0].to_radians(), a[1].to_radians());
    let (lon2, lat2) = (b[0].to_radians(), b[1].to_radians());
    let s_lat = ((lat2 - lat1) * 0.5).sin();
    let s_lon = ((lon2 - lon1) * 0.5).sin();
    let hav = s_lat * s_lat + lat1.cos() * lat2.cos() * s_lon * s_lon;
    2.0 * radius * hav.sqrt().min(1.0).asin()
}

#[inline]
fn raw_distance(a: &Point, b: &Point, metric: Metric) -> f64 {
    match metric {
        Metric::Euclidean => (a[0] - b[0]).hypot(a[1] - b[1]),
        Metric::GreatCircle { radius_km } => haversine(a, b, radius_km),
    }
}

/// Distance between two points under `metric`.
pub fn distance(a: &Point, b: &Point, metric: Metric) -> Result<f64> {
    check_point(a, metric)?;
    check_point(b, metric)?;
    Ok(raw_distance(a, b, metric))
}

/// Ordered set of distinct sites sharing one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationSet {
    points: Vec<Point>,
    metric: Metric,
}

impl LocationSet {
    pub fn new(points: Vec<Point>, metric: Metric) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Precondition("location set is empty".into()));
        }
        for p in &points {
            check_point(p, metric)?;
        }
        let mut seen = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            // -0.0 and 0.0 are the same site
            let key = ((p[0] + 0.0).to_bits(), (p[1] + 0.0).to_bits());
            if let Some(first) = seen.insert(key, i) {
                return Err(Error::Domain(format!(
                    "sites {first} and {i} coincide at {p:?}"
                )));
            }
        }
        Ok(Self { points, metric })
    }

    pub fn planar(points: Vec<Point>) -> Result<Self> {
        Self::new(points, Metric::Euclidean)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    /// Distance between sites `i` and `j`.
    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        raw_distance(&self.points[i], &self.points[j], self.metric)
    }

    /// Sites at the given indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let points = indices
            .iter()
            .map(|&i| {
                self.points.get(i).copied().ok_or(Error::Dimension {
                    expected: self.len(),
                    got: i,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(points, self.metric)
    }
}

/// Maximum pair separation considered by cut-off weights and tapers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Cutoff {
    Finite(f64),
    Unbounded,
}

impl Cutoff {
    #[inline]
    pub fn admits(&self, h: f64) -> bool {
        match *self {
            Cutoff::Finite(d) => h <= d,
            Cutoff::Unbounded => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub h: f64,
}

/// Every unordered pair `i < j` with separation within the cutoff, sorted by `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pairs: Vec<Pair>,
    cutoff: Cutoff,
    n_sites: usize,
}

impl PairSet {
    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn cutoff(&self) -> Cutoff {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Number of sites of the generating location set.
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// The sub-collection of pairs admitted by a tighter cutoff.
    pub fn restrict(&self, cutoff: Cutoff) -> Result<PairSet> {
        if let (Cutoff::Finite(d_new), Cutoff::Finite(d_old)) = (cutoff, self.cutoff) {
            if d_new > d_old {
                return Err(Error::Contract(format!(
                    "cannot widen a pair set from cutoff {d_old} to {d_new}"
                )));
            }
        } else if matches!(cutoff, Cutoff::Unbounded) && matches!(self.cutoff, Cutoff::Finite(_)) {
            return Err(Error::Contract("cannot widen a finite pair set to unbounded".into()));
        }
        Ok(PairSet {
            pairs: self.pairs.iter().copied().filter(|p| cutoff.admits(p.h)).collect(),
            cutoff,
            n_sites: self.n_sites,
        })
    }

    /// Fraction of nonzero entries in an `n x n` symmetric matrix with this
    /// off-diagonal pattern plus the full diagonal.
    pub fn nonzero_fraction(&self) -> f64 {
        let n = self.n_sites as f64;
        (n + 2.0 * self.pairs.len() as f64) / (n * n)
    }
}

/// Enumerate all pairs with separation `<= cutoff` (ties at the cutoff included).
///
/// Finite cutoffs use uniform binning with cell side equal to the cutoff and
/// scan the neighbouring cells, so the cost follows the number of
/// neighbours rather than `n^2`. Great-circle sets are binned on the unit
/// sphere embedded in three dimensions, where chord length is monotone in
/// arc length.
pub fn pairs_within(locs: &LocationSet, cutoff: Cutoff) -> PairSet {
    let n = locs.len();
    let pairs = match cutoff {
        Cutoff::Unbounded => all_pairs(locs),
        Cutoff::Finite(d) if !(d > 0.0) => Vec::new(),
        Cutoff::Finite(d) => match locs.metric() {
            Metric::Euclidean => binned_planar(locs, d),
            Metric::GreatCircle { radius_km } => {
                let angle = d / radius_km;
                if angle >= std::f64::consts::PI {
                    all_pairs(locs)
                } else {
                    binned_sphere(locs, d, 2.0 * (0.5 * angle).sin())
                }
            }
        },
    };
    PairSet {
        pairs,
        cutoff,
        n_sites: n,
    }
}

fn all_pairs(locs: &LocationSet) -> Vec<Pair> {
    let n = locs.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(Pair { i, j, h: locs.dist(i, j) });
        }
    }
    out
}

fn binned_planar(locs: &LocationSet, d: f64) -> Vec<Pair> {
    let pts = locs.points();
    let min_x = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let min_y = pts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let cell_of = |p: &Point| -> (i64, i64) {
        (
            ((p[0] - min_x) / d).floor() as i64,
            ((p[1] - min_y) / d).floor() as i64,
        )
    };
    let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in pts.iter().enumerate() {
        cells.entry(cell_of(p)).or_default().push(i);
    }
    let mut out = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        let (cx, cy) = cell_of(p);
        for dx in -1i64..=1 {
            for dy in -1i64..=1 {
                let key = (cx.saturating_add(dx), cy.saturating_add(dy));
                if let Some(members) = cells.get(&key) {
                    for &j in members {
                        if j > i {
                            let h = locs.dist(i, j);
                            if h <= d {
                                out.push(Pair { i, j, h });
                            }
                        }
                    }
                }
            }
        }
    }
    out.sort_unstable_by(|a, b| (a.i, a.j).cmp(&(b.i, b.j)));
    out
}

fn binned_sphere(locs: &LocationSet, d: f64, chord: f64) -> Vec<Pair> {
    let unit: Vec<[f64; 3]> = locs
        .points()
        .iter()
        .map(|p| {
            let (lon, lat) = (p[0].to_radians(), p[1].to_radians());
            [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
        })
        .collect();
    // slightly inflated so rounding in the chord never drops a boundary pair
    let cell = chord * (1.0 + 1e-9) + 1e-15;
    let cell_of = |v: &[f64; 3]| -> [i64; 3] {
        [
            ((v[0] + 1.0) / cell).floor() as i64,
            ((v[1] + 1.0) / cell).floor() as i64,
            ((v[2] + 1.0) / cell).floor() as i64,
        ]
    };
    let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, v) in unit.iter().enumerate() {
        cells.entry(cell_of(v)).or_default().push(i);
    }
    let mut out = Vec::new();
    for (i, v) in unit.iter().enumerate() {
        let c = cell_of(v);
        for dx in -1i64..=1 {
            for dy in -1i64..=1 {
                for dz in -1i64..=1 {
                    let key = [c[0] + dx, c[1] + dy, c[2] + dz];
                    if let Some(members) = cells.get(&key) {
                        for &j in members {
                            if j > i {
                                let h = locs.dist(i, j);
                                if h <= d {
                                    out.push(Pair { i, j, h });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out.sort_unstable_by(|a, b| (a.i, a.j).cmp(&(b.i, b.j)));
    out
}

/// Number of sites sampled at design level `k`.
pub fn design_size(k: u32) -> usize {
    500usize << k
}

/// Jittered regular grid over `[0, 2^(k/2)]^2`, subsampled to `500 * 2^k` sites.
///
/// Each grid coordinate receives an independent uniform perturbation on
/// `[-jitter, jitter]` before the sites are drawn without replacement.
pub fn perturbed_grid_design(k: u32, increment: f64, jitter: f64, seed: u64) -> Result<LocationSet> {
    if !(increment > 0.0) {
        return Err(Error::Parameter(format!("grid increment {increment} must be positive")));
    }
    if !(jitter >= 0.0) {
        return Err(Error::Parameter(format!("jitter {jitter} must be non-negative")));
    }
    let side = 2f64.powf(k as f64 / 2.0);
    let per_axis = (side / increment + 1e-9).floor() as usize + 1;
    let requested = design_size(k);
    let available = per_axis * per_axis;
    if available < requested {
        return Err(Error::DesignSize {
            available,
            requested,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grid = Vec::with_capacity(available);
    for ix in 0..per_axis {
        for iy in 0..per_axis {
            let mut p = [ix as f64 * increment, iy as f64 * increment];
            if jitter > 0.0 {
                p[0] += rng.random_range(-jitter..=jitter);
                p[1] += rng.random_range(-jitter..=jitter);
            }
            grid.push(p);
        }
    }
    let chosen = index::sample(&mut rng, available, requested);
    let points = chosen.iter().map(|i| grid[i]).collect();
    LocationSet::planar(points)
}
