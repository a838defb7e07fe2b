//! Box-constrained minimization: projected BFGS with Armijo backtracking and
//! a Nelder-Mead fallback when the line search stalls.

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    /// Stop when the projected gradient satisfies `|g|_inf <= grad_tol * (1 + |f|)`.
    pub grad_tol: f64,
    /// Relative change in `f` below which two consecutive iterations count as stalled.
    pub f_tol: f64,
    pub max_nm_iter: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iter: 400,
            grad_tol: 1e-8,
            f_tol: 1e-14,
            max_nm_iter: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Bfgs,
    NelderMead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub solver: Solver,
}

/// Objective and gradient; errors at trial points are treated as `+inf`.
pub trait Function {
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

struct Counted<'a, F: Function> {
    f: &'a F,
    evals: std::cell::Cell<usize>,
}

impl<F: Function> Counted<'_, F> {
    fn value(&self, x: &[f64]) -> f64 {
        self.evals.set(self.evals.get() + 1);
        match self.f.value(x) {
            Ok(v) if v.is_finite() => v,
            _ => f64::INFINITY,
        }
    }

    fn value_grad(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        self.evals.set(self.evals.get() + 1);
        match self.f.value_grad(x) {
            Ok((v, g)) if v.is_finite() && g.iter().all(|x| x.is_finite()) => Some((v, g)),
            _ => None,
        }
    }
}

fn clamp(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, &l), &h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(l, h);
    }
}

/// Gradient components that can still move under the box.
fn projected(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((&xi, &gi), (&l, &h))| {
            if (xi <= l && gi > 0.0) || (xi >= h && gi < 0.0) {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize `f` over the box `[lo, hi]` starting from `x0`.
///
/// The start must be feasible and the objective finite there; the error of
/// the first evaluation is returned otherwise.
pub fn minimize<F: Function>(f: &F, x0: &[f64], lo: &[f64], hi: &[f64], opts: &MinimizeOptions) -> Result<Minimum> {
    let n = x0.len();
    let cf = Counted {
        f,
        evals: std::cell::Cell::new(0),
    };
    let mut x = x0.to_vec();
    clamp(&mut x, lo, hi);
    let (mut fx, mut g) = f.value_grad(&x)?;
    cf.evals.set(1);
    if !fx.is_finite() {
        return Err(crate::error::Error::Precondition(format!("objective is {fx} at the start")));
    }
    // inverse Hessian approximation, row-major
    let mut hinv = identity(n);
    let mut scaled = false;
    let mut stalls = 0;
    for iter in 0..opts.max_iter {
        let pg = projected(&x, &g, lo, hi);
        if inf_norm(&pg) <= opts.grad_tol * (1.0 + fx.abs()) {
            return Ok(done(x, fx, true, iter, &cf, Solver::Bfgs));
        }
        let active: Vec<bool> = (0..n).map(|i| pg[i] == 0.0 && g[i] != 0.0).collect();
        let mut d = direction(&hinv, &g, &active);
        if dot(&d, &g) >= 0.0 {
            hinv = identity(n);
            scaled = false;
            d = direction(&hinv, &g, &active);
        }
        if !scaled {
            // first step: unit length in the largest coordinate
            let s = 1.0 / inf_norm(&d).max(1e-300);
            let s = s.min(1.0);
            d.iter_mut().for_each(|v| *v *= s);
        }
        // largest step keeping the iterate inside the box
        let mut amax = f64::INFINITY;
        for i in 0..n {
            if d[i] > 0.0 {
                amax = amax.min((hi[i] - x[i]) / d[i]);
            } else if d[i] < 0.0 {
                amax = amax.min((lo[i] - x[i]) / d[i]);
            }
        }
        let mut alpha = amax.min(1.0);
        let slope = dot(&d, &g);
        let mut accepted = None;
        for _ in 0..40 {
            if alpha <= 0.0 {
                break;
            }
            let mut xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            clamp(&mut xt, lo, hi);
            let ft = cf.value(&xt);
            if ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((xt, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, _)) = accepted else {
            return nelder_mead(&cf, &x, fx, lo, hi, opts, iter);
        };
        let Some((fnew, gnew)) = cf.value_grad(&xn) else {
            return nelder_mead(&cf, &x, fx, lo, hi, opts, iter);
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if !scaled {
                let gamma = sy / dot(&y, &y);
                hinv.iter_mut().for_each(|v| *v *= gamma);
                scaled = true;
            }
            bfgs_update(&mut hinv, &s, &y, sy);
        }
        let change = (fx - fnew).abs();
        x = xn;
        g = gnew;
        let prev = fx;
        fx = fnew;
        if change <= opts.f_tol * (1.0 + prev.abs()) {
            stalls += 1;
            if stalls >= 3 {
                let pg = projected(&x, &g, lo, hi);
                let ok = inf_norm(&pg) <= 1e3 * opts.grad_tol * (1.0 + fx.abs());
                return Ok(done(x, fx, ok, iter + 1, &cf, Solver::Bfgs));
            }
        } else {
            stalls = 0;
        }
    }
    Ok(done(x, fx, false, opts.max_iter, &cf, Solver::Bfgs))
}

fn done<F: Function>(x: Vec<f64>, f: f64, converged: bool, iterations: usize, cf: &Counted<'_, F>, solver: Solver) -> Minimum {
    Minimum {
        x,
        f,
        converged,
        iterations,
        evaluations: cf.evals.get(),
        solver,
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn direction(hinv: &[f64], g: &[f64], active: &[bool]) -> Vec<f64> {
    let n = g.len();
    (0..n)
        .map(|i| {
            if active[i] {
                return 0.0;
            }
            -(0..n).filter(|&j| !active[j]).map(|j| hinv[i * n + j] * g[j]).sum::<f64>()
        })
        .collect()
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Bounded Nelder-Mead started around `x0`; vertices are clamped to the box.
fn nelder_mead<F: Function>(
    cf: &Counted<'_, F>,
    x0: &[f64],
    f0: f64,
    lo: &[f64],
    hi: &[f64],
    opts: &MinimizeOptions,
    prior_iters: usize,
) -> Result<Minimum> {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f0)];
    for i in 0..n {
        let mut v = x0.to_vec();
        let step = 0.05 * (hi[i] - lo[i]).min(1.0).max(1e-3);
        v[i] = if v[i] + step <= hi[i] { v[i] + step } else { v[i] - step };
        clamp(&mut v, lo, hi);
        let fv = cf.value(&v);
        simplex.push((v, fv));
    }
    let mut converged = false;
    let mut iters = 0;
    while iters < opts.max_nm_iter {
        iters += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let size = simplex[1..]
            .iter()
            .map(|(v, _)| inf_norm(&v.iter().zip(&simplex[0].0).map(|(a, b)| a - b).collect::<Vec<_>>()))
            .fold(0.0, f64::max);
        if (worst - best).abs() <= 1e-12 * (1.0 + best.abs()) && size <= 1e-8 {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|(v, _)| v[k]).sum::<f64>() / n as f64)
            .collect();
        let point = |t: f64| {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect();
            clamp(&mut p, lo, hi);
            p
        };
        let xr = point(1.0);
        let fr = cf.value(&xr);
        if fr < simplex[0].1 {
            let xe = point(2.0);
            let fe = cf.value(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst {
                let p = point(0.5);
                let v = cf.value(&p);
                (p, v)
            } else {
                let p = point(-0.5);
                let v = cf.value(&p);
                (p, v)
            };
            if fc < worst.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let b = simplex[0].0.clone();
                for (v, fv) in simplex.iter_mut().skip(1) {
                    for (vi, bi) in v.iter_mut().zip(&b) {
                        *vi = bi + 0.5 * (*vi - bi);
                    }
                    *fv = cf.value(v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    Ok(Minimum {
        x,
        f,
        converged,
        iterations: prior_iters + iters,
        evaluations: cf.evals.get(),
        solver: Solver::NelderMead,
    })
}
