use nalgebra::DMatrix;

use crate::error::{Error, Result};

const BLOCK: usize = 96;

/// Lower Cholesky factor of a dense symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    l: DMatrix<f64>,
    log_det: f64,
}

impl DenseCholesky {
    /// Blocked right-looking factorization; only the lower triangle of `a` is read.
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::Dimension {
                expected: n,
                got: a.ncols(),
            });
        }
        if n == 0 {
            return Err(Error::Precondition("matrix of order 0".into()));
        }
        let mut l = a.clone();
        {
            let data = l.as_mut_slice();
            let mut kb = 0;
            while kb < n {
                let b = BLOCK.min(n - kb);
                factor_block_column(data, n, kb, b)?;
                let rest = kb + b;
                if rest < n {
                    trailing_update(data, n, kb, b);
                }
                kb = rest;
            }
        }
        for j in 1..n {
            for i in 0..j {
                l[(i, j)] = 0.0;
            }
        }
        let log_det = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();
        Ok(Self { l, log_det })
    }

    pub fn order(&self) -> usize {
        self.l.nrows()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Solve `L y = b` in place.
    pub fn forward_in_place(&self, y: &mut [f64]) {
        let n = self.order();
        let data = self.l.as_slice();
        for j in 0..n {
            let col = &data[j * n..(j + 1) * n];
            let v = y[j] / col[j];
            y[j] = v;
            if v != 0.0 {
                for (yi, &lij) in y[j + 1..].iter_mut().zip(&col[j + 1..]) {
                    *yi -= v * lij;
                }
            }
        }
    }

    /// Solve `L^T x = y` in place.
    pub fn backward_in_place(&self, x: &mut [f64]) {
        let n = self.order();
        let data = self.l.as_slice();
        for j in (0..n).rev() {
            let col = &data[j * n..(j + 1) * n];
            let s: f64 = x[j + 1..]
                .iter()
                .zip(&col[j + 1..])
                .map(|(a, b)| a * b)
                .sum();
            x[j] = (x[j] - s) / col[j];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len(self.order(), b.len())?;
        let mut x = b.to_vec();
        self.forward_in_place(&mut x);
        self.backward_in_place(&mut x);
        Ok(x)
    }

    pub fn quad_form(&self, z: &[f64]) -> Result<f64> {
        check_len(self.order(), z.len())?;
        let mut y = z.to_vec();
        self.forward_in_place(&mut y);
        Ok(y.iter().map(|v| v * v).sum())
    }

    /// Explicit inverse `L^{-T} L^{-1}`.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.order();
        let mut w = DMatrix::<f64>::identity(n, n);
        {
            let data = self.l.as_slice();
            let wd = w.as_mut_slice();
            for c in 0..n {
                let y = &mut wd[c * n..(c + 1) * n];
                // column c of L^{-1} is zero above row c
                for j in c..n {
                    let col = &data[j * n..(j + 1) * n];
                    let v = y[j] / col[j];
                    y[j] = v;
                    if v != 0.0 {
                        for (yi, &lij) in y[j + 1..].iter_mut().zip(&col[j + 1..]) {
                            *yi -= v * lij;
                        }
                    }
                }
            }
        }
        lower_gram(&w)
    }
}

/// `W^T W` for lower-triangular `W`, one dgemm per lower block of the result.
fn lower_gram(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let mut q = DMatrix::<f64>::zeros(n, n);
    let src = w.as_slice().as_ptr();
    let dst = q.as_mut_slice().as_mut_ptr();
    let mut ib = 0;
    while ib < n {
        let bi = BLOCK.min(n - ib);
        let mut jb = 0;
        while jb <= ib {
            let bj = BLOCK.min(n - jb);
            // rows above ib vanish in column block ib, so the sum starts there
            let k = n - ib;
            // SAFETY: reads stay inside `w`, writes inside block (ib, jb) of `q`.
            unsafe {
                matrixmultiply::dgemm(
                    bi,
                    k,
                    bj,
                    1.0,
                    src.add(ib * n + ib),
                    n as isize,
                    1,
                    src.add(jb * n + ib),
                    1,
                    n as isize,
                    0.0,
                    dst.add(jb * n + ib),
                    1,
                    n as isize,
                );
            }
            jb += BLOCK;
        }
        ib += BLOCK;
    }
    for j in 0..n {
        for i in 0..j {
            q[(i, j)] = q[(j, i)];
        }
    }
    q
}

fn check_len(n: usize, got: usize) -> Result<()> {
    if n != got {
        Err(Error::Dimension { expected: n, got })
    } else {
        Ok(())
    }
}

/// Factor the diagonal block at `kb` and solve the panel below it.
fn factor_block_column(data: &mut [f64], n: usize, kb: usize, b: usize) -> Result<()> {
    for j in kb..kb + b {
        let (left, right) = data.split_at_mut(j * n);
        let colj = &mut right[j..n];
        for k in kb..j {
            let ljk = left[k * n + j];
            if ljk != 0.0 {
                let colk = &left[k * n + j..k * n + n];
                for (x, &y) in colj.iter_mut().zip(colk) {
                    *x -= ljk * y;
                }
            }
        }
        let d = colj[0];
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let s = d.sqrt();
        colj[0] = s;
        let inv = 1.0 / s;
        for x in &mut colj[1..] {
            *x *= inv;
        }
    }
    Ok(())
}

/// `A22 -= L21 L21^T` restricted to the lower block triangle.
fn trailing_update(data: &mut [f64], n: usize, kb: usize, b: usize) {
    let start = kb + b;
    let ptr = data.as_mut_ptr();
    let mut jb = start;
    while jb < n {
        let w = BLOCK.min(n - jb);
        let m = n - jb;
        // SAFETY: the operand panel (columns kb..kb+b) and the target block
        // (columns jb..jb+w, jb >= kb+b) are disjoint regions of `data`.
        unsafe {
            let a = ptr.add(kb * n + jb) as *const f64; // L21 rows jb..n, m x b
            let bt = ptr.add(kb * n + jb) as *const f64; // L21 rows jb..jb+w, transposed
            let c = ptr.add(jb * n + jb);
            matrixmultiply::dgemm(
                m,
                b,
                w,
                -1.0,
                a,
                1,
                n as isize,
                bt,
                n as isize,
                1,
                1.0,
                c,
                1,
                n as isize,
            );
        }
        jb += w;
    }
}
