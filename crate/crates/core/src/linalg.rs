//! Dense symmetric solves used by the ridge classifier.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative cutoff below which eigenvalues are treated as zero by
/// [`pseudo_inverse_solve`].
pub const PINV_RELATIVE_TOLERANCE: f64 = 1e-10;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    factor: DMatrix<f64>,
    min_pivot: f64,
}

impl Cholesky {
    /// Factors the symmetric matrix `a` (only the lower triangle is read).
    /// Fails on the first pivot that is not strictly positive, reporting it.
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Shape(format!("{}x{} matrix is not square", n, a.ncols())));
        }
        let mut l = DMatrix::<f64>::zeros(n, n);
        let mut min_pivot = f64::INFINITY;
        for j in 0..n {
            let mut d = a[(j, j)];
            for p in 0..j {
                d -= l[(j, p)] * l[(j, p)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { index: j, pivot: d });
            }
            min_pivot = min_pivot.min(d);
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for p in 0..j {
                    s -= l[(i, p)] * l[(j, p)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self {
            factor: l,
            min_pivot,
        })
    }

    pub fn factor_matrix(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Smallest pivot `d_j` (the squared diagonal of `L`).
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    /// Solves `A x = b` in place by forward then backward substitution.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let l = &self.factor;
        let n = l.nrows();
        debug_assert_eq!(b.len(), n);
        for i in 0..n {
            let mut s = b[i];
            for p in 0..i {
                s -= l[(i, p)] * b[p];
            }
            b[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for p in i + 1..n {
                s -= l[(p, i)] * b[p];
            }
            b[i] = s / l[(i, i)];
        }
    }

    /// Solves `A Xᵀ = Bᵀ` for every row of `rhs`, returning `X` row-wise.
    pub fn solve_rows(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = rhs.clone();
        let mut buf = vec![0.0; rhs.ncols()];
        for r in 0..rhs.nrows() {
            for (b, v) in buf.iter_mut().zip(rhs.row(r).iter()) {
                *b = *v;
            }
            self.solve_in_place(&mut buf);
            for (o, v) in out.row_mut(r).iter_mut().zip(&buf) {
                *o = *v;
            }
        }
        out
    }
}

/// Least-squares minimum-norm solve of `A Xᵀ = Bᵀ` for symmetric `A`,
/// discarding eigen-directions whose magnitude is below
/// `PINV_RELATIVE_TOLERANCE` times the largest.
pub fn pseudo_inverse_solve(a: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(a.clone());
    let top = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !top.is_finite() {
        return Err(Error::Numeric("non-finite eigenvalue in pseudo-inverse".into()));
    }
    let cutoff = PINV_RELATIVE_TOLERANCE * top;
    let q = &eig.eigenvectors;
    // X = B Q diag(1/σ) Qᵀ restricted to retained directions.
    let mut proj = rhs * q;
    for (c, &ev) in eig.eigenvalues.iter().enumerate() {
        let scale = if top > 0.0 && ev.abs() > cutoff { 1.0 / ev } else { 0.0 };
        proj.column_mut(c).scale_mut(scale);
    }
    Ok(proj * q.transpose())
}
