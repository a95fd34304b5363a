//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative threshold under which a singular value counts as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Negative eigenvalues above this are treated as rounding and clamped to 0.
pub const PSD_REJECT: f64 = -1e-10;

/// A real matrix acting between canonical coordinate spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMap {
    pub matrix: DMatrix<f64>,
}

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
        }
        Ok(LinearMap { matrix })
    }

    pub fn identity(d: usize) -> Self {
        LinearMap { matrix: DMatrix::identity(d, d) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        LinearMap { matrix: DMatrix::from_diagonal(&DVector::from_column_slice(diag)) }
    }

    pub fn adjoint(&self) -> Self {
        LinearMap { matrix: self.matrix.transpose() }
    }

    pub fn op_norm(&self) -> f64 {
        op_norm(&self.matrix)
    }

    pub fn dim_out(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim_in(&self) -> usize {
        self.matrix.ncols()
    }
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted
/// descending and eigenvectors as matching columns.
pub fn sym_eigen_sorted(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = 0.5 * (m + m.transpose());
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Square root of a symmetric positive semidefinite matrix. Eigenvalues in
/// `[PSD_REJECT * scale, 0)` are clamped to zero; anything more negative is
/// rejected.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sym_eigen_sorted(m);
    let scale = vals.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let mut roots = Vec::with_capacity(vals.len());
    for &v in &vals {
        if v < PSD_REJECT * scale {
            return Err(Error::NotContraction { norm: (1.0 - v).sqrt() });
        }
        roots.push(v.max(0.0).sqrt());
    }
    let d = DMatrix::from_diagonal(&DVector::from_vec(roots));
    Ok(&vecs * d * vecs.transpose())
}

/// Moore-Penrose pseudo-inverse with a relative singular-value cutoff.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let cut = RANK_TOL * smax;
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut out = DMatrix::zeros(c, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cut && s > 0.0 {
            out += vt.row(k).transpose() * u.column(k).transpose() / s;
        }
    }
    out
}

/// Smallest `C` with `|L1^T x| <= C |L2^T x|` for all `x`, i.e. the operator
/// norm of `L2^+ L1` once `Range(L1)` is known to sit inside `Range(L2)`.
pub fn range_ratio_norm(l1: &LinearMap, l2: &LinearMap) -> Result<f64> {
    if l1.dim_out() != l2.dim_out() {
        return Err(Error::DimensionMismatch { expected: l2.dim_out(), found: l1.dim_out() });
    }
    let a = &l1.matrix;
    let b = &l2.matrix;
    let b_pinv = pinv(b);
    let proj_residual = a - b * (&b_pinv * a);
    let scale = op_norm(a).max(f64::MIN_POSITIVE);
    if op_norm(&proj_residual) > 1e-8 * scale {
        return Err(Error::Incomparable);
    }
    Ok(op_norm(&(b_pinv * a)))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}
