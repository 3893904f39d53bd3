//! Small dense linear-algebra helpers built on nalgebra's SVD and
//! eigen-solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::scalar::{lit, Real};

/// Singular values and right singular vectors of `m`, padding with zero rows
/// so that `V` is always square.
fn svd_with_full_v<T: Real>(m: &DMatrix<T>) -> (Vec<T>, DMatrix<T>) {
    let (r, c) = m.shape();
    let padded = if r < c {
        let mut p = DMatrix::zeros(c, c);
        p.rows_mut(0, r).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    (svd.singular_values.iter().copied().collect(), v_t.transpose())
}

/// Orthonormal basis of `{x : m x = 0}` where singular values at or below
/// `threshold` count as zero.
pub fn null_space_abs<T: Real>(m: &DMatrix<T>, threshold: T) -> DMatrix<T> {
    let c = m.ncols();
    if m.nrows() == 0 || c == 0 {
        return DMatrix::identity(c, c);
    }
    let (sv, v) = svd_with_full_v(m);
    let keep: Vec<usize> = (0..c).filter(|&k| sv[k] <= threshold).collect();
    select_columns(&v, &keep)
}

/// Null space with a threshold relative to the largest singular value.
pub fn null_space<T: Real>(m: &DMatrix<T>, rel_tol: T) -> DMatrix<T> {
    let c = m.ncols();
    if m.nrows() == 0 || c == 0 {
        return DMatrix::identity(c, c);
    }
    let (sv, v) = svd_with_full_v(m);
    let smax = sv.iter().copied().fold(T::zero(), T::max);
    let keep: Vec<usize> = (0..c).filter(|&k| sv[k] <= rel_tol * smax).collect();
    select_columns(&v, &keep)
}

/// Numerical rank with a threshold relative to the largest singular value.
pub fn rank<T: Real>(m: &DMatrix<T>, rel_tol: T) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let smax = sv.iter().copied().fold(T::zero(), T::max);
    if smax == T::zero() {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Orthonormal basis of the column space of `m`.
pub fn range_basis<T: Real>(m: &DMatrix<T>, rel_tol: T) -> DMatrix<T> {
    let r = m.nrows();
    if r == 0 || m.ncols() == 0 {
        return DMatrix::zeros(r, 0);
    }
    let svd = SVD::new(m.clone(), true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().copied().fold(T::zero(), T::max);
    if smax == T::zero() {
        return DMatrix::zeros(r, 0);
    }
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > rel_tol * smax)
        .collect();
    select_columns(&u, &keep)
}

/// Ratio of largest to smallest singular value (infinite when singular).
pub fn condition_number<T: Real>(m: &DMatrix<T>) -> T {
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let smax = sv.iter().copied().fold(T::zero(), T::max);
    let smin = sv.iter().copied().fold(smax, T::min);
    if smin == T::zero() {
        lit(f64::INFINITY)
    } else {
        smax / smin
    }
}

/// Induced 2-norm.
pub fn spectral_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 || m.ncols() == 0 {
        return T::zero();
    }
    SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .copied()
        .fold(T::zero(), T::max)
}

pub fn select_columns<T: Real>(m: &DMatrix<T>, cols: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(m.nrows(), cols.len(), |r, c| m[(r, cols[c])])
}

pub fn select_rows<T: Real>(m: &DMatrix<T>, rows: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
}

pub fn hstack<T: Real>(blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.columns_mut(at, b.ncols()).copy_from(*b);
        at += b.ncols();
    }
    out
}

pub fn vstack<T: Real>(blocks: &[&DMatrix<T>], ncols: usize) -> DMatrix<T> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, ncols);
    let mut at = 0;
    for b in blocks {
        out.rows_mut(at, b.nrows()).copy_from(*b);
        at += b.nrows();
    }
    out
}

/// Unique symmetric positive semidefinite square root and its inverse.
///
/// Returns `None` when an eigenvalue is at or below `rel_floor * lambda_max`.
pub fn sqrt_pd<T: Real>(m: &DMatrix<T>, rel_floor: T) -> Option<(DMatrix<T>, DMatrix<T>)> {
    let eig = SymmetricEigen::new(m.clone());
    let lmax = eig.eigenvalues.iter().copied().fold(T::zero(), T::max);
    if lmax <= T::zero() || eig.eigenvalues.iter().any(|&l| l <= rel_floor * lmax) {
        return None;
    }
    let q = &eig.eigenvectors;
    let sqrt = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|l| l.sqrt()));
    let inv_sqrt = sqrt.map(|s| T::one() / s);
    let root = q * DMatrix::from_diagonal(&sqrt) * q.transpose();
    let inv_root = q * DMatrix::from_diagonal(&inv_sqrt) * q.transpose();
    Some((symmetrize(&root), symmetrize(&inv_root)))
}

pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

/// Largest real part among the eigenvalues of a square matrix (`-inf` for an
/// empty matrix).
pub fn max_real_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return lit(f64::NEG_INFINITY);
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| c.re)
        .fold(lit(f64::NEG_INFINITY), T::max)
}
