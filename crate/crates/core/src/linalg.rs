//! Dense linear algebra helpers on top of nalgebra.
//!
//! Decompositions are returned in decreasing order with the sign convention
//! used everywhere in the crate: in every column, the entry of largest
//! absolute value is positive (ties go to the lowest row index).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Flips columns so that their largest-magnitude entry is positive.
pub fn normalize_column_signs<T: Real>(m: &mut DMatrix<T>) {
    for mut col in m.column_iter_mut() {
        let big = col.iter().fold(T::zero(), |a, v| a.max(v.abs()));
        // Entries within a few ulps of the maximum count as ties.
        let cut = big * (T::one() - T::lit(64.0) * T::eps());
        if let Some(best) = col.iter().position(|v| v.abs() >= cut) {
            if big > T::zero() && col[best] < T::zero() {
                col.neg_mut();
            }
        }
    }
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

/// Symmetric eigendecomposition with eigenvalues in decreasing order.
pub fn sym_eigen_desc<T: Real>(m: &DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let n = m.nrows();
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    normalize_column_signs(&mut vectors);
    (values, vectors)
}

/// Rank-`r` spectral truncation `Σ_{i<r} λ_i ξ_i ξ_iᵀ` of a symmetric matrix.
pub fn spectral_truncate<T: Real>(m: &DMatrix<T>, r: usize) -> DMatrix<T> {
    let n = m.nrows();
    if r >= n {
        return symmetrize(m);
    }
    let (values, vectors) = sym_eigen_desc(m);
    let xi = vectors.columns(0, r);
    let scaled = DMatrix::from_fn(n, r, |i, k| xi[(i, k)] * values[k]);
    symmetrize(&(scaled * xi.transpose()))
}

/// `m mᵀ` if `m` is wide, `mᵀ m` otherwise.
fn small_gram<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    }
}

/// Singular values in decreasing order, as square roots of the eigenvalues
/// of the smaller Gram matrix.
pub fn singular_values_desc<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    if m.is_empty() {
        return Vec::new();
    }
    let (values, _) = sym_eigen_desc(&small_gram(m));
    values.iter().map(|v| v.max(T::zero()).sqrt()).collect()
}

/// Leading left singular vectors of a matrix.
#[derive(Debug, Clone)]
pub struct LeadingVectors<T: Real> {
    /// Column-orthonormal, sign-normalized, ordered by singular value.
    pub vectors: DMatrix<T>,
    /// All singular values, decreasing.
    pub singular_values: Vec<T>,
    /// Set when the retained subspace is not uniquely determined because a
    /// singular value is repeated at or across the truncation boundary.
    pub degenerate: bool,
}

/// The `r` leading left singular vectors of `m`, from the eigenvectors of
/// `m mᵀ`.
pub fn leading_left_singular_vectors<T: Real>(
    m: &DMatrix<T>,
    r: usize,
) -> Result<LeadingVectors<T>> {
    let (rows, cols) = m.shape();
    if r == 0 || r > rows.min(cols) {
        return Err(Error::invalid(
            "rank",
            format!("need 1 <= r <= min({rows}, {cols}), got {r}"),
        ));
    }
    let mut lv = leading_from_gram(&(m * m.transpose()), r)?;
    lv.singular_values.truncate(rows.min(cols));
    Ok(lv)
}

/// Leading eigenvectors of a Gram matrix `m mᵀ`, reported as left singular
/// vectors of `m`.
pub fn leading_from_gram<T: Real>(gram: &DMatrix<T>, r: usize) -> Result<LeadingVectors<T>> {
    let n = gram.nrows();
    if !gram.is_square() {
        return Err(Error::dims("leading_from_gram", (n, n), gram.shape()));
    }
    if r == 0 || r > n {
        return Err(Error::invalid("rank", format!("need 1 <= r <= {n}, got {r}")));
    }
    if !gram.iter().all(|v| v.is_finite_value()) {
        return Err(Error::Numerical("non-finite Gram matrix".into()));
    }
    let (values, vectors) = sym_eigen_desc(gram);
    let singular_values: Vec<T> = values.iter().map(|v| v.max(T::zero()).sqrt()).collect();
    let vectors = vectors.columns(0, r).into_owned();

    let k = singular_values.len();
    let scale = singular_values[0].max(T::tiny());
    let tol = T::lit(1e-10) * scale;
    let upto = (r + 1).min(k);
    let degenerate = singular_values[..upto]
        .windows(2)
        .any(|w| (w[0] - w[1]).abs() <= tol && w[0] > tol);
    if degenerate {
        log::warn!(
            "repeated singular values among the leading {r}; the singular vectors are \
             determined only up to rotation within the invariant subspace"
        );
    }
    Ok(LeadingVectors {
        vectors,
        singular_values,
        degenerate,
    })
}

/// Sine of the largest principal angle between the column spaces of two
/// column-orthonormal matrices with the same number of columns.
pub fn max_principal_angle_sin<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    let residual = b - a * (a.transpose() * b);
    spectral_norm(&residual).min(T::one())
}

/// Largest singular value.
pub fn spectral_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    singular_values_desc(m)[0]
}

/// `max |a_ij|`.
pub fn max_abs<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}

pub fn is_positive_definite<T: Real>(m: &DMatrix<T>) -> bool {
    m.is_square() && nalgebra::Cholesky::new(symmetrize(m)).is_some()
}

/// `m^{-1/2}` of a symmetric positive definite matrix; `None` if any
/// eigenvalue is not strictly positive.
pub fn inv_sqrt_spd<T: Real>(m: &DMatrix<T>) -> Option<DMatrix<T>> {
    let (values, vectors) = sym_eigen_desc(m);
    let n = values.len();
    if n == 0 || values[n - 1] <= T::zero() {
        return None;
    }
    let scaled = DMatrix::from_fn(n, n, |i, k| vectors[(i, k)] / values[k].sqrt());
    Some(symmetrize(&(scaled * vectors.transpose())))
}

/// Replaces eigenvalues below `floor` by `floor`.
pub fn floor_eigenvalues<T: Real>(m: &DMatrix<T>, floor: T) -> DMatrix<T> {
    let (values, vectors) = sym_eigen_desc(m);
    let n = values.len();
    let scaled = DMatrix::from_fn(n, n, |i, k| vectors[(i, k)] * values[k].max(floor));
    symmetrize(&(scaled * vectors.transpose()))
}

/// Symmetric square-root factor `U √Λ` (p × rank) of a PSD matrix, dropping
/// null directions. Eigenvalues below `-tol` are rejected.
pub fn psd_root<T: Real>(m: &DMatrix<T>, tol: T) -> Result<DMatrix<T>> {
    let (values, vectors) = sym_eigen_desc(m);
    let n = values.len();
    if n > 0 && values[n - 1] < -tol {
        return Err(Error::NotPositiveSemidefinite(format!(
            "smallest eigenvalue {} below tolerance -{}",
            values[n - 1],
            tol
        )));
    }
    let keep: Vec<usize> = (0..n).filter(|&k| values[k] > tol).collect();
    Ok(DMatrix::from_fn(n, keep.len(), |i, c| {
        vectors[(i, keep[c])] * values[keep[c]].sqrt()
    }))
}

/// Minimum-norm least squares solution of `a x = b` through the
/// eigendecomposition of `aᵀa`; directions with eigenvalue below
/// `1e-12 · λ_max` are treated as null.
pub fn lstsq<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>> {
    if a.nrows() != b.nrows() {
        return Err(Error::dims("lstsq", a.nrows(), b.nrows()));
    }
    let n = a.ncols();
    let (values, vectors) = sym_eigen_desc(&(a.transpose() * a));
    if n == 0 || !(values[0] > T::zero()) {
        return Ok(DMatrix::zeros(n, b.ncols()));
    }
    let cut = T::lit(1e-12) * values[0];
    let keep = values.iter().take_while(|&&v| v > cut).count();
    let v = vectors.columns(0, keep);
    let inv = DMatrix::from_diagonal(&DVector::from_iterator(keep, values.iter().take(keep).map(|&l| T::one() / l)));
    Ok(v * inv * (v.transpose() * (a.transpose() * b)))
}

/// Solves a square linear system with partial-pivot LU.
pub fn solve_square<T: Real>(a: DMatrix<T>, b: &DVector<T>) -> Option<DVector<T>> {
    a.lu().solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_convention_is_idempotent() {
        let mut m = DMatrix::from_row_slice(3, 2, &[0.1, -0.5, -0.9, 0.5, 0.3, 0.2]);
        normalize_column_signs(&mut m);
        assert!(m[(1, 0)] > 0.0);
        // tie between rows 0 and 1 of column 1 goes to row 0
        assert!(m[(0, 1)] > 0.0);
        let once = m.clone();
        normalize_column_signs(&mut m);
        assert_eq!(once, m);
    }

    #[test]
    fn diagonal_leading_vectors() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let lv = leading_left_singular_vectors(&m, 2).unwrap();
        let expected = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!((lv.vectors - expected).abs().max() < 1e-12);
        assert!(!lv.degenerate);
    }

    #[test]
    fn rank_one_leading_vector_has_fixed_sign() {
        let u = DVector::from_vec(vec![1.0, -2.0, 2.0]);
        let v = DVector::from_vec(vec![0.5, 1.0, -1.0, 3.0]);
        let m = &u * v.transpose();
        let lv = leading_left_singular_vectors(&(-m), 1).unwrap();
        let un = u.normalize();
        // largest |entry| is -2 at row 1 (tie with row 2 broken by lower index)
        let expected = -un;
        assert!((lv.vectors.column(0) - expected).abs().max() < 1e-12);
    }

    #[test]
    fn repeated_singular_values_are_flagged() {
        let m = DMatrix::<f64>::identity(3, 3);
        assert!(leading_left_singular_vectors(&m, 1).unwrap().degenerate);
    }

    #[test]
    fn rank_out_of_range_rejected() {
        let m = DMatrix::<f64>::identity(2, 3);
        assert!(leading_left_singular_vectors(&m, 3).is_err());
        assert!(leading_left_singular_vectors(&m, 0).is_err());
    }

    #[test]
    fn spectral_truncation_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 1.0, 0.1]));
        let t = spectral_truncate(&m, 1);
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 0.0, 0.0]));
        assert!((t - expected).abs().max() < 1e-12);
    }

    #[test]
    fn inverse_square_root() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = inv_sqrt_spd(&m).unwrap();
        let back = &r * &m * &r;
        assert!((back - DMatrix::identity(2, 2)).abs().max() < 1e-12);
        assert!(inv_sqrt_spd(&DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])).is_none());
    }

    #[test]
    fn works_in_single_precision() {
        let m = DMatrix::<f32>::from_row_slice(2, 3, &[3.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let lv = leading_left_singular_vectors(&m, 1).unwrap();
        assert!((lv.vectors[(0, 0)] - 1.0).abs() < 1e-6);
    }
}
