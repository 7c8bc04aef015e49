//! Additive polynomial sieve basis and the projection onto its column space.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen_desc;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    /// `φ(x) = (x₁, x₁², …, x₁ᴶ, …, x_d, …, x_dᴶ)`.
    #[default]
    AdditivePolynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SieveSpec {
    /// Sieve terms per covariate, `J`.
    pub j_terms: usize,
    pub basis: BasisKind,
    /// Adds a constant column. Without it the basis columns are only rescaled,
    /// never centered, so the constant level stays representable through the
    /// degree-1 terms.
    pub intercept: bool,
}

impl Default for SieveSpec {
    fn default() -> Self {
        Self {
            j_terms: 2,
            basis: BasisKind::AdditivePolynomial,
            intercept: false,
        }
    }
}

/// Covariates, basis matrix and projection `P = Φ(ΦᵀΦ)⁻¹Φᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SieveDesign<T: Real> {
    pub spec: SieveSpec,
    /// `D × d` covariates.
    pub x: DMatrix<T>,
    /// Standardized basis, `D × (Jd [+1])`.
    pub phi: DMatrix<T>,
    /// `D × D` projection onto `col(Φ)`.
    pub projection: DMatrix<T>,
    /// Per raw basis column: `(center, scale)` used for standardization.
    pub standardization: Vec<(T, T)>,
    /// Per covariate: training mean and standard deviation.
    pub covariate_stats: Vec<(T, T)>,
}

fn column_name(c: usize, k: usize) -> String {
    if k == 1 {
        format!("x{}", c + 1)
    } else {
        format!("x{}^{}", c + 1, k)
    }
}

fn raw_basis_row<T: Real>(x: &[T], j_terms: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len() * j_terms);
    for &v in x {
        let mut pow = v;
        for _ in 0..j_terms {
            out.push(pow);
            pow *= v;
        }
    }
    out
}

/// Builds the sieve design from `D × d` covariates.
pub fn build_sieve<T: Real>(x: &DMatrix<T>, spec: SieveSpec) -> Result<SieveDesign<T>> {
    let (days, d) = x.shape();
    if spec.j_terms == 0 || d == 0 {
        return Err(Error::invalid("sieve", "need J >= 1 and at least one covariate"));
    }
    let n_cols = spec.j_terms * d + usize::from(spec.intercept);
    if days <= n_cols {
        return Err(Error::invalid(
            "sieve",
            format!("need D > J·d (+ intercept): D = {days}, basis columns = {n_cols}"),
        ));
    }
    if !x.iter().all(|v| v.is_finite_value()) {
        return Err(Error::invalid("covariates", "non-finite entry"));
    }

    let n = T::from_count(days);
    let mut covariate_stats = Vec::with_capacity(d);
    for c in 0..d {
        let col = x.column(c);
        let mean = col.sum() / n;
        let var = col.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / n;
        if var <= T::zero() {
            return Err(Error::RankDeficientBasis {
                columns: vec![format!("x{} (constant covariate)", c + 1)],
            });
        }
        covariate_stats.push((mean, var.sqrt()));
    }

    let raw_cols = spec.j_terms * d;
    let raw = DMatrix::from_fn(days, raw_cols, |l, k| {
        let c = k / spec.j_terms;
        let power = (k % spec.j_terms) as i32 + 1;
        x[(l, c)].powi(power)
    });
    let mut standardization = Vec::with_capacity(raw_cols);
    for k in 0..raw_cols {
        let col = raw.column(k);
        let center = if spec.intercept {
            col.sum() / n
        } else {
            T::zero()
        };
        let ms = col.iter().fold(T::zero(), |a, &v| a + (v - center) * (v - center)) / n;
        let scale = if ms > T::zero() { ms.sqrt() } else { T::one() };
        standardization.push((center, scale));
    }

    let mut phi = DMatrix::zeros(days, n_cols);
    for k in 0..raw_cols {
        let (center, scale) = standardization[k];
        for l in 0..days {
            phi[(l, k)] = (raw[(l, k)] - center) / scale;
        }
    }
    if spec.intercept {
        phi.column_mut(raw_cols).fill(T::one());
    }

    let (values, vectors) = sym_eigen_desc(&(phi.transpose() * &phi));
    let lmin = values[n_cols - 1];
    if !(lmin > T::lit(1e-12) * values[0]) {
        let null = vectors.column(n_cols - 1);
        let big = null.iter().fold(T::zero(), |a, v| a.max(v.abs()));
        let columns = (0..n_cols)
            .filter(|&k| null[k].abs() >= T::lit(0.1) * big)
            .map(|k| {
                if k == raw_cols {
                    "intercept".to_string()
                } else {
                    column_name(k / spec.j_terms, k % spec.j_terms + 1)
                }
            })
            .collect();
        return Err(Error::RankDeficientBasis { columns });
    }
    let q = phi.clone().qr().q();
    let projection = &q * q.transpose();

    Ok(SieveDesign {
        spec,
        x: x.clone(),
        phi,
        projection,
        standardization,
        covariate_stats,
    })
}

impl<T: Real> SieveDesign<T> {
    pub fn n_days(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_covariates(&self) -> usize {
        self.x.ncols()
    }

    /// Standardized basis row `φ(x)` using the training statistics.
    pub fn basis_row(&self, x: &[T]) -> Result<DVector<T>> {
        if x.len() != self.n_covariates() {
            return Err(Error::dims("basis_row", self.n_covariates(), x.len()));
        }
        let raw = raw_basis_row(x, self.spec.j_terms);
        let mut out: Vec<T> = raw
            .iter()
            .zip(&self.standardization)
            .map(|(&v, &(c, s))| (v - c) / s)
            .collect();
        if self.spec.intercept {
            out.push(T::one());
        }
        Ok(DVector::from_vec(out))
    }

    /// `(ΦᵀΦ)⁻¹Φᵀ g`.
    pub fn coefficients(&self, g: &DMatrix<T>) -> Result<DMatrix<T>> {
        crate::linalg::lstsq(&self.phi, g)
    }

    /// Covariates outside `mean ± limit·sd` of the training sample.
    pub fn out_of_range(&self, x: &[T], limit: T) -> Vec<usize> {
        x.iter()
            .zip(&self.covariate_stats)
            .enumerate()
            .filter(|(_, (&v, &(mean, sd)))| (v - mean).abs() > limit * sd)
            .map(|(c, _)| c)
            .collect()
    }
}

/// Lagged HAR covariates from a series of daily realized top eigenvalues.
///
/// Row `r` corresponds to day index `first + r` (0-based into `eigs`) and
/// holds `(λ_{l−1}, mean λ_{l−5..l−1}, mean λ_{l−21..l−1})`, so it only uses
/// information available before that day. `first + count` may equal
/// `eigs.len()`, giving the covariates for the day after the sample.
pub fn har_covariates<T: Real>(eigs: &[T], first: usize, count: usize) -> Result<DMatrix<T>> {
    if first < 21 {
        return Err(Error::InsufficientData {
            context: "HAR covariates need 21 prior days",
            required: 21,
            actual: first,
        });
    }
    if first + count > eigs.len() + 1 {
        return Err(Error::InsufficientData {
            context: "HAR covariates beyond the eigenvalue series",
            required: first + count - 1,
            actual: eigs.len(),
        });
    }
    let mean = |s: &[T]| s.iter().fold(T::zero(), |a, &v| a + v) / T::from_count(s.len());
    Ok(DMatrix::from_fn(count, 3, |r, c| {
        let l = first + r;
        match c {
            0 => eigs[l - 1],
            1 => mean(&eigs[l - 5..l]),
            _ => mean(&eigs[l - 21..l]),
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_covariate_projection_fixes_itself() {
        let x = DMatrix::from_column_slice(6, 1, &[1.0, 3.0, 2.0, 5.0, 4.0, 7.0]);
        let spec = SieveSpec {
            j_terms: 1,
            ..SieveSpec::default()
        };
        let s = build_sieve(&x, spec).unwrap();
        let xt = s.phi.column(0).into_owned();
        assert!((&s.projection * &xt - &xt).abs().max() < 1e-12);
    }

    #[test]
    fn full_basis_is_rejected() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let spec = SieveSpec {
            j_terms: 2,
            ..SieveSpec::default()
        };
        assert!(build_sieve(&x, spec).is_err());
    }

    #[test]
    fn collinear_columns_are_named() {
        let x = DMatrix::from_fn(10, 2, |l, c| (l as f64 + 1.0) * (c as f64 + 1.0));
        let spec = SieveSpec {
            j_terms: 1,
            ..SieveSpec::default()
        };
        match build_sieve(&x, spec) {
            Err(Error::RankDeficientBasis { columns }) => {
                assert_eq!(columns, vec!["x1".to_string(), "x2".to_string()]);
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn constant_covariate_rejected() {
        let x = DMatrix::from_element(10, 1, 2.0);
        assert!(matches!(
            build_sieve(&x, SieveSpec::default()),
            Err(Error::RankDeficientBasis { .. })
        ));
    }

    #[test]
    fn basis_row_reproduces_training_rows() {
        let x = DMatrix::from_fn(12, 2, |l, c| ((l * 7 + c * 3) % 11) as f64 + 0.5 * c as f64);
        for intercept in [false, true] {
            let spec = SieveSpec {
                intercept,
                ..SieveSpec::default()
            };
            let s = build_sieve(&x, spec).unwrap();
            for l in 0..12 {
                let row: Vec<f64> = x.row(l).iter().copied().collect();
                let b = s.basis_row(&row).unwrap();
                assert!((b.transpose() - s.phi.row(l)).abs().max() < 1e-12);
            }
        }
    }

    #[test]
    fn har_covariates_use_past_only() {
        let eigs: Vec<f64> = (0..30).map(|v| v as f64).collect();
        let x = har_covariates(&eigs, 21, 10).unwrap();
        // day 21: yesterday = 20, week mean = 18, month mean = 10
        assert_eq!(x.row(0).iter().copied().collect::<Vec<_>>(), vec![20.0, 18.0, 10.0]);
        // last row is the day after the sample
        assert_eq!(x[(9, 0)], 29.0);
        assert!(har_covariates(&eigs, 20, 1).is_err());
        assert!(har_covariates(&eigs, 21, 11).is_err());
    }
}
