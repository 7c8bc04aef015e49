//! Entry-adaptive thresholding of idiosyncratic volatility matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// `sign(z)(|z| − τ_ij)₊` for entries with `|z| ≥ τ_ij`.
    #[default]
    Soft,
    /// `z` for entries with `|z| ≥ τ_ij`.
    Hard,
    /// Keep within-sector entries, zero cross-sector entries.
    SectorHard,
}

/// Thresholds one residual matrix. The diagonal is clamped at zero and the
/// off-diagonal threshold is `τ_ij = τ √((Σ_ii ∨ 0)(Σ_jj ∨ 0))`.
pub fn threshold_matrix<T: Real>(
    resid: &DMatrix<T>,
    tau: T,
    rule: ThresholdRule,
    sectors: Option<&[String]>,
) -> Result<DMatrix<T>> {
    let p = resid.nrows();
    if !resid.is_square() {
        return Err(Error::dims("threshold_matrix", (p, p), resid.shape()));
    }
    if !(tau >= T::zero()) {
        return Err(Error::invalid("tau", "must be >= 0"));
    }
    if rule == ThresholdRule::SectorHard {
        match sectors {
            Some(s) if s.len() == p => {}
            Some(s) => return Err(Error::dims("sector labels", p, s.len())),
            None => {
                return Err(Error::invalid(
                    "sector_labels",
                    "required by the sector-hard rule",
                ))
            }
        }
    }
    let diag: Vec<T> = (0..p).map(|i| resid[(i, i)].max(T::zero())).collect();
    let infinite = !tau.is_finite_value();
    let mut out = DMatrix::zeros(p, p);
    for j in 0..p {
        for i in 0..p {
            if i == j {
                out[(i, i)] = diag[i];
                continue;
            }
            let z = (resid[(i, j)] + resid[(j, i)]) * T::lit(0.5);
            out[(i, j)] = match rule {
                ThresholdRule::SectorHard => {
                    let s = sectors.expect("checked above");
                    if s[i] == s[j] {
                        z
                    } else {
                        T::zero()
                    }
                }
                _ if infinite => T::zero(),
                ThresholdRule::Hard | ThresholdRule::Soft => {
                    let t = tau * (diag[i] * diag[j]).sqrt();
                    if z.abs() >= t {
                        if rule == ThresholdRule::Soft {
                            z.signum() * (z.abs() - t).max(T::zero())
                        } else {
                            z
                        }
                    } else {
                        T::zero()
                    }
                }
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[4.0, 1.0, -0.1, 1.0, 1.0, 0.3, -0.1, 0.3, -0.2])
    }

    #[test]
    fn zero_tau_only_clamps_diagonal() {
        let out = threshold_matrix(&sample(), 0.0, ThresholdRule::Soft, None).unwrap();
        let mut expected = sample();
        expected[(2, 2)] = 0.0;
        assert_eq!(out, expected);
    }

    #[test]
    fn soft_and_hard_rules() {
        let s = sample();
        // τ_01 = 0.4·√(4·1) = 0.8
        let soft = threshold_matrix(&s, 0.4, ThresholdRule::Soft, None).unwrap();
        assert!((soft[(0, 1)] - 0.2).abs() < 1e-12);
        let hard = threshold_matrix(&s, 0.4, ThresholdRule::Hard, None).unwrap();
        assert_eq!(hard[(0, 1)], 1.0);
        // asset 2 has a negative diagonal so τ_2j = 0 and entries survive
        assert_eq!(hard[(1, 2)], 0.3);
        assert!((soft[(1, 2)] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn infinite_tau_leaves_diagonal() {
        let out = threshold_matrix(&sample(), f64::INFINITY, ThresholdRule::Hard, None).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(out[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn sector_rule() {
        let labels: Vec<String> = ["a", "a", "b"].iter().map(|s| s.to_string()).collect();
        let out = threshold_matrix(&sample(), 10.0, ThresholdRule::SectorHard, Some(&labels)).unwrap();
        assert_eq!(out[(0, 1)], 1.0);
        assert_eq!(out[(0, 2)], 0.0);
        assert_eq!(out[(1, 2)], 0.0);
        assert!(threshold_matrix(&sample(), 0.0, ThresholdRule::SectorHard, None).is_err());
    }
}
