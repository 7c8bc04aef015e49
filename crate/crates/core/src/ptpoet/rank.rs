//! Rank selection for the loading dimensions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen_desc;
use crate::scalar::Real;
use crate::tensor::{Mode, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankCriterion {
    /// `argmax_k σ_k − σ_{k+1}`.
    Gap,
    /// `argmax_k σ_k / σ_{k+1}`.
    Ratio,
}

/// Applies a criterion to a decreasing sequence of singular values. Needs
/// `sv.len() > r_max`. Returns a 1-based rank; ties go to the smaller rank.
pub fn rank_from_singular_values<T: Real>(sv: &[T], r_max: usize, criterion: RankCriterion) -> usize {
    let mut best = 1usize;
    let mut best_score = T::min_value().unwrap_or_else(T::zero);
    for k in 1..=r_max.min(sv.len().saturating_sub(1)) {
        let (a, b) = (sv[k - 1], sv[k]);
        let score = match criterion {
            RankCriterion::Gap => a - b,
            RankCriterion::Ratio => {
                if b > T::zero() {
                    a / b
                } else if a > T::zero() {
                    T::max_value().unwrap_or_else(T::one)
                } else {
                    T::zero()
                }
            }
        };
        if score > best_score {
            best_score = score;
            best = k;
        }
    }
    best
}

/// Rank along `mode` (1 or 3) from the singular values of the unfolding.
pub fn select_rank<T: Real>(
    y_hat: &Tensor3<T>,
    mode: Mode,
    r_max: usize,
    criterion: RankCriterion,
) -> Result<usize> {
    if mode == Mode::Two {
        return Err(Error::invalid("mode", "rank selection uses mode 1 or mode 3"));
    }
    let [n1, n2, n3] = y_hat.dims();
    let (rows, cols) = match mode {
        Mode::Three => (n3, n1 * n2),
        _ => (n1, n2 * n3),
    };
    let min_dim = rows.min(cols);
    if r_max == 0 || r_max >= min_dim {
        return Err(Error::invalid(
            "r_max",
            format!("need 1 <= r_max < {min_dim}, got {r_max}"),
        ));
    }
    let (eigs, _) = sym_eigen_desc(&y_hat.gram(mode));
    let sv: Vec<T> = eigs.iter().map(|v| v.max(T::zero()).sqrt()).collect();
    Ok(rank_from_singular_values(&sv, r_max, criterion))
}

/// Settings for the penalized eigenvalue criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltyConfig {
    pub r_max: usize,
    /// `c₁ = c1_scale · ξ_{d, r_max}` for each day `d`.
    pub c1_scale: f64,
    pub c2: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            r_max: 20,
            c1_scale: 0.15,
            c2: 0.5,
        }
    }
}

/// Objective values for `j = 1..=r_max` given per-day eigenvalues (each
/// sorted decreasingly, at least `r_max` long).
pub fn penalized_objective(eigs: &[Vec<f64>], p: usize, m: usize, cfg: &PenaltyConfig) -> Vec<f64> {
    let pf = p as f64;
    let lp = pf.ln();
    let h = ((lp / (m as f64).sqrt() + lp / pf).sqrt()).powf(cfg.c2);
    (1..=cfg.r_max)
        .map(|j| {
            eigs.iter()
                .map(|xi| {
                    let c1 = cfg.c1_scale * xi[cfg.r_max - 1];
                    xi[j - 1] / pf + j as f64 * c1 * h
                })
                .sum()
        })
        .collect()
}

/// Penalized eigenvalue criterion, `argmin_j objective(j) − 1`, floored at 1.
pub fn select_rank_penalized<T: Real>(y_hat: &Tensor3<T>, m: usize, cfg: &PenaltyConfig) -> Result<usize> {
    let [p, p2, _] = y_hat.dims();
    if p != p2 {
        return Err(Error::dims("select_rank_penalized", (p, p), (p, p2)));
    }
    if cfg.r_max < 2 {
        return Err(Error::invalid("r_max", "must be at least 2"));
    }
    let mut cfg = *cfg;
    if p < cfg.r_max {
        log::warn!("r_max = {} exceeds p = {p}; lowering r_max to p", cfg.r_max);
        cfg.r_max = p;
    }
    let eigs: Vec<Vec<f64>> = (0..y_hat.n_slices())
        .map(|l| {
            let (values, _) = sym_eigen_desc(&y_hat.slice(l));
            values.iter().map(|v| v.as_f64()).collect()
        })
        .collect();
    let obj = penalized_objective(&eigs, p, m, &cfg);
    let mut arg = 0usize;
    for (j, &v) in obj.iter().enumerate() {
        if v < obj[arg] {
            arg = j;
        }
    }
    // arg is 0-based, so arg + 1 − 1 = arg.
    Ok(arg.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn gap_and_ratio_on_fixed_spectra() {
        let sv = [10.0, 9.0, 1.0, 0.9, 0.5, 0.1];
        assert_eq!(rank_from_singular_values(&sv, 4, RankCriterion::Gap), 2);
        let sv = [10.0, 1.0, 0.99, 0.98, 0.5];
        assert_eq!(rank_from_singular_values(&sv, 3, RankCriterion::Ratio), 1);
    }

    #[test]
    fn r_max_must_be_below_dimension() {
        let t = Tensor3::<f64>::zeros(3, 3, 4);
        assert!(select_rank(&t, Mode::One, 3, RankCriterion::Gap).is_err());
        assert!(select_rank(&t, Mode::Three, 3, RankCriterion::Gap).is_ok());
    }

    fn diag_tensor(values: &[f64], days: usize) -> Tensor3<f64> {
        let s = DMatrix::from_diagonal(&DVector::from_row_slice(values));
        Tensor3::from_slices(&vec![s; days]).unwrap()
    }

    #[test]
    fn equal_eigenvalues_give_one() {
        let t = diag_tensor(&[2.0; 30], 5);
        assert_eq!(select_rank_penalized(&t, 400, &PenaltyConfig::default()).unwrap(), 1);
    }

    #[test]
    fn zero_penalty_gives_r_max_minus_one() {
        let values: Vec<f64> = (0..30).map(|k| 30.0 - k as f64).collect();
        let t = diag_tensor(&values, 4);
        let cfg = PenaltyConfig {
            c1_scale: 0.0,
            ..PenaltyConfig::default()
        };
        assert_eq!(select_rank_penalized(&t, 400, &cfg).unwrap(), 19);
    }

    #[test]
    fn small_p_lowers_r_max() {
        let values: Vec<f64> = (0..5).map(|k| 5.0 - k as f64).collect();
        let t = diag_tensor(&values, 2);
        let cfg = PenaltyConfig {
            c1_scale: 0.0,
            ..PenaltyConfig::default()
        };
        assert_eq!(select_rank_penalized(&t, 400, &cfg).unwrap(), 4);
    }
}
