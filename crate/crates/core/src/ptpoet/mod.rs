//! Projected tensor factor model: fit and one-day-ahead prediction.
//!
//! Given daily volatility estimates `𝒴̂` (p × p × D) and a sieve design on
//! time covariates, [`fit`] runs
//!
//! 1. rank-`r1` spectral truncation of every slice → `𝒮̄`;
//! 2. projection along time `𝒮̃ = 𝒮̄ ×₃ P` and `Q̂` from the mode-1 unfolding;
//! 3. `Ĝ` from the mode-3 unfolding and sieve coefficients `Â`;
//! 4. core `ℱ̂ = 𝒮̃ ×₁ Q̂ᵀ ×₂ Q̂ᵀ ×₃ Ĝᵀ` and residuals `𝒴̂ − 𝒮̂`;
//! 5. adaptive thresholding of every residual slice.
//!
//! [`PtPoetModel::predict`] then combines `ℱ̂ ×₁ Q̂ ×₂ Q̂ ×₃ ĝ(x)` with the
//! idiosyncratic estimate.

mod rank;
mod sieve;
mod threshold;

pub use rank::{
    penalized_objective, rank_from_singular_values, select_rank, select_rank_penalized,
    PenaltyConfig, RankCriterion,
};
pub use sieve::{build_sieve, har_covariates, BasisKind, SieveDesign, SieveSpec};
pub use threshold::{threshold_matrix, ThresholdRule};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{floor_eigenvalues, leading_from_gram, spectral_truncate, symmetrize};
use crate::scalar::Real;
use crate::tensor::{tucker_reconstruct, Mode, Tensor3};

/// Which idiosyncratic estimate enters the prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdioTarget {
    /// Average of the thresholded residuals over the sample.
    #[default]
    Average,
    /// Thresholded residual of the last sample day.
    LastDay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitParams {
    pub r1: usize,
    pub r2: usize,
    pub tau: f64,
    pub rule: ThresholdRule,
    #[serde(default)]
    pub sector_labels: Option<Vec<String>>,
}

impl FitParams {
    pub fn new(r1: usize, r2: usize, tau: f64, rule: ThresholdRule) -> Self {
        Self {
            r1,
            r2,
            tau,
            rule,
            sector_labels: None,
        }
    }
}

/// `√(2 log p / √m)`.
pub fn default_tau(p: usize, m: usize) -> f64 {
    (2.0 * (p as f64).ln() / (m as f64).sqrt()).sqrt()
}

/// Rank-`r1` spectral truncation of every frontal slice.
pub fn spectral_truncate_days<T: Real>(y_hat: &Tensor3<T>, r1: usize) -> Result<Tensor3<T>> {
    let [p, p2, _] = y_hat.dims();
    if p != p2 {
        return Err(Error::dims("spectral_truncate_days", (p, p), (p, p2)));
    }
    if r1 == 0 || r1 > p {
        return Err(Error::invalid("r1", format!("need 1 <= r1 <= p = {p}, got {r1}")));
    }
    let slices: Vec<DMatrix<T>> = (0..y_hat.n_slices())
        .into_par_iter()
        .map(|l| spectral_truncate(&y_hat.slice(l), r1))
        .collect();
    Tensor3::from_slices(&slices)
}

/// Output of the tensor decomposition shared by the projected and the
/// unprojected procedures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorFit<T: Real> {
    pub q_hat: DMatrix<T>,
    pub g_hat: DMatrix<T>,
    pub core: Tensor3<T>,
    pub idio_hats: Vec<DMatrix<T>>,
    pub idio_mean: DMatrix<T>,
}

impl<T: Real> TensorFit<T> {
    /// `ℱ̂ ×₁ Q̂ ×₂ Q̂ ×₃ g` for a single time-loading row `g` (length r2).
    pub fn factor_matrix(&self, g: &[T]) -> Result<DMatrix<T>> {
        let row = DMatrix::from_row_slice(1, g.len(), g);
        Ok(symmetrize(&tucker_reconstruct(&self.core, &self.q_hat, &row)?.slice(0)))
    }

    /// `𝒮̂ = ℱ̂ ×₁ Q̂ ×₂ Q̂ ×₃ Ĝ`.
    pub fn factor_tensor(&self) -> Result<Tensor3<T>> {
        tucker_reconstruct(&self.core, &self.q_hat, &self.g_hat)
    }
}

/// Steps 1–5 with an optional time projection (`None` = no projection).
pub fn decompose<T: Real>(
    y_hat: &Tensor3<T>,
    projection: Option<&DMatrix<T>>,
    params: &FitParams,
) -> Result<TensorFit<T>> {
    let [p, _, days] = y_hat.dims();
    if !y_hat.is_finite() {
        return Err(Error::invalid("y_hat", "non-finite entries"));
    }
    if params.r1 == 0 || params.r1 > p {
        return Err(Error::invalid("r1", format!("need 1 <= r1 <= p = {p}")));
    }
    if params.r2 == 0 || params.r2 > days {
        return Err(Error::invalid("r2", format!("need 1 <= r2 <= D = {days}")));
    }
    if params.r1 * params.r1 < params.r2 {
        return Err(Error::invalid("r2", "r2 cannot exceed r1² (mode-3 rank bound)"));
    }
    if !(params.tau >= 0.0) {
        return Err(Error::invalid("tau", "must be >= 0"));
    }
    if let Some(proj) = projection {
        if proj.shape() != (days, days) {
            return Err(Error::dims("projection", (days, days), proj.shape()));
        }
    }

    let truncated = spectral_truncate_days(y_hat, params.r1)?;
    let projected = match projection {
        Some(proj) => truncated.mode_product(proj, Mode::Three)?,
        None => truncated,
    };
    let q_hat = leading_from_gram(&projected.gram(Mode::One), params.r1)?.vectors;
    let g_hat = leading_from_gram(&projected.gram(Mode::Three), params.r2)?.vectors;
    let core = projected
        .mode_product(&q_hat.transpose(), Mode::One)?
        .mode_product(&q_hat.transpose(), Mode::Two)?
        .mode_product(&g_hat.transpose(), Mode::Three)?;
    let factor = tucker_reconstruct(&core, &q_hat, &g_hat)?;
    let resid = y_hat.sub(&factor)?;

    let tau = T::lit(params.tau);
    let sectors = params.sector_labels.as_deref();
    let idio_hats = (0..days)
        .into_par_iter()
        .map(|l| threshold_matrix(&symmetrize(&resid.slice(l)), tau, params.rule, sectors))
        .collect::<Result<Vec<_>>>()?;
    let idio_mean = idio_hats
        .iter()
        .fold(DMatrix::zeros(p, p), |acc, s| acc + s)
        / T::from_count(days);

    Ok(TensorFit {
        q_hat,
        g_hat,
        core,
        idio_hats,
        idio_mean,
    })
}

/// Fitted projected tensor factor model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtPoetModel<T: Real> {
    pub r1: usize,
    pub r2: usize,
    pub tau: f64,
    pub rule: ThresholdRule,
    pub fit: TensorFit<T>,
    /// `(ΦᵀΦ)⁻¹ΦᵀĜ`, `(Jd) × r2`.
    pub a_hat: DMatrix<T>,
    pub sieve: SieveDesign<T>,
}

/// Prediction options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictOptions {
    pub idio: IdioTarget,
    /// Eigenvalue floor applied to the prediction (`None` = no repair).
    pub psd_floor: Option<f64>,
    /// Covariates further than this many training standard deviations from
    /// the training mean raise a warning.
    pub extrapolation_sds: f64,
}

impl Default for PredictOptions {
    fn default() -> Self {
        Self {
            idio: IdioTarget::Average,
            psd_floor: None,
            extrapolation_sds: 10.0,
        }
    }
}

impl PredictOptions {
    pub fn psd(floor: f64) -> Self {
        Self {
            psd_floor: Some(floor),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T: Real> {
    pub matrix: DMatrix<T>,
    /// `ĝ(x)`, one entry per time loading.
    pub loading: Vec<T>,
    /// Indices of covariates that tripped the extrapolation guard.
    pub extrapolated: Vec<usize>,
}

/// Fits the projected tensor factor model.
pub fn fit<T: Real>(y_hat: &Tensor3<T>, sieve: &SieveDesign<T>, params: &FitParams) -> Result<PtPoetModel<T>> {
    let days = y_hat.n_slices();
    if sieve.n_days() != days {
        return Err(Error::dims("fit: sieve rows vs days", days, sieve.n_days()));
    }
    let fit = decompose(y_hat, Some(&sieve.projection), params)?;
    let a_hat = sieve.coefficients(&fit.g_hat)?;
    Ok(PtPoetModel {
        r1: params.r1,
        r2: params.r2,
        tau: params.tau,
        rule: params.rule,
        fit,
        a_hat,
        sieve: sieve.clone(),
    })
}

impl<T: Real> PtPoetModel<T> {
    pub fn q_hat(&self) -> &DMatrix<T> {
        &self.fit.q_hat
    }

    pub fn g_hat(&self) -> &DMatrix<T> {
        &self.fit.g_hat
    }

    pub fn core(&self) -> &Tensor3<T> {
        &self.fit.core
    }

    /// `ĝ(x) = φ(x)ᵀÂ`.
    pub fn loading_at(&self, x: &[T]) -> Result<Vec<T>> {
        let phi = self.sieve.basis_row(x)?;
        let g: DVector<T> = self.a_hat.transpose() * phi;
        Ok(g.iter().copied().collect())
    }

    pub fn predict(&self, x_next: &[T], opts: &PredictOptions) -> Result<Prediction<T>> {
        if !x_next.iter().all(|v| v.is_finite_value()) {
            return Err(Error::invalid("x_next", "non-finite covariate"));
        }
        let extrapolated = self.sieve.out_of_range(x_next, T::lit(opts.extrapolation_sds));
        if !extrapolated.is_empty() {
            log::warn!(
                "covariates {extrapolated:?} lie more than {} training sds from the mean",
                opts.extrapolation_sds
            );
        }
        let loading = self.loading_at(x_next)?;
        let factor = self.fit.factor_matrix(&loading)?;
        let idio = match opts.idio {
            IdioTarget::Average => &self.fit.idio_mean,
            IdioTarget::LastDay => self.fit.idio_hats.last().expect("D >= 1"),
        };
        let mut matrix = symmetrize(&(factor + idio));
        if let Some(floor) = opts.psd_floor {
            matrix = floor_eigenvalues(&matrix, T::lit(floor));
        }
        Ok(Prediction {
            matrix,
            loading,
            extrapolated,
        })
    }
}
