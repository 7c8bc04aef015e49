//! Comparison predictors: last-day PRVM, POET, unprojected tensor POET and
//! eigenvalue-autoregressive FIVAR variants.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lstsq, spectral_truncate, sym_eigen_desc, symmetrize};
use crate::ptpoet::{decompose, threshold_matrix, FitParams, ThresholdRule};
use crate::scalar::Real;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineMethod {
    #[serde(rename = "PRVM")]
    Prvm,
    #[serde(rename = "POET")]
    Poet,
    #[serde(rename = "TPOET")]
    Tpoet,
    #[serde(rename = "FIVAR")]
    Fivar,
    #[serde(rename = "FIVAR_H")]
    FivarH,
}

impl BaselineMethod {
    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Prvm => "PRVM",
            BaselineMethod::Poet => "POET",
            BaselineMethod::Tpoet => "TPOET",
            BaselineMethod::Fivar => "FIVAR",
            BaselineMethod::FivarH => "FIVAR_H",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSpec {
    pub method: BaselineMethod,
    #[serde(default = "default_r1")]
    pub r1: usize,
    /// Time rank of the unprojected tensor variant.
    #[serde(default = "default_r2")]
    pub r2: usize,
    /// `None` selects `√(2 log p / √m)` where the caller knows `m`.
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub rule: ThresholdRule,
    #[serde(default = "default_eigvec_window")]
    pub eigvec_window: usize,
    #[serde(default = "default_param_window")]
    pub param_window: usize,
    #[serde(default = "default_ar_lag")]
    pub ar_lag: usize,
}

fn default_r1() -> usize {
    3
}
fn default_r2() -> usize {
    1
}
fn default_eigvec_window() -> usize {
    21
}
fn default_param_window() -> usize {
    252
}
fn default_ar_lag() -> usize {
    1
}

impl BaselineSpec {
    pub fn new(method: BaselineMethod) -> Self {
        Self {
            method,
            r1: default_r1(),
            r2: default_r2(),
            tau: None,
            rule: ThresholdRule::Soft,
            eigvec_window: default_eigvec_window(),
            param_window: default_param_window(),
            ar_lag: default_ar_lag(),
        }
    }
}

/// The last slice, `Γ̂_D`.
pub fn predict_prvm_last<T: Real>(y_hat: &Tensor3<T>) -> Result<DMatrix<T>> {
    let d = y_hat.n_slices();
    if d == 0 {
        return Err(Error::InsufficientData {
            context: "PRVM prediction",
            required: 1,
            actual: 0,
        });
    }
    Ok(symmetrize(&y_hat.slice(d - 1)))
}

/// Thresholded residual `T(Γ − trunc_r1(Γ))` of one day.
pub fn poet_residual<T: Real>(
    slice: &DMatrix<T>,
    r1: usize,
    tau: T,
    rule: ThresholdRule,
    sectors: Option<&[String]>,
) -> Result<DMatrix<T>> {
    let low = spectral_truncate(slice, r1);
    threshold_matrix(&symmetrize(&(slice - &low)), tau, rule, sectors)
}

/// Rank-`r1` truncation of the slice plus its thresholded residual.
pub fn predict_poet<T: Real>(
    slice: &DMatrix<T>,
    r1: usize,
    tau: T,
    rule: ThresholdRule,
    sectors: Option<&[String]>,
) -> Result<DMatrix<T>> {
    let p = slice.nrows();
    if !slice.is_square() {
        return Err(Error::dims("predict_poet", (p, p), slice.shape()));
    }
    if r1 == 0 || r1 > p {
        return Err(Error::invalid("r1", format!("need 1 <= r1 <= p = {p}")));
    }
    let low = spectral_truncate(slice, r1);
    let resid = threshold_matrix(&symmetrize(&(slice - &low)), tau, rule, sectors)?;
    Ok(symmetrize(&(low + resid)))
}

/// Tensor decomposition without covariates; the prediction is the day-`D`
/// factor slice `Ŝ_D` plus the day-`D` thresholded residual.
pub fn predict_tpoet<T: Real>(y_hat: &Tensor3<T>, params: &FitParams) -> Result<DMatrix<T>> {
    let (factor, resid) = tpoet_parts(y_hat, params)?;
    Ok(symmetrize(&(factor + resid)))
}

/// `(Ŝ_D, Σ̂_D)` of the unprojected decomposition.
pub fn tpoet_parts<T: Real>(y_hat: &Tensor3<T>, params: &FitParams) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let mut fit = decompose(y_hat, None, params)?;
    let d = y_hat.n_slices();
    let g_last: Vec<T> = fit.g_hat.row(d - 1).iter().copied().collect();
    let factor = fit.factor_matrix(&g_last)?;
    let resid = fit.idio_hats.swap_remove(d - 1);
    Ok((factor, resid))
}

/// Dynamics of each leading eigenvalue series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenDynamics {
    /// AR with the given number of lags.
    Ar(usize),
    /// Regressors: yesterday, weekly mean and monthly mean.
    Har,
}

impl EigenDynamics {
    /// Observations consumed before the first regression target.
    pub fn warmup(self) -> usize {
        match self {
            EigenDynamics::Ar(k) => k,
            EigenDynamics::Har => 21,
        }
    }

    fn n_coefs(self) -> usize {
        match self {
            EigenDynamics::Ar(k) => k,
            EigenDynamics::Har => 3,
        }
    }

    /// Regressors predicting `series[t]` from `series[..t]`.
    fn regressors<T: Real>(self, past: &[T]) -> Vec<T> {
        let t = past.len();
        match self {
            EigenDynamics::Ar(k) => (1..=k).map(|i| past[t - i]).collect(),
            EigenDynamics::Har => {
                let mean = |s: &[T]| s.iter().fold(T::zero(), |a, &v| a + v) / T::from_count(s.len());
                vec![past[t - 1], mean(&past[t - 5..]), mean(&past[t - 21..])]
            }
        }
    }
}

/// Linear autoregression with intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel<T: Real> {
    pub dynamics: EigenDynamics,
    pub intercept: T,
    pub coefs: Vec<T>,
}

impl<T: Real> ArModel<T> {
    /// Ordinary least squares with intercept.
    pub fn fit(series: &[T], dynamics: EigenDynamics) -> Result<Self> {
        let w = dynamics.warmup();
        let k = dynamics.n_coefs();
        if k == 0 {
            return Err(Error::invalid("ar_lag", "must be at least 1"));
        }
        let n = series.len().saturating_sub(w);
        if n < k + 2 {
            return Err(Error::InsufficientData {
                context: "eigenvalue autoregression",
                required: w + k + 2,
                actual: series.len(),
            });
        }
        let mut design = DMatrix::zeros(n, k + 1);
        let mut target = DMatrix::zeros(n, 1);
        for r in 0..n {
            let t = w + r;
            design[(r, 0)] = T::one();
            for (c, v) in dynamics.regressors(&series[..t]).into_iter().enumerate() {
                design[(r, c + 1)] = v;
            }
            target[(r, 0)] = series[t];
        }
        let beta = lstsq(&design, &target)?;
        Ok(Self {
            dynamics,
            intercept: beta[(0, 0)],
            coefs: (1..=k).map(|c| beta[(c, 0)]).collect(),
        })
    }

    /// One-step forecast of the value following `series`.
    pub fn forecast(&self, series: &[T]) -> Result<T> {
        if series.len() < self.dynamics.warmup().max(1) {
            return Err(Error::InsufficientData {
                context: "eigenvalue forecast",
                required: self.dynamics.warmup(),
                actual: series.len(),
            });
        }
        let x = self.dynamics.regressors(series);
        Ok(x.iter()
            .zip(&self.coefs)
            .fold(self.intercept, |a, (&v, &b)| a + v * b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FivarPrediction<T: Real> {
    pub matrix: DMatrix<T>,
    /// `p × r1`, column-orthonormal.
    pub eigenvectors: DMatrix<T>,
    /// Floored eigenvalue forecasts.
    pub forecasts: Vec<T>,
    /// Realized eigenvalue series `ξ_kᵀ Γ̂_l ξ_k` over the parameter window.
    pub series: Vec<Vec<T>>,
    pub models: Vec<ArModel<T>>,
}

/// `diag(Ξᵀ Γ̂_l Ξ)` for each slice in `[start, end)`, one series per column.
pub fn eigenvalue_series<T: Real>(y_hat: &Tensor3<T>, xi: &DMatrix<T>, start: usize, end: usize) -> Vec<Vec<T>> {
    let mut out = vec![Vec::with_capacity(end - start); xi.ncols()];
    for l in start..end {
        let s = y_hat.slice(l);
        for (k, series) in out.iter_mut().enumerate() {
            let v = xi.column(k);
            series.push(v.dot(&(&s * v)));
        }
    }
    out
}

/// Eigenvalue-autoregressive prediction with time-invariant eigenvectors.
pub fn predict_fivar<T: Real>(
    y_hat: &Tensor3<T>,
    spec: &BaselineSpec,
    tau: T,
    sectors: Option<&[String]>,
) -> Result<FivarPrediction<T>> {
    let [p, _, d] = y_hat.dims();
    let dynamics = match spec.method {
        BaselineMethod::Fivar => EigenDynamics::Ar(spec.ar_lag),
        BaselineMethod::FivarH => EigenDynamics::Har,
        other => {
            return Err(Error::invalid(
                "method",
                format!("{} is not a FIVAR variant", other.name()),
            ))
        }
    };
    if spec.r1 == 0 || spec.r1 > p {
        return Err(Error::invalid("r1", format!("need 1 <= r1 <= p = {p}")));
    }
    if spec.eigvec_window == 0 || spec.eigvec_window > d {
        return Err(Error::InsufficientData {
            context: "FIVAR eigenvector window",
            required: spec.eigvec_window.max(1),
            actual: d,
        });
    }
    let mut window = spec.param_window;
    if window > d {
        log::warn!("FIVAR parameter window {window} exceeds D = {d}; using {d}");
        window = d;
    }
    if window < spec.eigvec_window {
        return Err(Error::invalid(
            "param_window",
            format!("{window} is shorter than the eigenvector window {}", spec.eigvec_window),
        ));
    }

    let avg = (d - spec.eigvec_window..d)
        .fold(DMatrix::zeros(p, p), |acc, l| acc + y_hat.slice(l))
        / T::from_count(spec.eigvec_window);
    let (_, vectors) = sym_eigen_desc(&avg);
    let xi = vectors.columns(0, spec.r1).into_owned();

    let series = eigenvalue_series(y_hat, &xi, d - window, d);
    let mut models = Vec::with_capacity(spec.r1);
    let mut forecasts = Vec::with_capacity(spec.r1);
    for s in &series {
        let model = ArModel::fit(s, dynamics)?;
        let f = model.forecast(s)?;
        forecasts.push(if f > T::zero() { f } else { T::zero() });
        models.push(model);
    }

    let factor = &xi * DMatrix::from_diagonal(&DVector::from_vec(forecasts.clone())) * xi.transpose();
    let resid = poet_residual(&y_hat.slice(d - 1), spec.r1, tau, spec.rule, sectors)?;
    Ok(FivarPrediction {
        matrix: symmetrize(&(factor + resid)),
        eigenvectors: xi,
        forecasts,
        series,
        models,
    })
}

/// Dispatches a baseline on the in-sample tensor.
pub fn predict_baseline<T: Real>(
    y_hat: &Tensor3<T>,
    spec: &BaselineSpec,
    tau: T,
    sectors: Option<&[String]>,
) -> Result<DMatrix<T>> {
    let d = y_hat.n_slices();
    if d == 0 {
        return Err(Error::InsufficientData {
            context: "baseline prediction",
            required: 1,
            actual: 0,
        });
    }
    match spec.method {
        BaselineMethod::Prvm => predict_prvm_last(y_hat),
        BaselineMethod::Poet => predict_poet(&y_hat.slice(d - 1), spec.r1, tau, spec.rule, sectors),
        BaselineMethod::Tpoet => {
            let params = FitParams {
                r1: spec.r1,
                r2: spec.r2,
                tau: tau.as_f64(),
                rule: spec.rule,
                sector_labels: sectors.map(|s| s.to_vec()),
            };
            predict_tpoet(y_hat, &params)
        }
        BaselineMethod::Fivar | BaselineMethod::FivarH => {
            Ok(predict_fivar(y_hat, spec, tau, sectors)?.matrix)
        }
    }
}
