//! Forecast losses, matrix-norm errors and the Diebold–Mariano test.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{inv_sqrt_spd, max_abs, spectral_norm, sym_eigen_desc};
use crate::scalar::Real;

/// Condition number above which a prediction is left out of QLIKE.
pub const QLIKE_MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormErrors {
    pub frobenius: f64,
    pub max: f64,
    pub spectral: f64,
    /// `p^{-1/2} ‖Γ^{-1/2} (pred − Γ) Γ^{-1/2}‖_F`; `None` when the truth is
    /// not positive definite.
    pub relative_frobenius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_note: Option<String>,
}

fn check_pair<T: Real>(context: &'static str, a: &DMatrix<T>, b: &DMatrix<T>) -> Result<()> {
    if a.shape() != b.shape() || !a.is_square() {
        return Err(Error::dims(context, b.shape(), a.shape()));
    }
    Ok(())
}

pub fn norm_errors<T: Real>(pred: &DMatrix<T>, truth: &DMatrix<T>) -> Result<NormErrors> {
    check_pair("norm_errors", pred, truth)?;
    let diff = pred - truth;
    let p = truth.nrows();
    let (relative_frobenius, relative_note) = match inv_sqrt_spd(truth) {
        Some(r) => {
            let scaled = &r * &diff * &r;
            (Some(scaled.norm().as_f64() / (p as f64).sqrt()), None)
        }
        None => (None, Some("truth is not positive definite".to_string())),
    };
    Ok(NormErrors {
        frobenius: diff.norm().as_f64(),
        max: max_abs(&diff).as_f64(),
        spectral: spectral_norm(&diff).as_f64(),
        relative_frobenius,
        relative_note,
    })
}

fn check_series<T: Real>(preds: &[DMatrix<T>], proxies: &[DMatrix<T>]) -> Result<()> {
    if preds.len() != proxies.len() {
        return Err(Error::dims("loss series length", proxies.len(), preds.len()));
    }
    if preds.is_empty() {
        return Err(Error::InsufficientData {
            context: "loss series",
            required: 1,
            actual: 0,
        });
    }
    Ok(())
}

/// `‖pred − proxy‖²_F` per day.
pub fn mspe_losses<T: Real>(preds: &[DMatrix<T>], proxies: &[DMatrix<T>]) -> Result<Vec<f64>> {
    check_series(preds, proxies)?;
    preds
        .iter()
        .zip(proxies)
        .map(|(a, b)| {
            check_pair("mspe", a, b)?;
            Ok((a - b).norm_squared().as_f64())
        })
        .collect()
}

/// Mean squared Frobenius prediction error.
pub fn mspe<T: Real>(preds: &[DMatrix<T>], proxies: &[DMatrix<T>]) -> Result<f64> {
    let l = mspe_losses(preds, proxies)?;
    Ok(l.iter().sum::<f64>() / l.len() as f64)
}

/// Why a day was left out of QLIKE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QlikeExclusion {
    NotPositiveDefinite,
    IllConditioned { condition: f64 },
}

/// `log det(pred) + tr(pred⁻¹ proxy)` for one day.
pub fn qlike_day<T: Real>(pred: &DMatrix<T>, proxy: &DMatrix<T>) -> Result<Result<f64, QlikeExclusion>> {
    check_pair("qlike", pred, proxy)?;
    let (values, vectors) = sym_eigen_desc(pred);
    let n = values.len();
    let (lmax, lmin) = (values[0].as_f64(), values[n - 1].as_f64());
    if !(lmin > 0.0) {
        return Ok(Err(QlikeExclusion::NotPositiveDefinite));
    }
    let condition = lmax / lmin;
    if condition > QLIKE_MAX_CONDITION {
        return Ok(Err(QlikeExclusion::IllConditioned { condition }));
    }
    let log_det: f64 = values.iter().map(|v| v.as_f64().ln()).sum();
    // tr(pred⁻¹ proxy) = Σ_k ξ_kᵀ proxy ξ_k / λ_k
    let mut trace = 0.0;
    for k in 0..n {
        let v = vectors.column(k);
        trace += v.dot(&(proxy * v)).as_f64() / values[k].as_f64();
    }
    Ok(Ok(log_det + trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QlikeResult {
    /// Mean over the included days; `None` if every day was excluded.
    pub value: Option<f64>,
    pub losses: Vec<Option<f64>>,
    pub excluded: usize,
    pub exclusions: Vec<(usize, QlikeExclusion)>,
}

pub fn qlike<T: Real>(preds: &[DMatrix<T>], proxies: &[DMatrix<T>]) -> Result<QlikeResult> {
    check_series(preds, proxies)?;
    let mut losses = Vec::with_capacity(preds.len());
    let mut exclusions = Vec::new();
    for (d, (a, b)) in preds.iter().zip(proxies).enumerate() {
        match qlike_day(a, b)? {
            Ok(v) => losses.push(Some(v)),
            Err(why) => {
                exclusions.push((d, why));
                losses.push(None);
            }
        }
    }
    if !exclusions.is_empty() {
        log::warn!("QLIKE: {} of {} days excluded", exclusions.len(), preds.len());
    }
    let kept: Vec<f64> = losses.iter().flatten().copied().collect();
    let value = (!kept.is_empty()).then(|| kept.iter().sum::<f64>() / kept.len() as f64);
    Ok(QlikeResult {
        value,
        losses,
        excluded: exclusions.len(),
        exclusions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSeries {
    pub method: String,
    pub losses: Vec<f64>,
}

impl LossSeries {
    pub fn new(method: impl Into<String>, losses: Vec<f64>) -> Result<Self> {
        if losses.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("losses", "non-finite entry"));
        }
        Ok(Self {
            method: method.into(),
            losses,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    /// `None` when the loss differential has zero variance.
    pub statistic: Option<f64>,
    pub p_value: f64,
    pub degenerate: bool,
    pub lags: usize,
}

/// `⌊T^{1/3}⌋`.
pub fn default_hac_lags(t: usize) -> usize {
    let mut l = (t as f64).cbrt().floor() as usize;
    // guard against cbrt rounding just below an integer
    while (l + 1).pow(3) <= t {
        l += 1;
    }
    l
}

/// Bartlett-kernel long-run variance of a series.
pub fn bartlett_long_run_variance(d: &[f64], lags: usize) -> f64 {
    let t = d.len();
    let mean = d.iter().sum::<f64>() / t as f64;
    let gamma = |k: usize| -> f64 {
        (k..t).map(|s| (d[s] - mean) * (d[s - k] - mean)).sum::<f64>() / t as f64
    };
    let mut v = gamma(0);
    for k in 1..=lags.min(t.saturating_sub(1)) {
        v += 2.0 * (1.0 - k as f64 / (lags as f64 + 1.0)) * gamma(k);
    }
    v
}

/// Two-sided Diebold–Mariano test of equal expected loss.
pub fn dm_test(a: &LossSeries, b: &LossSeries, hac_lags: Option<usize>) -> Result<DmResult> {
    let t = a.losses.len();
    if b.losses.len() != t {
        return Err(Error::dims("dm_test", t, b.losses.len()));
    }
    if t < 10 {
        return Err(Error::InsufficientData {
            context: "Diebold-Mariano test",
            required: 10,
            actual: t,
        });
    }
    let lags = hac_lags.unwrap_or_else(|| default_hac_lags(t));
    let d: Vec<f64> = a.losses.iter().zip(&b.losses).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / t as f64;
    let lrv = bartlett_long_run_variance(&d, lags);
    let scale = d.iter().map(|v| v * v).sum::<f64>() / t as f64;
    if !(lrv > 1e-14 * scale) {
        return Ok(DmResult {
            statistic: None,
            p_value: 1.0,
            degenerate: true,
            lags,
        });
    }
    let stat = mean / (lrv / t as f64).sqrt();
    let normal = Normal::standard();
    let p_value = 2.0 * (1.0 - normal.cdf(stat.abs()));
    Ok(DmResult {
        statistic: Some(stat),
        p_value,
        degenerate: false,
        lags,
    })
}

/// Pairwise DM p-values; entry `(i, j)` tests method `i` against `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmMatrix {
    pub methods: Vec<String>,
    pub p_values: Vec<Vec<Option<f64>>>,
    pub statistics: Vec<Vec<Option<f64>>>,
}

pub fn dm_matrix(series: &[LossSeries], hac_lags: Option<usize>) -> Result<DmMatrix> {
    let n = series.len();
    let mut p_values = vec![vec![None; n]; n];
    let mut statistics = vec![vec![None; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let r = dm_test(&series[i], &series[j], hac_lags)?;
                p_values[i][j] = Some(r.p_value);
                statistics[i][j] = r.statistic;
            }
        }
    }
    Ok(DmMatrix {
        methods: series.iter().map(|s| s.method.clone()).collect(),
        p_values,
        statistics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub period: String,
    pub metric: String,
    pub value: f64,
}

/// Long-format results table with free-form metadata.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
    pub metadata: BTreeMap<String, String>,
}

impl ResultsTable {
    pub fn push(&mut self, method: &str, period: &str, metric: &str, value: f64) {
        self.rows.push(ResultRow {
            method: method.to_string(),
            period: period.to_string(),
            metric: metric.to_string(),
            value,
        });
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::format(path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json(path, self)
    }
}
