//! Synthetic factor-based jump diffusions with microstructure noise.
//!
//! The daily integrated volatility is `Γ_l = Ψ_l + Σ` with a tensor factor
//! part `Ψ_l = ℱ ×₁ Q ×₂ Q ×₃ v_l`: `ℱ` and `Q` come from the leading
//! eigenpairs of `AAᵀ` for a standard normal `A`, and each time loading
//! follows a HAR(1, 5, 21) recursion. Within a day volatility is constant.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{is_positive_definite, psd_root, sym_eigen_desc};
use crate::ptpoet::har_covariates;
use crate::realized_vol::{build_tensor, top_eigenvalues, IntradayPanel, PrvmConfig};
use crate::rng::child_rng;
use crate::tensor::{tucker_reconstruct, Tensor3};

/// HAR(1, 5, 21) coefficients `(b0, b1, b2, b3)` and shock scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarParams {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    /// Standard deviation of the Gaussian shock `ζ_l`.
    pub shock_sd: f64,
}

impl Default for HarParams {
    fn default() -> Self {
        Self {
            b0: 0.5,
            b1: 0.372,
            b2: 0.343,
            b3: 0.224,
            shock_sd: 1.0,
        }
    }
}

impl HarParams {
    pub fn persistence(&self) -> f64 {
        self.b1 + self.b2 + self.b3
    }

    pub fn stationary_mean(&self) -> f64 {
        self.b0 / (1.0 - self.persistence())
    }

    /// `E[v_{l} | v_{l−1}, …]` given at least 21 past values (most recent last).
    pub fn conditional_mean(&self, past: &[f64]) -> Result<f64> {
        let n = past.len();
        if n < 21 {
            return Err(Error::InsufficientData {
                context: "HAR conditional mean",
                required: 21,
                actual: n,
            });
        }
        let week = past[n - 5..].iter().sum::<f64>() / 5.0;
        let month = past[n - 21..].iter().sum::<f64>() / 21.0;
        Ok(self.b0 + self.b1 * past[n - 1] + self.b2 * week + self.b3 * month)
    }
}

/// Parameters of the simulation design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub p: usize,
    /// Number of data days `D`.
    pub days: usize,
    /// Intraday intervals `m` (observations per day are `m + 1`).
    pub m: usize,
    pub r1: usize,
    pub r2: usize,
    pub har: HarParams,
    /// Jump events per asset per day.
    pub jump_intensity: f64,
    /// Jump size standard deviation as a fraction of `√Γ_ii`.
    pub jump_size_scale: f64,
    /// Noise standard deviation as a fraction of `√Σ_ii`.
    pub noise_scale: f64,
    pub gamma_shape: f64,
    pub gamma_rate: f64,
    /// Numerator of the nonzero probability `scale / (√p log p)` of `s_i`.
    pub sparse_prob_scale: f64,
    pub seed: u64,
    pub burn_in_days: usize,
    /// Pre-sample days simulated only to build the lagged covariates.
    pub history_days: usize,
    pub max_pd_retries: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            p: 200,
            days: 200,
            m: 2000,
            r1: 3,
            r2: 1,
            har: HarParams::default(),
            jump_intensity: 5.0,
            jump_size_scale: 0.05,
            noise_scale: 0.01,
            gamma_shape: 100.0,
            gamma_rate: 100.0,
            sparse_prob_scale: 0.3,
            seed: 0,
            burn_in_days: 105,
            history_days: 21,
            max_pd_retries: 1000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p", self.p),
            ("days", self.days),
            ("m", self.m),
            ("r1", self.r1),
            ("r2", self.r2),
        ] {
            if v == 0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be at least 1".into(),
                });
            }
        }
        if self.r1 > self.p {
            return Err(Error::invalid("r1", format!("{} exceeds p = {}", self.r1, self.p)));
        }
        if self.r2 > self.days {
            return Err(Error::invalid("r2", format!("{} exceeds D = {}", self.r2, self.days)));
        }
        for (name, v) in [
            ("jump_intensity", self.jump_intensity),
            ("jump_size_scale", self.jump_size_scale),
            ("noise_scale", self.noise_scale),
            ("sparse_prob_scale", self.sparse_prob_scale),
            ("har.shock_sd", self.har.shock_sd),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        if !(self.gamma_shape > 0.0 && self.gamma_rate > 0.0) {
            return Err(Error::invalid("gamma_shape/gamma_rate", "must be positive"));
        }
        if self.burn_in_days < 21 {
            return Err(Error::invalid("burn_in_days", "must be at least 21"));
        }
        if self.history_days < 21 {
            return Err(Error::invalid(
                "history_days",
                "at least 21 pre-sample days are needed for the monthly covariate",
            ));
        }
        if self.har.persistence() >= 1.0 {
            return Err(Error::NonStationary {
                sum: self.har.persistence(),
            });
        }
        Ok(())
    }
}

/// Simulated prices and ground truth, before any estimation.
#[derive(Debug, Clone)]
pub struct SimPaths {
    /// Noisy log prices for the `D` data days.
    pub noisy_prices: Vec<IntradayPanel<f64>>,
    /// Noisy log prices for the pre-sample covariate days.
    pub history_prices: Vec<IntradayPanel<f64>>,
    /// `Γ_l` for the data days.
    pub true_tensor: Tensor3<f64>,
    /// `Ψ_l` for the data days.
    pub true_factor_tensor: Tensor3<f64>,
    /// `Σ_l` for the data days.
    pub true_idio: Tensor3<f64>,
    /// `E[Γ_{D+1} | ℐ_D]`.
    pub next_day_truth: DMatrix<f64>,
    /// Time loadings for history, data days and day `D + 1` (`(H + D + 1) × r2`).
    pub loadings: DMatrix<f64>,
    pub loading_q: DMatrix<f64>,
    pub core: Tensor3<f64>,
    pub idio: DMatrix<f64>,
    pub har: HarParams,
}

impl SimPaths {
    /// History days followed by data days.
    pub fn all_panels(&self) -> Vec<IntradayPanel<f64>> {
        self.history_prices
            .iter()
            .chain(&self.noisy_prices)
            .cloned()
            .collect()
    }

    pub fn history_days(&self) -> usize {
        self.history_prices.len()
    }

    /// `E[Γ_l | ℐ_{l−1}]` for a day index `l` counted from the first history
    /// day (`l = H + D` is the day after the sample).
    pub fn conditional_truth(&self, l: usize) -> Result<DMatrix<f64>> {
        if l >= self.loadings.nrows() {
            return Err(Error::invalid(
                "day",
                format!("{l} is beyond the simulated horizon {}", self.loadings.nrows()),
            ));
        }
        let r2 = self.loadings.ncols();
        let mut v = DMatrix::zeros(1, r2);
        for k in 0..r2 {
            let past: Vec<f64> = self.loadings.column(k).rows(0, l).iter().copied().collect();
            v[(0, k)] = self.har.conditional_mean(&past)?;
        }
        Ok(tucker_reconstruct(&self.core, &self.loading_q, &v)?.slice(0) + &self.idio)
    }
}

/// Simulated paths plus the lagged eigenvalue covariates estimated from them.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub paths: SimPaths,
    /// `D × 3` lagged daily/weekly/monthly averages of realized top eigenvalues.
    pub covariates_x: DMatrix<f64>,
    /// Covariates for day `D + 1` (information through day `D`).
    pub covariate_next: DVector<f64>,
}

/// PRVM on every panel and HAR covariates for the last `days` panels plus
/// the day after. Returns the estimated tensor over all panels too.
pub fn estimate_covariates(
    panels: &[IntradayPanel<f64>],
    days: usize,
    prvm: &PrvmConfig,
) -> Result<(Tensor3<f64>, DMatrix<f64>, DVector<f64>)> {
    let total = panels.len();
    if total < days + 21 {
        return Err(Error::InsufficientData {
            context: "covariates need 21 days before the sample",
            required: days + 21,
            actual: total,
        });
    }
    let estimated = build_tensor(panels, prvm)?;
    let eigs = top_eigenvalues(&estimated);
    let x_all = har_covariates(&eigs, total - days, days + 1)?;
    let x = x_all.rows(0, days).into_owned();
    let next = x_all.row(days).transpose();
    Ok((estimated, x, next))
}

/// `diag(d²) + ssᵀ − diag(s²)`.
pub fn assemble_idio(d: &[f64], s: &[f64]) -> DMatrix<f64> {
    let p = d.len();
    DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            d[i] * d[i]
        } else {
            s[i] * s[j]
        }
    })
}

/// Draws the sparse idiosyncratic covariance, retrying until it is positive
/// definite.
pub fn generate_sparse_idio<R: Rng + ?Sized>(
    p: usize,
    gamma_shape: f64,
    gamma_rate: f64,
    sparse_prob_scale: f64,
    max_retries: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(Error::invalid("p", "must be at least 1"));
    }
    let gamma = Gamma::new(gamma_shape, 1.0 / gamma_rate)
        .map_err(|e| Error::invalid("gamma_shape/gamma_rate", e.to_string()))?;
    let prob = if p < 3 {
        // √p log p is tiny or zero here; cap the probability.
        sparse_prob_scale.min(1.0)
    } else {
        (sparse_prob_scale / ((p as f64).sqrt() * (p as f64).ln())).min(1.0)
    };
    for _ in 0..max_retries.max(1) {
        let d: Vec<f64> = (0..p).map(|_| gamma.sample(rng)).collect();
        let s: Vec<f64> = (0..p)
            .map(|_| {
                if prob > 0.0 && rng.random::<f64>() < prob {
                    rng.sample(StandardNormal)
                } else {
                    0.0
                }
            })
            .collect();
        let sigma = assemble_idio(&d, &s);
        if is_positive_definite(&sigma) {
            return Ok(sigma);
        }
    }
    Err(Error::RetryBudgetExhausted {
        budget: max_retries.max(1),
    })
}

/// HAR(1, 5, 21) path of length `n`, after discarding `burn_in` values started
/// at `b0`.
pub fn simulate_har_loadings<R: Rng + ?Sized>(
    n: usize,
    har: &HarParams,
    burn_in: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if har.persistence() >= 1.0 {
        return Err(Error::NonStationary {
            sum: har.persistence(),
        });
    }
    if burn_in < 21 {
        return Err(Error::invalid("burn_in", "must be at least 21"));
    }
    let mut path = vec![har.b0; 21];
    path.reserve(burn_in + n);
    for _ in 0..burn_in + n {
        let shock: f64 = if har.shock_sd > 0.0 {
            har.shock_sd * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        let next = har.conditional_mean(&path)? + shock;
        path.push(next);
    }
    Ok(path.split_off(path.len() - n))
}

/// Jump and noise settings for one simulated day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayConfig {
    pub day_index: usize,
    pub m: usize,
    pub jump_intensity: f64,
    pub jump_size_scale: f64,
    pub noise_scale: f64,
}

/// One day of noisy log prices on the grid `t_j = j/m`, starting from zero.
pub fn simulate_day_prices<R: Rng + ?Sized>(
    cfg: &DayConfig,
    psi: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    rng: &mut R,
) -> Result<IntradayPanel<f64>> {
    let p = sigma.nrows();
    if psi.shape() != (p, p) || sigma.shape() != (p, p) {
        return Err(Error::dims("simulate_day_prices", (p, p), psi.shape()));
    }
    if cfg.m == 0 {
        return Err(Error::invalid("m", "must be at least 1"));
    }
    let scale = psi.diagonal().iter().map(|v| v.abs()).fold(1.0, f64::max);
    let factor_root = psd_root(psi, 1e-10 * scale)?;
    let sigma_chol = if sigma.iter().all(|&v| v == 0.0) {
        DMatrix::zeros(p, p)
    } else {
        nalgebra::Cholesky::new(sigma.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("idiosyncratic Σ_l".into()))?
            .l()
    };

    let m = cfg.m;
    let sqrt_dt = (1.0 / m as f64).sqrt();
    let r = factor_root.ncols();
    let mut increments = DMatrix::<f64>::zeros(m, p);
    if r > 0 {
        let z = DMatrix::from_fn(m, r, |_, _| rng.sample::<f64, _>(StandardNormal));
        increments += z * factor_root.transpose();
    }
    let zs = DMatrix::from_fn(m, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    increments += zs * sigma_chol.transpose();
    increments *= sqrt_dt;

    if cfg.jump_intensity > 0.0 {
        let poisson = Poisson::new(cfg.jump_intensity)
            .map_err(|e| Error::invalid("jump_intensity", e.to_string()))?;
        for i in 0..p {
            let count = poisson.sample(rng) as usize;
            let sd = cfg.jump_size_scale * (psi[(i, i)] + sigma[(i, i)]).max(0.0).sqrt();
            for _ in 0..count {
                let t: f64 = rng.random();
                // jump at time t lands in the interval (t_{j-1}, t_j] with j = ⌈t m⌉
                let step = ((t * m as f64).ceil() as usize).clamp(1, m) - 1;
                let size = if sd > 0.0 {
                    sd * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                increments[(step, i)] += size;
            }
        }
    }

    let mut prices = DMatrix::<f64>::zeros(m + 1, p);
    for j in 0..m {
        for i in 0..p {
            prices[(j + 1, i)] = prices[(j, i)] + increments[(j, i)];
        }
    }
    if cfg.noise_scale > 0.0 {
        for i in 0..p {
            let sd = cfg.noise_scale * sigma[(i, i)].max(0.0).sqrt();
            if sd > 0.0 {
                let noise = Normal::new(0.0, sd).expect("finite sd");
                for j in 0..=m {
                    prices[(j, i)] += noise.sample(rng);
                }
            }
        }
    }
    let times = (0..=m).map(|j| j as f64 / m as f64).collect();
    IntradayPanel::new(cfg.day_index, times, prices)
}

/// Factor structure of the design: `(core, Q)` from the leading `r1`
/// eigenpairs of `AAᵀ`. Slice `k` of the core is the diagonal of those
/// eigenvalues rotated by `k` positions, so distinct time loadings act on
/// distinct eigen-directions when `r2 > 1`.
pub fn factor_structure<R: Rng + ?Sized>(
    p: usize,
    r1: usize,
    r2: usize,
    rng: &mut R,
) -> (Tensor3<f64>, DMatrix<f64>) {
    let a = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let (values, vectors) = sym_eigen_desc(&(&a * a.transpose()));
    let q = vectors.columns(0, r1).into_owned();
    let core = Tensor3::from_fn(r1, r1, r2, |i, j, k| {
        if i == j {
            values[(i + k) % r1]
        } else {
            0.0
        }
    });
    (core, q)
}

/// Simulates `history_days + D` days of noisy prices with their ground
/// truth and the conditional expectation for day `D + 1`.
pub fn simulate_paths(cfg: &SimConfig) -> Result<SimPaths> {
    cfg.validate()?;
    let h = cfg.history_days;
    let total = h + cfg.days;

    let mut rng_struct = child_rng(cfg.seed, 0);
    let (core, q) = factor_structure(cfg.p, cfg.r1, cfg.r2, &mut rng_struct);
    let idio = generate_sparse_idio(
        cfg.p,
        cfg.gamma_shape,
        cfg.gamma_rate,
        cfg.sparse_prob_scale,
        cfg.max_pd_retries,
        &mut rng_struct,
    )?;

    let mut loadings = DMatrix::zeros(total + 1, cfg.r2);
    for k in 0..cfg.r2 {
        let mut rng_har = child_rng(cfg.seed, 1 + k as u64);
        let path = simulate_har_loadings(total + 1, &cfg.har, cfg.burn_in_days, &mut rng_har)?;
        loadings.set_column(k, &DVector::from_vec(path));
    }

    let factor_all = tucker_reconstruct(&core, &q, &loadings.rows(0, total).into_owned())?;

    let mut panels = (0..total)
        .into_par_iter()
        .map(|l| {
            let day = DayConfig {
                day_index: l,
                m: cfg.m,
                jump_intensity: cfg.jump_intensity,
                jump_size_scale: cfg.jump_size_scale,
                noise_scale: cfg.noise_scale,
            };
            let mut rng = child_rng(cfg.seed, 1_000 + l as u64);
            simulate_day_prices(&day, &factor_all.slice(l), &idio, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    let true_factor_tensor = factor_all.slice_range(h, total)?;
    let true_idio = Tensor3::from_slices(&vec![idio.clone(); cfg.days])?;
    let true_tensor = true_factor_tensor.add(&true_idio)?;
    let noisy_prices = panels.split_off(h);

    let mut paths = SimPaths {
        noisy_prices,
        history_prices: panels,
        true_tensor,
        true_factor_tensor,
        true_idio,
        next_day_truth: DMatrix::zeros(0, 0),
        loadings,
        loading_q: q,
        core,
        idio,
        har: cfg.har,
    };
    paths.next_day_truth = paths.conditional_truth(total)?;
    Ok(paths)
}

/// [`simulate_paths`] plus covariates from the default PRVM estimator.
pub fn simulate_study(cfg: &SimConfig) -> Result<SimOutput> {
    let paths = simulate_paths(cfg)?;
    let (_, covariates_x, covariate_next) =
        estimate_covariates(&paths.all_panels(), cfg.days, &PrvmConfig::default())?;
    Ok(SimOutput {
        paths,
        covariates_x,
        covariate_next,
    })
}

/// Convenience used by tests and the study runner.
pub fn sim_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    child_rng(seed, stream)
}
