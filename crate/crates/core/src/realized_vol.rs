//! Daily integrated volatility matrices from noisy high-frequency prices.
//!
//! The estimator is the jump-truncated pre-averaging realized volatility
//! matrix (PRVM). With returns `r_i(s) = Y_i(t_s) − Y_i(t_{s−1})`,
//!
//! ```text
//! Ȳ_i(k)   = Σ_{s=1}^{K−1} g(s/K) r_i(k+s)
//! Ŷ_ij(k)  = Σ_{s=1}^{K} (g(s/K) − g((s−1)/K))² r_i(k+s−1) r_j(k+s−1)
//! Γ̂_ij     = 1/(φK) Σ_{k=1}^{m−K+1} [Ȳ_i(k)Ȳ_j(k) − ½Ŷ_ij(k)] 1{|Ȳ_i(k)| ≤ u_i} 1{|Ȳ_j(k)| ≤ u_j}
//! ```
//!
//! with `φ = ∫₀¹ g²` and `u_i = c_i m^{−ϖ}`, `c_i` a multiple of the scale of
//! `m^{1/4} Ȳ_i`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::scalar::Real;
use crate::tensor::Tensor3;

/// One day of synchronized log prices: `(m+1) × p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntradayPanel<T: Real = f64> {
    pub day_index: usize,
    /// Observation times, strictly increasing (day fraction or grid index).
    pub times: Vec<f64>,
    pub log_prices: DMatrix<T>,
}

impl<T: Real> IntradayPanel<T> {
    pub fn new(day_index: usize, times: Vec<f64>, log_prices: DMatrix<T>) -> Result<Self> {
        if times.len() != log_prices.nrows() {
            return Err(Error::dims(
                "IntradayPanel::new",
                times.len(),
                log_prices.nrows(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("times", "must be strictly increasing"));
        }
        if !log_prices.iter().all(|v| v.is_finite_value()) {
            return Err(Error::invalid("log_prices", "non-finite entry"));
        }
        Ok(Self {
            day_index,
            times,
            log_prices,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.log_prices.ncols()
    }

    /// Number of intervals `m`.
    pub fn n_intervals(&self) -> usize {
        self.log_prices.nrows().saturating_sub(1)
    }

    /// Keeps every `step`-th observation (including the first and the last
    /// when `m` is a multiple of `step`).
    pub fn subsample(&self, step: usize) -> Result<Self> {
        if step == 0 || !self.n_intervals().is_multiple_of(step) {
            return Err(Error::invalid(
                "step",
                format!("{step} must divide m = {}", self.n_intervals()),
            ));
        }
        let rows: Vec<usize> = (0..self.log_prices.nrows()).step_by(step).collect();
        let times = rows.iter().map(|&r| self.times[r]).collect();
        let log_prices = self.log_prices.select_rows(rows.iter());
        Ok(Self {
            day_index: self.day_index,
            times,
            log_prices,
        })
    }

    /// First differences, `m × p`.
    pub fn returns(&self) -> DMatrix<T> {
        let m = self.n_intervals();
        let p = self.n_assets();
        DMatrix::from_fn(m, p, |s, i| {
            self.log_prices[(s + 1, i)] - self.log_prices[(s, i)]
        })
    }
}

/// Pre-averaging weight function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFunction {
    /// `g(x) = min(x, 1 − x)`.
    #[default]
    Triangular,
}

impl WeightFunction {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            WeightFunction::Triangular => x.min(1.0 - x).max(0.0),
        }
    }

    /// `φ = ∫₀¹ g(t)² dt` in closed form.
    pub fn phi(self) -> f64 {
        match self {
            WeightFunction::Triangular => 1.0 / 12.0,
        }
    }
}

/// How the per-asset truncation scale `c_i / multiplier` is measured on the
/// pre-averaged values `m^{1/4} Ȳ_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationScale {
    /// `1.4826 × median absolute deviation`; unaffected by the windows a jump
    /// contaminates.
    #[default]
    Mad,
    /// Plain sample standard deviation.
    SampleSd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrvmConfig {
    /// Pre-averaging window `K`; `None` means `⌊√m⌋`.
    pub window: Option<usize>,
    pub weight: WeightFunction,
    /// `c_u`; `f64::INFINITY` (or `null` in JSON) disables truncation.
    #[serde(with = "infinite_as_null")]
    pub trunc_multiplier: f64,
    /// `ϖ` in `u = c m^{−ϖ}`.
    pub trunc_exponent: f64,
    pub trunc_scale: TruncationScale,
}

impl Default for PrvmConfig {
    fn default() -> Self {
        Self {
            window: None,
            weight: WeightFunction::Triangular,
            trunc_multiplier: 7.0,
            trunc_exponent: 0.235,
            trunc_scale: TruncationScale::Mad,
        }
    }
}

impl PrvmConfig {
    pub fn untruncated() -> Self {
        Self {
            trunc_multiplier: f64::INFINITY,
            ..Self::default()
        }
    }

    pub fn window_for(&self, m: usize) -> usize {
        self.window
            .unwrap_or_else(|| (m as f64).sqrt().floor() as usize)
    }
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Aligns asynchronous ticks to `grid` with the previous-tick rule.
///
/// `ticks[a]` holds `(time, log_price)` pairs for asset `a` in any order.
pub fn previous_tick_sync<T: Real>(
    day_index: usize,
    names: &[String],
    ticks: &[Vec<(f64, T)>],
    grid: &[f64],
) -> Result<IntradayPanel<T>> {
    if names.len() != ticks.len() {
        return Err(Error::dims("previous_tick_sync", names.len(), ticks.len()));
    }
    let Some(&start) = grid.first() else {
        return Err(Error::invalid("grid", "empty grid"));
    };
    let mut prices = DMatrix::zeros(grid.len(), ticks.len());
    for (a, series) in ticks.iter().enumerate() {
        let mut sorted = series.clone();
        sorted.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(std::cmp::Ordering::Equal));
        if sorted.first().is_none_or(|t| t.0 > start) {
            return Err(Error::MissingInitialTick {
                asset: names[a].clone(),
                grid_start: start,
            });
        }
        let mut cursor = 0usize;
        for (g, &t) in grid.iter().enumerate() {
            while cursor + 1 < sorted.len() && sorted[cursor + 1].0 <= t {
                cursor += 1;
            }
            prices[(g, a)] = sorted[cursor].1;
        }
    }
    IntradayPanel::new(day_index, grid.to_vec(), prices)
}

/// Result of one PRVM evaluation.
#[derive(Debug, Clone)]
pub struct PrvmEstimate<T: Real> {
    pub matrix: DMatrix<T>,
    /// Per asset: number of windows removed by truncation.
    pub truncated_windows: Vec<usize>,
    /// Pairs `(i, j)` for which every window was truncated.
    pub empty_pairs: Vec<(usize, usize)>,
}

/// PRVM estimate of one day's integrated volatility matrix.
pub fn prvm<T: Real>(panel: &IntradayPanel<T>, cfg: &PrvmConfig) -> Result<DMatrix<T>> {
    prvm_detailed(panel, cfg).map(|e| e.matrix)
}

pub fn prvm_detailed<T: Real>(panel: &IntradayPanel<T>, cfg: &PrvmConfig) -> Result<PrvmEstimate<T>> {
    let m = panel.n_intervals();
    let p = panel.n_assets();
    let k = cfg.window_for(m);
    if k < 2 {
        return Err(Error::invalid("window", format!("K = {k} must be at least 2")));
    }
    if m < k + 1 {
        return Err(Error::InsufficientData {
            context: "prvm intervals (m >= K + 1)",
            required: k + 1,
            actual: m,
        });
    }
    if !(cfg.trunc_multiplier > 0.0) {
        return Err(Error::invalid("trunc_multiplier", "must be positive"));
    }

    let returns = panel.returns();
    let n_windows = m - k + 1;
    let g: Vec<T> = (0..=k)
        .map(|s| T::lit(cfg.weight.eval(s as f64 / k as f64)))
        .collect();
    // (Δg_s)² for s = 1..=K, stored at index s−1.
    let dg2: Vec<T> = (1..=k).map(|s| (g[s] - g[s - 1]) * (g[s] - g[s - 1])).collect();

    // Pre-averaged returns; window index w = k−1 (0-based) uses r(k+s), s = 1..K−1,
    // i.e. 0-based return rows w + s.
    let mut bar = DMatrix::zeros(n_windows, p);
    for i in 0..p {
        let r = returns.column(i);
        for w in 0..n_windows {
            let mut acc = T::zero();
            for s in 1..k {
                acc += g[s] * r[w + s];
            }
            bar[(w, i)] = acc;
        }
    }

    // Truncation thresholds.
    let m_f = m as f64;
    let mut keep = vec![vec![true; n_windows]; p];
    let mut truncated_windows = vec![0usize; p];
    if cfg.trunc_multiplier.is_finite() {
        let quarter = T::lit(m_f.powf(0.25));
        let shrink = T::lit(m_f.powf(-cfg.trunc_exponent));
        for i in 0..p {
            let scaled: Vec<T> = bar.column(i).iter().map(|&v| v * quarter).collect();
            let scale = match cfg.trunc_scale {
                TruncationScale::Mad => mad_scale(&scaled),
                TruncationScale::SampleSd => sample_sd(&scaled),
            };
            let u = T::lit(cfg.trunc_multiplier) * scale * shrink;
            for w in 0..n_windows {
                if bar[(w, i)].abs() > u {
                    keep[i][w] = false;
                    truncated_windows[i] += 1;
                }
            }
        }
    }

    // Product term over kept windows: ZᵀZ with Z = 1{kept} ∘ Ȳ.
    let z = DMatrix::from_fn(n_windows, p, |w, i| {
        if keep[i][w] {
            bar[(w, i)]
        } else {
            T::zero()
        }
    });
    let mut acc = z.transpose() * &z;

    // Noise correction summed over all windows: Σ_t c_t r_i(t) r_j(t), where
    // c_t collects (Δg_s)² over the (window, s) pairs touching return t.
    let mut c = vec![T::zero(); m];
    for w in 0..n_windows {
        for s in 1..=k {
            c[w + s - 1] += dg2[s - 1];
        }
    }
    let weighted = DMatrix::from_fn(m, p, |t, i| returns[(t, i)] * c[t]);
    let mut correction = weighted.transpose() * &returns;

    // Remove windows where either asset is truncated.
    let truncated: Vec<Vec<usize>> = keep
        .iter()
        .map(|kv| (0..n_windows).filter(|&w| !kv[w]).collect())
        .collect();
    if truncated.iter().any(|t| !t.is_empty()) {
        let window_corr = |i: usize, j: usize, w: usize| -> T {
            let mut s_acc = T::zero();
            for s in 1..=k {
                s_acc += dg2[s - 1] * returns[(w + s - 1, i)] * returns[(w + s - 1, j)];
            }
            s_acc
        };
        for i in 0..p {
            for j in i..p {
                if truncated[i].is_empty() && truncated[j].is_empty() {
                    continue;
                }
                let union = merge_sorted(&truncated[i], &truncated[j]);
                let removed = union
                    .iter()
                    .fold(T::zero(), |a, &w| a + window_corr(i, j, w));
                correction[(i, j)] -= removed;
                if i != j {
                    correction[(j, i)] -= removed;
                }
            }
        }
    }
    acc -= correction * T::lit(0.5);

    let mut empty_pairs = Vec::new();
    for i in 0..p {
        for j in i..p {
            let both = (0..n_windows).any(|w| keep[i][w] && keep[j][w]);
            if !both {
                acc[(i, j)] = T::zero();
                acc[(j, i)] = T::zero();
                empty_pairs.push((i, j));
            }
        }
    }
    if !empty_pairs.is_empty() {
        log::warn!(
            "day {}: {} asset pairs had every pre-averaging window truncated; entries set to zero",
            panel.day_index,
            empty_pairs.len()
        );
    }

    let norm = T::one() / (T::lit(cfg.weight.phi()) * T::from_count(k));
    Ok(PrvmEstimate {
        matrix: symmetrize(&(acc * norm)),
        truncated_windows,
        empty_pairs,
    })
}

fn merge_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut x, mut y) = (0, 0);
    while x < a.len() || y < b.len() {
        let next = match (a.get(x), b.get(y)) {
            (Some(&u), Some(&v)) if u == v => {
                x += 1;
                y += 1;
                u
            }
            (Some(&u), Some(&v)) if u < v => {
                x += 1;
                u
            }
            (Some(_), Some(&v)) => {
                y += 1;
                v
            }
            (Some(&u), None) => {
                x += 1;
                u
            }
            (None, Some(&v)) => {
                y += 1;
                v
            }
            (None, None) => unreachable!(),
        };
        out.push(next);
    }
    out
}

fn sample_sd<T: Real>(v: &[T]) -> T {
    let n = v.len();
    if n < 2 {
        return T::zero();
    }
    let mean = v.iter().fold(T::zero(), |a, &x| a + x) / T::from_count(n);
    let ss = v.iter().fold(T::zero(), |a, &x| a + (x - mean) * (x - mean));
    (ss / T::from_count(n - 1)).sqrt()
}

fn mad_scale<T: Real>(v: &[T]) -> T {
    if v.is_empty() {
        return T::zero();
    }
    let med = median(v.to_vec());
    let dev: Vec<T> = v.iter().map(|&x| (x - med).abs()).collect();
    T::lit(1.482_602_218_505_602) * median(dev)
}

fn median<T: Real>(mut v: Vec<T>) -> T {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) * T::lit(0.5)
    }
}

/// PRVM estimates for every day, stacked as frontal slices.
pub fn build_tensor<T: Real>(panels: &[IntradayPanel<T>], cfg: &PrvmConfig) -> Result<Tensor3<T>> {
    let Some(first) = panels.first() else {
        return Err(Error::invalid("panels", "at least one day required"));
    };
    let p = first.n_assets();
    if let Some(bad) = panels.iter().find(|d| d.n_assets() != p) {
        return Err(Error::dims(
            "build_tensor asset count",
            p,
            format!("{} on day {}", bad.n_assets(), bad.day_index),
        ));
    }
    let slices = panels
        .par_iter()
        .map(|d| prvm(d, cfg))
        .collect::<Result<Vec<_>>>()?;
    Tensor3::from_slices(&slices)
}

/// Plain realized covariance `Σ_t r_t r_tᵀ` (no noise correction or truncation).
pub fn realized_covariance<T: Real>(panel: &IntradayPanel<T>) -> DMatrix<T> {
    let r = panel.returns();
    r.transpose() * r
}

/// Largest eigenvalue of each frontal slice.
pub fn top_eigenvalues<T: Real>(t: &Tensor3<T>) -> Vec<T> {
    (0..t.n_slices())
        .into_par_iter()
        .map(|l| {
            let s = symmetrize(&t.slice(l));
            let ev: DVector<T> = s.symmetric_eigenvalues();
            ev.iter().fold(T::min_value().unwrap_or_else(T::zero), |a, &v| a.max(v))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel_from(prices: DMatrix<f64>) -> IntradayPanel<f64> {
        let n = prices.nrows();
        let times = (0..n).map(|j| j as f64 / (n - 1) as f64).collect();
        IntradayPanel::new(0, times, prices).unwrap()
    }

    #[test]
    fn phi_matches_quadrature() {
        // composite Simpson on each linear half, exact for the quadratic g²
        let g = WeightFunction::Triangular;
        let n = 2000;
        let h = 1.0 / n as f64;
        let mut acc = 0.0;
        for k in 0..n {
            let a = k as f64 * h;
            let b = a + h;
            let f = |x: f64| g.eval(x).powi(2);
            acc += h / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
        }
        assert!((acc - g.phi()).abs() < 1e-12);
    }

    #[test]
    fn constant_prices_give_zero() {
        let panel = panel_from(DMatrix::from_element(101, 3, 4.2));
        let est = prvm(&panel, &PrvmConfig::default()).unwrap();
        assert_eq!(est.abs().max(), 0.0);
    }

    #[test]
    fn too_few_observations_rejected() {
        let panel = panel_from(DMatrix::from_element(5, 2, 0.0));
        let cfg = PrvmConfig {
            window: Some(5),
            ..PrvmConfig::default()
        };
        assert!(matches!(prvm(&panel, &cfg), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn output_is_symmetric() {
        let prices = DMatrix::from_fn(201, 3, |t, i| ((t * (i + 3)) as f64 * 0.37).sin() * 0.01);
        let est = prvm(&panel_from(prices), &PrvmConfig::default()).unwrap();
        assert_eq!(est.clone(), est.transpose());
    }

    #[test]
    fn previous_tick_definition() {
        let names = vec!["A".to_string()];
        let ticks = vec![vec![(0.9, 3.0), (0.0, 1.0), (0.25, 2.0)]];
        let panel = previous_tick_sync(0, &names, &ticks, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(panel.log_prices.column(0).as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn previous_tick_on_grid_and_single_tick() {
        let names = vec!["A".to_string(), "B".to_string()];
        let grid: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let on_grid: Vec<(f64, f64)> = grid.iter().map(|&t| (t, t * 2.0)).collect();
        let single = vec![(0.0, 5.0)];
        let panel = previous_tick_sync(0, &names, &[on_grid, single], &grid).unwrap();
        for (g, &t) in grid.iter().enumerate() {
            assert_eq!(panel.log_prices[(g, 0)], t * 2.0);
            assert_eq!(panel.log_prices[(g, 1)], 5.0);
        }
    }

    #[test]
    fn previous_tick_missing_start_names_asset() {
        let names = vec!["AAA".to_string(), "LATE".to_string()];
        let ticks = vec![vec![(0.0, 1.0)], vec![(0.3, 1.0)]];
        let err = previous_tick_sync(0, &names, &ticks, &[0.0, 1.0]).unwrap_err();
        assert!(err.to_string().contains("LATE"));
    }

    #[test]
    fn build_tensor_rejects_mixed_asset_counts() {
        let a = panel_from(DMatrix::from_element(50, 2, 0.0));
        let b = panel_from(DMatrix::from_element(50, 3, 0.0));
        assert!(build_tensor(&[a, b], &PrvmConfig::default()).is_err());
    }

    #[test]
    fn merge_sorted_union() {
        assert_eq!(merge_sorted(&[1, 3, 5], &[2, 3, 6]), vec![1, 2, 3, 5, 6]);
    }

    #[test]
    fn config_json_null_means_untruncated() {
        let cfg: PrvmConfig = serde_json::from_str(r#"{"trunc_multiplier": null}"#).unwrap();
        assert!(cfg.trunc_multiplier.is_infinite());
        let back = serde_json::to_string(&cfg).unwrap();
        let again: PrvmConfig = serde_json::from_str(&back).unwrap();
        assert_eq!(again, cfg);
    }
}
