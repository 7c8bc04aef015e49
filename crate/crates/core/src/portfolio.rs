//! Gross-exposure constrained minimum-variance portfolios and their
//! out-of-sample risk.
//!
//! `min ωᵀΣω  s.t.  1ᵀω = 1, ‖ω‖₁ ≤ c` is solved in three stages: the
//! closed form `Σ⁻¹1 / 1ᵀΣ⁻¹1` when it satisfies the exposure bound;
//! otherwise ADMM on the splitting `ω = z`, `z ∈ {1ᵀz = 1, ‖z‖₁ ≤ c}`,
//! followed by an exact active-set solve of the KKT system on the support
//! found by ADMM. Every returned solution passes a KKT residual check.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{floor_eigenvalues, solve_square, symmetrize};
use crate::realized_vol::IntradayPanel;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioProblem<T: Real> {
    pub sigma: DMatrix<T>,
    /// Gross exposure bound, at least 1.
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Floors eigenvalues at `1e-8 · trace / p` before solving.
    pub psd_floor: bool,
}

impl<T: Real> PortfolioProblem<T> {
    pub fn new(sigma: DMatrix<T>, c: f64) -> Self {
        Self {
            sigma,
            c,
            tol: 1e-8,
            max_iter: 50_000,
            psd_floor: false,
        }
    }

    pub fn with_psd_floor(mut self, on: bool) -> Self {
        self.psd_floor = on;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    ClosedForm,
    ActiveSet,
    Admm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioSolution<T: Real> {
    pub weights: DVector<T>,
    pub objective: T,
    /// Multiplier of `1ᵀω = 1` in `2Σω − μ1 + λ∂‖ω‖₁ ∋ 0`.
    pub mu: T,
    /// Multiplier of the exposure bound.
    pub lambda: T,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub method: SolveMethod,
}

/// `ε = 1e-8 · trace / p` eigenvalue floor.
pub fn pd_floor<T: Real>(sigma: &DMatrix<T>) -> DMatrix<T> {
    let p = sigma.nrows().max(1);
    let eps = T::lit(1e-8) * sigma.trace() / T::from_count(p);
    floor_eigenvalues(sigma, eps)
}

/// Scaled KKT residual of a candidate `(ω, μ, λ)`.
///
/// Stationarity, primal feasibility, dual feasibility and complementary
/// slackness are measured in the max norm and divided by
/// `max(1, max |Σ_ij|)`.
pub fn kkt_residual<T: Real>(sigma: &DMatrix<T>, c: f64, w: &DVector<T>, mu: T, lambda: T) -> f64 {
    let grad = (sigma * w) * T::lit(2.0);
    let scale = sigma.iter().fold(1.0f64, |a, v| a.max(v.as_f64().abs()));
    let zero_tol = T::lit(1e-13);
    let mut r = 0.0f64;
    for i in 0..w.len() {
        let g = grad[i] - mu;
        let v = if w[i].abs() > zero_tol {
            (g + lambda * w[i].signum()).abs()
        } else {
            (g.abs() - lambda).max(T::zero())
        };
        r = r.max(v.as_f64());
    }
    let l1 = w.iter().fold(0.0, |a, v| a + v.as_f64().abs());
    let sum = w.iter().fold(0.0, |a, v| a + v.as_f64());
    r = r.max((sum - 1.0).abs());
    r = r.max((l1 - c).max(0.0));
    r = r.max((-lambda.as_f64()).max(0.0));
    r = r.max((lambda.as_f64() * (l1 - c)).abs());
    r / scale
}

/// Euclidean projection onto `{1ᵀz = 1, ‖z‖₁ ≤ c}`.
pub fn project_budget_l1<T: Real>(v: &DVector<T>, c: T) -> DVector<T> {
    let p = v.len();
    let shift = (T::one() - v.sum()) / T::from_count(p);
    let plain = v.add_scalar(shift);
    if plain.iter().fold(T::zero(), |a, x| a + x.abs()) <= c {
        return plain;
    }
    let l1_at = |lambda: T| {
        let z = soft_with_budget(v, lambda);
        (z.iter().fold(T::zero(), |a, x| a + x.abs()), z)
    };
    let mut hi = v.iter().fold(T::zero(), |a, x| a.max(x.abs())) + T::one();
    while l1_at(hi).0 > c {
        hi *= T::lit(2.0);
    }
    let mut lo = T::zero();
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if l1_at(mid).0 > c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    l1_at(hi).1
}

/// `soft(v + ν, λ)` with `ν` chosen so that the entries sum to one.
fn soft_with_budget<T: Real>(v: &DVector<T>, lambda: T) -> DVector<T> {
    let p = v.len();
    // f(ν) = Σ soft(v_i + ν, λ) is non-decreasing and piecewise linear with
    // kinks at −v_i ± λ, so the root is found by linear interpolation between
    // consecutive kinks.
    let mut kinks: Vec<T> = Vec::with_capacity(2 * p);
    for &x in v.iter() {
        kinks.push(-x - lambda);
        kinks.push(-x + lambda);
    }
    kinks.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let soft = |x: T| {
        if x > lambda {
            x - lambda
        } else if x < -lambda {
            x + lambda
        } else {
            T::zero()
        }
    };
    let f = |nu: T| v.iter().fold(T::zero(), |a, &x| a + soft(x + nu));
    let target = T::one();
    let mut nu0 = kinks[0];
    let mut f0 = f(nu0);
    let nu = if f0 >= target {
        nu0 - (f0 - target) / T::from_count(p)
    } else {
        let mut found = None;
        for &k in &kinks {
            let fk = f(k);
            if fk >= target {
                let df = fk - f0;
                found = Some(if df > T::zero() {
                    nu0 + (target - f0) * (k - nu0) / df
                } else {
                    k
                });
                break;
            }
            nu0 = k;
            f0 = fk;
        }
        found.unwrap_or_else(|| nu0 + (target - f0) / T::from_count(p))
    };
    DVector::from_iterator(p, v.iter().map(|&x| soft(x + nu)))
}

fn closed_form<T: Real>(chol: &Cholesky<T, Dyn>, p: usize) -> (DVector<T>, T) {
    let x = chol.solve(&DVector::from_element(p, T::one()));
    let s = x.sum();
    (x / s, T::lit(2.0) / s)
}

/// Solves the KKT system on the support `support` with signs `signs`.
fn active_set_solve<T: Real>(
    sigma: &DMatrix<T>,
    c: T,
    support: &[usize],
    signs: &[T],
) -> Option<(DVector<T>, T, T)> {
    let p = sigma.nrows();
    let k = support.len();
    let all_positive = signs.iter().all(|&s| s > T::zero());
    let two = T::lit(2.0);
    let (w_f, mu, lambda) = if all_positive {
        // 1ᵀω = sᵀω, so only one equality; λ is set from the inactive
        // coordinates below.
        let mut a = DMatrix::zeros(k + 1, k + 1);
        for (r, &i) in support.iter().enumerate() {
            for (q, &j) in support.iter().enumerate() {
                a[(r, q)] = two * sigma[(i, j)];
            }
            a[(r, k)] = -T::one();
            a[(k, r)] = T::one();
        }
        let mut b = DVector::zeros(k + 1);
        b[k] = T::one();
        let x = solve_square(a, &b)?;
        let w_f = x.rows(0, k).into_owned();
        let kappa = x[k];
        let mut w = DVector::zeros(p);
        for (r, &i) in support.iter().enumerate() {
            w[i] = w_f[r];
        }
        let grad = (sigma * &w) * two;
        let mut lambda = T::zero();
        for i in 0..p {
            if !support.contains(&i) {
                lambda = lambda.max((grad[i] - kappa) * T::lit(0.5));
            }
        }
        (w_f, kappa + lambda, lambda)
    } else {
        let mut a = DMatrix::zeros(k + 2, k + 2);
        for (r, &i) in support.iter().enumerate() {
            for (q, &j) in support.iter().enumerate() {
                a[(r, q)] = two * sigma[(i, j)];
            }
            a[(r, k)] = -T::one();
            a[(r, k + 1)] = signs[r];
            a[(k, r)] = T::one();
            a[(k + 1, r)] = signs[r];
        }
        let mut b = DVector::zeros(k + 2);
        b[k] = T::one();
        b[k + 1] = c;
        let x = solve_square(a, &b)?;
        (x.rows(0, k).into_owned(), x[k], x[k + 1])
    };
    if w_f.iter().zip(signs).any(|(&v, &s)| v * s < T::zero()) {
        return None;
    }
    let mut w = DVector::zeros(p);
    for (r, &i) in support.iter().enumerate() {
        w[i] = w_f[r];
    }
    Some((w, mu, lambda))
}

/// Least-squares multipliers for a candidate with known support.
fn estimate_multipliers<T: Real>(sigma: &DMatrix<T>, w: &DVector<T>) -> (T, T) {
    let grad = (sigma * w) * T::lit(2.0);
    let tol = T::lit(1e-13);
    let rows: Vec<usize> = (0..w.len()).filter(|&i| w[i].abs() > tol).collect();
    let mut a = DMatrix::zeros(rows.len(), 2);
    let mut b = DMatrix::zeros(rows.len(), 1);
    for (r, &i) in rows.iter().enumerate() {
        a[(r, 0)] = T::one();
        a[(r, 1)] = -w[i].signum();
        b[(r, 0)] = grad[i];
    }
    match crate::linalg::lstsq(&a, &b) {
        Ok(x) => (x[(0, 0)], x[(1, 0)].max(T::zero())),
        Err(_) => (T::zero(), T::zero()),
    }
}

pub fn solve_min_variance<T: Real>(prob: &PortfolioProblem<T>) -> Result<PortfolioSolution<T>> {
    let p = prob.sigma.nrows();
    if !prob.sigma.is_square() || p == 0 {
        return Err(Error::dims("solve_min_variance", (p, p), prob.sigma.shape()));
    }
    if !prob.sigma.iter().all(|v| v.is_finite_value()) {
        return Err(Error::invalid("sigma", "non-finite entry"));
    }
    if !(prob.c >= 1.0) {
        return Err(Error::Infeasible { c: prob.c });
    }
    if !(prob.tol > 0.0) || prob.max_iter == 0 {
        return Err(Error::invalid("tol/max_iter", "must be positive"));
    }
    let mut sigma = symmetrize(&prob.sigma);
    if prob.psd_floor {
        log::info!("applying eigenvalue floor 1e-8·trace/p to the portfolio input");
        sigma = pd_floor(&sigma);
    }
    // Work with unit average variance; the argmin is scale invariant.
    let scale = sigma.trace() / T::from_count(p);
    if !(scale > T::zero()) {
        return Err(Error::NotPositiveDefinite(
            "non-positive trace; enable the PSD floor (psd_floor) or repair the prediction".into(),
        ));
    }
    let s = &sigma / scale;
    let chol = Cholesky::new(s.clone()).ok_or_else(|| {
        Error::NotPositiveDefinite(
            "predicted matrix is not positive definite; enable the PSD floor (psd_floor) \
             to floor eigenvalues at 1e-8·trace/p"
                .into(),
        )
    })?;
    let c = T::lit(prob.c);
    let finish = |w: DVector<T>, mu: T, lambda: T, iterations: usize, method: SolveMethod| {
        let kkt = kkt_residual(&s, prob.c, &w, mu, lambda);
        let objective = w.dot(&(&sigma * &w));
        PortfolioSolution {
            weights: w,
            objective,
            mu: mu * scale,
            lambda: lambda * scale,
            kkt_residual: kkt,
            iterations,
            method,
        }
    };

    let (w0, mu0) = closed_form(&chol, p);
    let l1 = w0.iter().fold(T::zero(), |a, v| a + v.abs());
    if l1 <= c {
        return Ok(finish(w0, mu0, T::zero(), 0, SolveMethod::ClosedForm));
    }

    let eye = DMatrix::<T>::identity(p, p);
    let mut rho = T::one();
    let factor = |rho: T| Cholesky::new(&s * T::lit(2.0) + &eye * rho);
    let mut lhs = factor(rho).ok_or_else(|| Error::Numerical("ADMM system not PD".into()))?;
    let mut z = project_budget_l1(&w0, c);
    let mut u = DVector::<T>::zeros(p);
    let tol = T::lit(prob.tol * 1e-3);
    let mut last = (f64::INFINITY, f64::INFINITY);
    for it in 1..=prob.max_iter {
        let w = lhs.solve(&((&z - &u) * rho));
        let z_prev = z.clone();
        z = project_budget_l1(&(&w + &u), c);
        u += &w - &z;
        let r = (&w - &z).amax();
        let d = (&z - &z_prev).amax() * rho;
        last = (r.as_f64(), d.as_f64());

        let check = it % 25 == 0 || (r <= tol && d <= tol);
        if check {
            let cut = T::lit(1e-12) * z.amax();
            let support: Vec<usize> = (0..p).filter(|&i| z[i].abs() > cut).collect();
            let signs: Vec<T> = support.iter().map(|&i| z[i].signum()).collect();
            if let Some((wa, mu, lambda)) = active_set_solve(&s, c, &support, &signs) {
                let sol = finish(wa, mu, lambda, it, SolveMethod::ActiveSet);
                if sol.kkt_residual <= prob.tol {
                    return Ok(sol);
                }
            }
            if r <= tol && d <= tol {
                let (mu, lambda) = estimate_multipliers(&s, &z);
                let sol = finish(z.clone(), mu, lambda, it, SolveMethod::Admm);
                if sol.kkt_residual <= prob.tol {
                    return Ok(sol);
                }
            }
        }

        if it % 50 == 0 {
            let ten = T::lit(10.0);
            let new_rho = if r > ten * d {
                rho * T::lit(2.0)
            } else if d > ten * r {
                rho * T::lit(0.5)
            } else {
                rho
            };
            if new_rho != rho {
                u *= rho / new_rho;
                rho = new_rho;
                lhs = factor(rho).ok_or_else(|| Error::Numerical("ADMM system not PD".into()))?;
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: prob.max_iter,
        primal: last.0,
        dual: last.1,
    })
}

/// Backtest settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktestConfig {
    pub c_grid: Vec<f64>,
    /// Panel intervals per return interval (10 on a one-minute grid).
    pub ret_step: usize,
    pub psd_floor: bool,
    pub tol: f64,
    pub max_iter: usize,
    pub keep_weights: bool,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            c_grid: vec![1.0, 1.5, 2.0, 2.5, 3.0],
            ret_step: 10,
            psd_floor: true,
            tol: 1e-8,
            max_iter: 50_000,
            keep_weights: false,
        }
    }
}

/// One out-of-sample day: the realized prices and each method's prediction.
#[derive(Debug, Clone)]
pub struct OosDay {
    pub day_index: usize,
    pub panel: Option<IntradayPanel<f64>>,
    pub predictions: BTreeMap<String, DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub method: String,
    pub period: String,
    pub c: f64,
    pub avg_risk: f64,
    pub n_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRecord {
    pub method: String,
    pub day_index: usize,
    pub c: f64,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedDay {
    pub day_index: usize,
    pub method: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub risks: Vec<RiskRow>,
    /// Per method, per c: daily `√RV` in day order.
    pub daily_risks: BTreeMap<String, Vec<Vec<f64>>>,
    pub skipped: Vec<SkippedDay>,
    pub weights: Vec<WeightRecord>,
}

/// Realized variance of the portfolio `w` from log prices sampled every
/// `step` intervals.
pub fn portfolio_realized_variance(panel: &IntradayPanel<f64>, w: &DVector<f64>, step: usize) -> f64 {
    let x = &panel.log_prices;
    let n = x.nrows();
    let mut rv = 0.0;
    let mut s = 0;
    while s + step < n {
        let r: f64 = (0..x.ncols()).map(|i| w[i] * (x[(s + step, i)] - x[(s, i)])).sum();
        rv += r * r;
        s += step;
    }
    rv
}

/// Holds each method's minimum-variance portfolio for one day and measures
/// the realized risk `√RV`, averaged over days.
pub fn backtest(days: &[OosDay], period: &str, methods: &[String], cfg: &BacktestConfig) -> Result<BacktestReport> {
    if cfg.ret_step == 0 {
        return Err(Error::invalid("ret_step", "must be positive"));
    }
    if let Some(&bad) = cfg.c_grid.iter().find(|&&c| !(c >= 1.0)) {
        return Err(Error::Infeasible { c: bad });
    }
    type DayOut = (Vec<(String, Vec<f64>)>, Vec<SkippedDay>, Vec<WeightRecord>);
    let per_day: Vec<DayOut> = days
        .par_iter()
        .map(|day| -> Result<DayOut> {
            let mut risks = Vec::new();
            let mut skipped = Vec::new();
            let mut weights = Vec::new();
            let Some(panel) = day.panel.as_ref().filter(|p| p.n_intervals() >= cfg.ret_step) else {
                skipped.push(SkippedDay {
                    day_index: day.day_index,
                    method: None,
                    reason: "missing or too short intraday panel".into(),
                });
                return Ok((risks, skipped, weights));
            };
            for method in methods {
                let Some(sigma) = day.predictions.get(method) else {
                    skipped.push(SkippedDay {
                        day_index: day.day_index,
                        method: Some(method.clone()),
                        reason: "no prediction".into(),
                    });
                    continue;
                };
                if sigma.nrows() != panel.n_assets() {
                    skipped.push(SkippedDay {
                        day_index: day.day_index,
                        method: Some(method.clone()),
                        reason: format!("prediction has {} assets, panel {}", sigma.nrows(), panel.n_assets()),
                    });
                    continue;
                }
                let mut by_c = Vec::with_capacity(cfg.c_grid.len());
                for &c in &cfg.c_grid {
                    let prob = PortfolioProblem {
                        sigma: sigma.clone(),
                        c,
                        tol: cfg.tol,
                        max_iter: cfg.max_iter,
                        psd_floor: cfg.psd_floor,
                    };
                    let sol = solve_min_variance(&prob)?;
                    by_c.push(portfolio_realized_variance(panel, &sol.weights, cfg.ret_step).sqrt());
                    if cfg.keep_weights {
                        weights.push(WeightRecord {
                            method: method.clone(),
                            day_index: day.day_index,
                            c,
                            weights: sol.weights.iter().copied().collect(),
                        });
                    }
                }
                risks.push((method.clone(), by_c));
            }
            Ok((risks, skipped, weights))
        })
        .collect::<Result<_>>()?;

    let mut report = BacktestReport::default();
    for m in methods {
        report
            .daily_risks
            .insert(m.clone(), vec![Vec::new(); cfg.c_grid.len()]);
    }
    for (risks, skipped, weights) in per_day {
        for (m, by_c) in risks {
            let slot = report.daily_risks.get_mut(&m).expect("method registered");
            for (k, v) in by_c.into_iter().enumerate() {
                slot[k].push(v);
            }
        }
        report.skipped.extend(skipped);
        report.weights.extend(weights);
    }
    for m in methods {
        let series = &report.daily_risks[m];
        for (k, &c) in cfg.c_grid.iter().enumerate() {
            let v = &series[k];
            let avg = if v.is_empty() {
                f64::NAN
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            };
            report.risks.push(RiskRow {
                method: m.clone(),
                period: period.to_string(),
                c,
                avg_risk: avg,
                n_days: v.len(),
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_gives_equal_weights() {
        for c in [1.0, 2.0] {
            let sol = solve_min_variance(&PortfolioProblem::new(DMatrix::<f64>::identity(2, 2), c)).unwrap();
            assert!((sol.weights[0] - 0.5).abs() < 1e-12);
            assert!((sol.weights[1] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_closed_form() {
        let sigma = DMatrix::<f64>::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let sol = solve_min_variance(&PortfolioProblem::new(sigma, 3.0)).unwrap();
        assert_eq!(sol.method, SolveMethod::ClosedForm);
        assert!((sol.weights[0] - 0.8).abs() < 1e-12);
        assert!((sol.weights[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn exposure_bound_binds() {
        // strong positive correlation makes the unconstrained portfolio short
        let sigma = DMatrix::<f64>::from_row_slice(3, 3, &[1.0, 0.9, 0.5, 0.9, 1.0, 0.5, 0.5, 0.5, 2.0]);
        let sigma = sigma + DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.5, 0.0]));
        for c in [1.0, 1.2] {
            let sol = solve_min_variance(&PortfolioProblem::new(sigma.clone(), c)).unwrap();
            let l1: f64 = sol.weights.iter().map(|v| v.abs()).sum();
            assert!(l1 <= c + 1e-8, "{l1}");
            assert!((sol.weights.sum() - 1.0).abs() < 1e-10);
            assert!(sol.kkt_residual < 1e-8);
        }
    }

    #[test]
    fn infeasible_and_indefinite_inputs() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(
            solve_min_variance(&PortfolioProblem::new(i2, 0.9)),
            Err(Error::Infeasible { .. })
        ));
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match solve_min_variance(&PortfolioProblem::new(bad.clone(), 2.0)) {
            Err(Error::NotPositiveDefinite(msg)) => assert!(msg.contains("psd_floor")),
            other => panic!("{other:?}"),
        }
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(solve_min_variance(&PortfolioProblem::new(singular, 2.0).with_psd_floor(true)).is_ok());
    }

    #[test]
    fn projection_hits_both_constraints() {
        let v = DVector::<f64>::from_vec(vec![2.0, -1.5, 0.3, 0.1]);
        let z = project_budget_l1(&v, 1.5);
        assert!((z.sum() - 1.0).abs() < 1e-12);
        let l1: f64 = z.iter().map(|x| x.abs()).sum();
        assert!((l1 - 1.5).abs() < 1e-9);
        // already feasible points are fixed
        let f = DVector::from_vec(vec![0.6, 0.4]);
        assert!((project_budget_l1(&f, 1.0) - &f).amax() < 1e-15);
    }

    #[test]
    fn single_asset_is_fully_invested() {
        let sol = solve_min_variance(&PortfolioProblem::new(DMatrix::<f64>::from_element(1, 1, 0.3), 1.0)).unwrap();
        assert!((sol.weights[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn realized_variance_of_linear_path() {
        let prices = DMatrix::from_fn(5, 1, |s, _| s as f64 * 0.01);
        let panel = IntradayPanel::new(0, (0..5).map(|s| s as f64).collect(), prices).unwrap();
        let w = DVector::from_vec(vec![1.0]);
        assert!((portfolio_realized_variance(&panel, &w, 2) - 2.0 * 0.02f64.powi(2)).abs() < 1e-15);
    }
}
