//! Method registry, the Monte Carlo prediction-error study and the rolling
//! out-of-sample pipeline.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{poet_residual, predict_baseline, tpoet_parts, BaselineMethod, BaselineSpec};
use crate::linalg::{floor_eigenvalues, symmetrize};
use crate::error::{Error, Result};
use crate::evaluation::{dm_test, mspe_losses, norm_errors, qlike, LossSeries, NormErrors, ResultsTable};
use crate::io::{read_ticks_csv, write_json};
use crate::market_sim::{simulate_paths, SimConfig, SimPaths};
use crate::portfolio::{backtest, BacktestConfig, OosDay, RiskRow, SkippedDay, WeightRecord};
use crate::ptpoet::{build_sieve, default_tau, fit, FitParams, IdioTarget, PredictOptions, SieveSpec, ThresholdRule};
use crate::realized_vol::{build_tensor, previous_tick_sync, top_eigenvalues, IntradayPanel, PrvmConfig};
use crate::ptpoet::har_covariates;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "PT-POET", alias = "PTPOET")]
    PtPoet,
    #[serde(rename = "T-POET", alias = "TPOET")]
    Tpoet,
    #[serde(rename = "POET")]
    Poet,
    #[serde(rename = "PRVM")]
    Prvm,
    #[serde(rename = "FIVAR")]
    Fivar,
    #[serde(rename = "FIVAR-H", alias = "FIVAR_H")]
    FivarH,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::PtPoet,
        Method::Tpoet,
        Method::Poet,
        Method::Prvm,
        Method::Fivar,
        Method::FivarH,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::PtPoet => "PT-POET",
            Method::Tpoet => "T-POET",
            Method::Poet => "POET",
            Method::Prvm => "PRVM",
            Method::Fivar => "FIVAR",
            Method::FivarH => "FIVAR-H",
        }
    }

    fn baseline(self) -> Option<BaselineMethod> {
        match self {
            Method::PtPoet => None,
            Method::Tpoet => Some(BaselineMethod::Tpoet),
            Method::Poet => Some(BaselineMethod::Poet),
            Method::Prvm => Some(BaselineMethod::Prvm),
            Method::Fivar => Some(BaselineMethod::Fivar),
            Method::FivarH => Some(BaselineMethod::FivarH),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Idiosyncratic term used by the tensor predictors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdioSource {
    /// The thresholded POET residual of the last in-sample day, common to
    /// POET, FIVAR, T-POET and PT-POET so they differ only in the factor part.
    #[default]
    Shared,
    /// Each method's own estimate (the averaged residual for PT-POET, the
    /// day-`D` tensor residual for T-POET).
    Own,
}

/// Settings shared by every predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub r1: usize,
    pub r2: usize,
    /// `None` selects `√(2 log p / √m)`.
    pub tau: Option<f64>,
    pub rule: ThresholdRule,
    pub sector_labels: Option<Vec<String>>,
    pub sieve: SieveSpec,
    pub idio_source: IdioSource,
    /// Which own residual PT-POET uses when `idio_source` is `own`.
    pub idio: IdioTarget,
    /// Eigenvalue floor applied to PT-POET predictions.
    pub psd_floor: Option<f64>,
    pub eigvec_window: usize,
    pub param_window: usize,
    pub ar_lag: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            r1: 3,
            r2: 1,
            tau: None,
            rule: ThresholdRule::Soft,
            sector_labels: None,
            sieve: SieveSpec::default(),
            idio_source: IdioSource::Shared,
            idio: IdioTarget::Average,
            psd_floor: None,
            eigvec_window: 21,
            param_window: 252,
            ar_lag: 1,
        }
    }
}

impl EstimatorConfig {
    pub fn tau_for(&self, p: usize, m: usize) -> f64 {
        self.tau.unwrap_or_else(|| default_tau(p, m))
    }

    fn fit_params(&self, tau: f64) -> FitParams {
        FitParams {
            r1: self.r1,
            r2: self.r2,
            tau,
            rule: self.rule,
            sector_labels: self.sector_labels.clone(),
        }
    }

    fn baseline_spec(&self, method: BaselineMethod) -> BaselineSpec {
        BaselineSpec {
            method,
            r1: self.r1,
            r2: self.r2,
            tau: self.tau,
            rule: self.rule,
            eigvec_window: self.eigvec_window,
            param_window: self.param_window,
            ar_lag: self.ar_lag,
        }
    }
}

/// One-day-ahead prediction of `method` from the in-sample tensor `y`,
/// its `D × 3` covariates and the covariates of the target day. `m` is the
/// number of intraday intervals behind `y` (used for the default τ).
pub fn predict_method(
    method: Method,
    y: &Tensor3<f64>,
    x: &DMatrix<f64>,
    x_next: &[f64],
    est: &EstimatorConfig,
    m: usize,
) -> Result<DMatrix<f64>> {
    let tau = est.tau_for(y.dims()[0], m);
    let shared = || {
        poet_residual(
            &y.slice(y.n_slices() - 1),
            est.r1,
            tau,
            est.rule,
            est.sector_labels.as_deref(),
        )
    };
    match (method, est.idio_source) {
        (Method::PtPoet, source) => {
            let sieve = build_sieve(x, est.sieve)?;
            let model = fit(y, &sieve, &est.fit_params(tau))?;
            let opts = PredictOptions {
                idio: est.idio,
                psd_floor: est.psd_floor,
                ..PredictOptions::default()
            };
            let pred = model.predict(x_next, &opts)?;
            if source == IdioSource::Own {
                return Ok(pred.matrix);
            }
            let matrix = symmetrize(&(model.fit.factor_matrix(&pred.loading)? + shared()?));
            Ok(match est.psd_floor {
                Some(f) => floor_eigenvalues(&matrix, f),
                None => matrix,
            })
        }
        (Method::Tpoet, IdioSource::Shared) => {
            let (factor, _) = tpoet_parts(y, &est.fit_params(tau))?;
            Ok(symmetrize(&(factor + shared()?)))
        }
        (other, _) => predict_baseline(
            y,
            &est.baseline_spec(other.baseline().expect("baseline method")),
            tau,
            est.sector_labels.as_deref(),
        ),
    }
}

/// Estimated tensor, realized top eigenvalues and intraday intervals for a
/// sequence of synchronized days.
#[derive(Debug, Clone)]
pub struct Estimates {
    pub tensor: Tensor3<f64>,
    pub top_eigenvalues: Vec<f64>,
    pub m: usize,
}

pub fn estimate(panels: &[IntradayPanel<f64>], prvm: &PrvmConfig) -> Result<Estimates> {
    let tensor = build_tensor(panels, prvm)?;
    let top_eigenvalues = top_eigenvalues(&tensor);
    Ok(Estimates {
        tensor,
        top_eigenvalues,
        m: panels[0].n_intervals(),
    })
}

impl Estimates {
    /// In-sample window of `days` days ending the day before `target`, its
    /// covariates, and the covariates of `target`.
    pub fn window(&self, target: usize, days: usize) -> Result<(Tensor3<f64>, DMatrix<f64>, Vec<f64>)> {
        if target < days + 21 || target > self.tensor.n_slices() {
            return Err(Error::InsufficientData {
                context: "in-sample window plus 21 covariate days",
                required: days + 21,
                actual: target.min(self.tensor.n_slices()),
            });
        }
        let y = self.tensor.slice_range(target - days, target)?;
        let x_all = har_covariates(&self.top_eigenvalues, target - days, days + 1)?;
        let x = x_all.rows(0, days).into_owned();
        let x_next = x_all.row(days).iter().copied().collect();
        Ok((y, x, x_next))
    }
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

pub const NORM_METRICS: [&str; 4] = ["frobenius", "max", "spectral", "relative_frobenius"];

fn metric_value(e: &NormErrors, metric: &str) -> Option<f64> {
    match metric {
        "frobenius" => Some(e.frobenius),
        "max" => Some(e.max),
        "spectral" => Some(e.spectral),
        "relative_frobenius" => e.relative_frobenius,
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Monte Carlo study

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    /// Simulation design; `days`, `m` and `seed` are overridden per cell.
    pub sim: SimConfig,
    pub d_grid: Vec<usize>,
    pub m_grid: Vec<usize>,
    pub n_seeds: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    pub estimator: EstimatorConfig,
    pub prvm: PrvmConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig {
                p: 50,
                ..SimConfig::default()
            },
            d_grid: vec![50, 100],
            m_grid: vec![250, 2000],
            n_seeds: 20,
            base_seed: 0,
            methods: Method::ALL.to_vec(),
            estimator: EstimatorConfig::default(),
            prvm: PrvmConfig::default(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_grid.is_empty() || self.m_grid.is_empty() || self.n_seeds == 0 || self.methods.is_empty() {
            return Err(Error::invalid("study", "grids, seeds and methods must be non-empty"));
        }
        let m_max = *self.m_grid.iter().max().expect("non-empty");
        if let Some(m) = self.m_grid.iter().find(|&&m| m == 0 || !m_max.is_multiple_of(m)) {
            return Err(Error::invalid(
                "m_grid",
                format!("{m} does not divide the finest grid {m_max}"),
            ));
        }
        if self.d_grid.contains(&0) {
            return Err(Error::invalid("d_grid", "D must be at least 1"));
        }
        Ok(())
    }
}

/// Prediction errors of one method in one study cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub seed: u64,
    pub days: usize,
    pub m: usize,
    pub method: Method,
    pub errors: NormErrors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummaryRow {
    pub method: Method,
    pub days: usize,
    pub m: usize,
    pub metric: String,
    pub median: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub records: Vec<StudyRecord>,
    pub summary: Vec<StudySummaryRow>,
}

impl StudyReport {
    pub fn median(&self, method: Method, days: usize, m: usize, metric: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.method == method && r.days == days && r.m == m && r.metric == metric)
            .map(|r| r.median)
    }

    pub fn table(&self) -> ResultsTable {
        let mut t = ResultsTable::default();
        for r in &self.summary {
            t.push(r.method.name(), &format!("D={},m={}", r.days, r.m), r.metric.as_str(), r.median);
        }
        t.metadata
            .insert("statistic".into(), "median over seeds".into());
        t
    }

    /// Writes `study.csv`, `study.json`, `figure1.csv` and `records.json`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        let table = self.table();
        let files = vec![
            dir.join("study.csv"),
            dir.join("study.json"),
            dir.join("figure1.csv"),
            dir.join("records.json"),
        ];
        table.write_csv(&files[0])?;
        table.write_json(&files[1])?;
        let mut fig = String::from("method,D,m,metric,median,log_median,n\n");
        for r in &self.summary {
            fig.push_str(&format!(
                "{},{},{},{},{:?},{:?},{}\n",
                r.method.name(),
                r.days,
                r.m,
                r.metric,
                r.median,
                r.median.ln(),
                r.n
            ));
        }
        std::fs::write(&files[2], fig).map_err(|e| Error::io(&files[2], e))?;
        write_json(&files[3], &self.records)?;
        Ok(files)
    }
}

/// Errors of every method at every `(D, m)` cell for one seed. The finest
/// grid is simulated once with `max(D)` data days; coarser grids subsample
/// it and smaller `D` use the most recent days, so all cells share the
/// target `E[Γ_{D+1} | ℐ_D]`.
pub fn study_seed(cfg: &StudyConfig, seed: u64) -> Result<Vec<StudyRecord>> {
    let d_max = *cfg.d_grid.iter().max().expect("validated");
    let m_max = *cfg.m_grid.iter().max().expect("validated");
    let sim = SimConfig {
        days: d_max,
        m: m_max,
        seed,
        ..cfg.sim.clone()
    };
    let paths = simulate_paths(&sim)?;
    let truth = &paths.next_day_truth;
    let all = paths.all_panels();
    let target = all.len();
    let mut out = Vec::new();
    for &m in &cfg.m_grid {
        let step = m_max / m;
        let panels = all
            .iter()
            .map(|d| d.subsample(step))
            .collect::<Result<Vec<_>>>()?;
        let est = estimate(&panels, &cfg.prvm)?;
        for &days in &cfg.d_grid {
            let (y, x, x_next) = est.window(target, days)?;
            for &method in &cfg.methods {
                let pred = predict_method(method, &y, &x, &x_next, &cfg.estimator, m)?;
                out.push(StudyRecord {
                    seed,
                    days,
                    m,
                    method,
                    errors: norm_errors(&pred, truth)?,
                });
            }
        }
    }
    Ok(out)
}

pub fn summarize(records: &[StudyRecord], cfg: &StudyConfig) -> Vec<StudySummaryRow> {
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        for &days in &cfg.d_grid {
            for &m in &cfg.m_grid {
                for metric in NORM_METRICS {
                    let mut v: Vec<f64> = records
                        .iter()
                        .filter(|r| r.method == method && r.days == days && r.m == m)
                        .filter_map(|r| metric_value(&r.errors, metric))
                        .collect();
                    let n = v.len();
                    if let Some(median) = median(&mut v) {
                        rows.push(StudySummaryRow {
                            method,
                            days,
                            m,
                            metric: metric.to_string(),
                            median,
                            n,
                        });
                    }
                }
            }
        }
    }
    rows
}

pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let mut records = Vec::new();
    for s in 0..cfg.n_seeds as u64 {
        let seed = cfg.base_seed.wrapping_add(s);
        records.extend(study_seed(cfg, seed).map_err(|e| e.in_stage(format!("study seed {seed}")))?);
    }
    let summary = summarize(&records, cfg);
    Ok(StudyReport { records, summary })
}

// ---------------------------------------------------------------------------
// Rolling out-of-sample pipeline

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TickSource {
    /// CSV with columns `asset,timestamp,price` (timestamps in seconds).
    pub path: PathBuf,
    /// Grid spacing in minutes.
    #[serde(default = "default_grid_minutes")]
    pub grid_minutes: f64,
    /// Session open and close in seconds of day.
    #[serde(default = "default_session_open")]
    pub session_open: f64,
    #[serde(default = "default_session_close")]
    pub session_close: f64,
}

fn default_grid_minutes() -> f64 {
    1.0
}
fn default_session_open() -> f64 {
    34_200.0
}
fn default_session_close() -> f64 {
    57_600.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Simulated days; `sim.days` must cover the largest window plus the
    /// out-of-sample days.
    Simulated(SimConfig),
    Ticks(TickSource),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyKind {
    /// `E[Γ_d | ℐ_{d−1}]`; simulated data only.
    Truth,
    /// POET estimate of the day's PRVM matrix.
    #[default]
    Poet,
}

/// A named block of consecutive out-of-sample days, `[first, last)` counted
/// from the first out-of-sample day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodSpec {
    pub name: String,
    pub first: usize,
    pub last: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub source: DataSource,
    /// In-sample windows (63, 126 or 252 days in the reference design).
    pub windows: Vec<usize>,
    /// Out-of-sample days at the end of the data.
    pub n_oos: usize,
    /// Empty means one period named `all`.
    pub periods: Vec<PeriodSpec>,
    pub proxy: ProxyKind,
    pub methods: Vec<Method>,
    pub estimator: EstimatorConfig,
    pub prvm: PrvmConfig,
    pub portfolio: BacktestConfig,
    /// Portfolio return interval in minutes.
    pub ret_interval_minutes: f64,
    /// Trading minutes in a simulated day.
    pub session_minutes: f64,
    pub hac_lags: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Simulated(SimConfig {
                p: 20,
                days: 83,
                m: 390,
                ..SimConfig::default()
            }),
            windows: vec![63],
            n_oos: 20,
            periods: Vec::new(),
            proxy: ProxyKind::Poet,
            methods: Method::ALL.to_vec(),
            estimator: EstimatorConfig::default(),
            prvm: PrvmConfig::default(),
            portfolio: BacktestConfig::default(),
            ret_interval_minutes: 10.0,
            session_minutes: 390.0,
            hac_lags: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.windows.is_empty() || self.windows.contains(&0) {
            return Err(Error::invalid("windows", "need at least one positive window"));
        }
        if self.n_oos == 0 {
            return Err(Error::invalid("n_oos", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("methods", "at least one method required"));
        }
        for p in &self.periods {
            if p.first >= p.last || p.last > self.n_oos {
                return Err(Error::invalid(
                    "periods",
                    format!("{} = [{}, {}) is empty or beyond n_oos = {}", p.name, p.first, p.last, self.n_oos),
                ));
            }
        }
        if !(self.ret_interval_minutes > 0.0 && self.session_minutes > 0.0) {
            return Err(Error::invalid("ret_interval_minutes", "intervals must be positive"));
        }
        if let DataSource::Ticks(t) = &self.source {
            if self.proxy == ProxyKind::Truth {
                return Err(Error::invalid("proxy", "the truth proxy needs simulated data"));
            }
            if !(t.grid_minutes > 0.0 && t.session_close > t.session_open) {
                return Err(Error::invalid("source.ticks", "need a positive grid and open < close"));
            }
        }
        Ok(())
    }

    fn period_list(&self) -> Vec<PeriodSpec> {
        if self.periods.is_empty() {
            vec![PeriodSpec {
                name: "all".into(),
                first: 0,
                last: self.n_oos,
            }]
        } else {
            self.periods.clone()
        }
    }
}

/// Synchronized data for the pipeline.
#[derive(Debug, Clone)]
pub struct PipelineData {
    pub panels: Vec<IntradayPanel<f64>>,
    pub asset_names: Vec<String>,
    /// Minutes per panel interval.
    pub interval_minutes: f64,
    pub paths: Option<SimPaths>,
    /// Tick days dropped during synchronization.
    pub dropped_days: Vec<SkippedDay>,
}

pub fn load_data(cfg: &PipelineConfig) -> Result<PipelineData> {
    match &cfg.source {
        DataSource::Simulated(sim) => {
            let paths = simulate_paths(sim)?;
            let panels = paths.all_panels();
            Ok(PipelineData {
                asset_names: (1..=sim.p).map(|i| format!("A{i}")).collect(),
                interval_minutes: cfg.session_minutes / sim.m as f64,
                panels,
                paths: Some(paths),
                dropped_days: Vec::new(),
            })
        }
        DataSource::Ticks(src) => {
            let ticks = read_ticks_csv(&src.path)?;
            let step = src.grid_minutes * 60.0;
            let n = ((src.session_close - src.session_open) / step).floor() as usize;
            let grid: Vec<f64> = (0..=n).map(|j| src.session_open + j as f64 * step).collect();
            let mut panels = Vec::new();
            let mut dropped = Vec::new();
            for (k, (day, series)) in ticks.days.iter().enumerate() {
                match previous_tick_sync(panels.len(), &ticks.assets, series, &grid) {
                    Ok(panel) => panels.push(panel),
                    Err(e) => {
                        log::warn!("dropping tick day {day}: {e}");
                        dropped.push(SkippedDay {
                            day_index: k,
                            method: None,
                            reason: e.to_string(),
                        });
                    }
                }
            }
            Ok(PipelineData {
                panels,
                asset_names: ticks.assets,
                interval_minutes: src.grid_minutes,
                paths: None,
                dropped_days: dropped,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmCell {
    pub a: String,
    pub b: String,
    pub statistic: Option<f64>,
    pub p_value: f64,
    pub degenerate: bool,
}

/// DM results for one loss, one period and one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmTable {
    pub metric: String,
    pub period: String,
    pub methods: Vec<String>,
    /// `p_values[i][j]` compares `methods[i]` against `methods[j]`.
    pub p_values: Vec<Vec<Option<f64>>>,
    pub cells: Vec<DmCell>,
    pub omitted: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub losses: ResultsTable,
    pub dm: Vec<DmTable>,
    pub risks: Vec<RiskRow>,
    pub weights: Vec<WeightRecord>,
    pub skipped: Vec<SkippedDay>,
}

/// Report plus the error that stopped the run, if any. Results of
/// completed windows are kept.
#[derive(Debug)]
pub struct PipelineRun {
    pub report: PipelineReport,
    pub failure: Option<Error>,
}

struct DayResult {
    target: usize,
    predictions: BTreeMap<String, DMatrix<f64>>,
    proxy: DMatrix<f64>,
}

fn window_days(
    cfg: &PipelineConfig,
    data: &PipelineData,
    est: &Estimates,
    window: usize,
) -> Result<Vec<DayResult>> {
    let total = data.panels.len();
    let first = total - cfg.n_oos;
    (first..total)
        .into_par_iter()
        .map(|target| -> Result<DayResult> {
            let (y, x, x_next) = est.window(target, window)?;
            let mut predictions = BTreeMap::new();
            for &method in &cfg.methods {
                let pred = predict_method(method, &y, &x, &x_next, &cfg.estimator, est.m)
                    .map_err(|e| e.in_stage(format!("predict {method} for day {target}")))?;
                predictions.insert(method.name().to_string(), pred);
            }
            let proxy = match cfg.proxy {
                ProxyKind::Truth => data
                    .paths
                    .as_ref()
                    .ok_or_else(|| Error::invalid("proxy", "truth needs simulated data"))?
                    .conditional_truth(target)?,
                ProxyKind::Poet => {
                    let p = est.tensor.dims()[0];
                    crate::baselines::predict_poet(
                        &est.tensor.slice(target),
                        cfg.estimator.r1,
                        cfg.estimator.tau_for(p, est.m),
                        cfg.estimator.rule,
                        cfg.estimator.sector_labels.as_deref(),
                    )?
                }
            };
            Ok(DayResult {
                target,
                predictions,
                proxy,
            })
        })
        .collect()
}

fn dm_table(metric: &str, period: &str, series: &[(String, Option<Vec<f64>>)], lags: Option<usize>) -> Result<DmTable> {
    let usable: Vec<LossSeries> = series
        .iter()
        .filter_map(|(m, l)| l.as_ref().map(|l| LossSeries::new(m.clone(), l.clone())))
        .collect::<Result<_>>()?;
    let omitted = series
        .iter()
        .filter(|(_, l)| l.is_none())
        .map(|(m, _)| m.clone())
        .collect();
    let k = usable.len();
    let mut p_values = vec![vec![None; k]; k];
    let mut cells = Vec::new();
    for i in 0..k {
        for j in 0..k {
            if i == j || usable[i].losses.len() < 10 {
                continue;
            }
            let r = dm_test(&usable[i], &usable[j], lags)?;
            p_values[i][j] = Some(r.p_value);
            if i < j {
                cells.push(DmCell {
                    a: usable[i].method.clone(),
                    b: usable[j].method.clone(),
                    statistic: r.statistic,
                    p_value: r.p_value,
                    degenerate: r.degenerate,
                });
            }
        }
    }
    Ok(DmTable {
        metric: metric.into(),
        period: period.into(),
        methods: usable.into_iter().map(|s| s.method).collect(),
        p_values,
        cells,
        omitted,
    })
}

fn score_window(
    cfg: &PipelineConfig,
    data: &PipelineData,
    window: usize,
    days: &[DayResult],
    report: &mut PipelineReport,
) -> Result<()> {
    let names: Vec<String> = cfg.methods.iter().map(|m| m.name().to_string()).collect();
    let first = data.panels.len() - cfg.n_oos;
    let step = (cfg.ret_interval_minutes / data.interval_minutes).round().max(1.0) as usize;
    let bt_cfg = BacktestConfig {
        ret_step: step,
        ..cfg.portfolio.clone()
    };
    for period in cfg.period_list() {
        let label = format!("{}/w{}", period.name, window);
        let block = &days[period.first..period.last];
        let proxies: Vec<DMatrix<f64>> = block.iter().map(|d| d.proxy.clone()).collect();
        let mut mspe_series = Vec::new();
        let mut qlike_series = Vec::new();
        for name in &names {
            let preds: Vec<DMatrix<f64>> = block.iter().map(|d| d.predictions[name].clone()).collect();
            let losses = mspe_losses(&preds, &proxies)?;
            report
                .losses
                .push(name, &label, "MSPE", losses.iter().sum::<f64>() / losses.len() as f64);
            mspe_series.push((name.clone(), Some(losses)));
            let q = qlike(&preds, &proxies)?;
            match q.value {
                Some(v) => report.losses.push(name, &label, "QLIKE", v),
                None => report.losses.push(name, &label, "QLIKE", f64::NAN),
            }
            report.losses.push(name, &label, "QLIKE_excluded_days", q.excluded as f64);
            let full = q.losses.iter().copied().collect::<Option<Vec<f64>>>();
            qlike_series.push((name.clone(), full));
        }
        report.dm.push(dm_table("MSPE", &label, &mspe_series, cfg.hac_lags)?);
        report.dm.push(dm_table("QLIKE", &label, &qlike_series, cfg.hac_lags)?);

        let oos: Vec<OosDay> = block
            .iter()
            .map(|d| OosDay {
                day_index: d.target - first,
                panel: data.panels.get(d.target).cloned(),
                predictions: d.predictions.clone(),
            })
            .collect();
        let bt = backtest(&oos, &label, &names, &bt_cfg)?;
        report.risks.extend(bt.risks);
        report.weights.extend(bt.weights);
        report.skipped.extend(bt.skipped);
    }
    Ok(())
}

/// Runs every window on the same estimated tensor. The window loop stops
/// at the first error; completed windows stay in the report.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    let data = load_data(cfg).map_err(|e| e.in_stage("load data"))?;
    let max_w = *cfg.windows.iter().max().expect("validated");
    let total = data.panels.len();
    if total < cfg.n_oos + max_w + 21 {
        return Err(Error::InsufficientData {
            context: "days for the largest window, 21 covariate days and the out-of-sample days",
            required: cfg.n_oos + max_w + 21,
            actual: total,
        }
        .in_stage("load data"));
    }
    let est = estimate(&data.panels, &cfg.prvm).map_err(|e| e.in_stage("estimate"))?;
    let mut report = PipelineReport {
        skipped: data.dropped_days.clone(),
        ..PipelineReport::default()
    };
    let meta = &mut report.losses.metadata;
    meta.insert("proxy".into(), format!("{:?}", cfg.proxy).to_lowercase());
    meta.insert("mspe_presentation_scale".into(), "1e4".into());
    meta.insert("qlike_presentation_scale".into(), "1e-3".into());
    meta.insert("assets".into(), data.asset_names.join(" "));
    for &w in &cfg.windows {
        let scored = window_days(cfg, &data, &est, w)
            .and_then(|days| score_window(cfg, &data, w, &days, &mut report));
        if let Err(e) = scored {
            return Ok(PipelineRun {
                report,
                failure: Some(e.in_stage(format!("window {w}"))),
            });
        }
    }
    Ok(PipelineRun {
        report,
        failure: None,
    })
}

impl PipelineReport {
    /// Writes `losses.{csv,json}`, `dm.json`, one `dm_<metric>_<period>.csv`
    /// per table, `risk.csv`, `risk.json`, `skipped.json` and, if any were
    /// kept, `weights.csv`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        let mut files = Vec::new();
        let p = dir.join("losses.csv");
        self.losses.write_csv(&p)?;
        files.push(p);
        let p = dir.join("losses.json");
        self.losses.write_json(&p)?;
        files.push(p);
        let p = dir.join("dm.json");
        write_json(&p, &self.dm)?;
        files.push(p);
        for t in &self.dm {
            let stem = format!("dm_{}_{}", t.metric, t.period.replace('/', "_"));
            let p = dir.join(format!("{stem}.csv"));
            let mut s = String::from("method");
            for m in &t.methods {
                s.push(',');
                s.push_str(m);
            }
            s.push('\n');
            for (i, row) in t.p_values.iter().enumerate() {
                s.push_str(&t.methods[i]);
                for v in row {
                    s.push(',');
                    if let Some(v) = v {
                        s.push_str(&format!("{v:?}"));
                    }
                }
                s.push('\n');
            }
            std::fs::write(&p, s).map_err(|e| Error::io(&p, e))?;
            files.push(p);
        }
        let p = dir.join("risk.csv");
        let mut s = String::from("method,period,c,avg_risk\n");
        for r in &self.risks {
            s.push_str(&format!("{},{},{:?},{:?}\n", r.method, r.period, r.c, r.avg_risk));
        }
        std::fs::write(&p, s).map_err(|e| Error::io(&p, e))?;
        files.push(p);
        let p = dir.join("risk.json");
        write_json(&p, &self.risks)?;
        files.push(p);
        let p = dir.join("skipped.json");
        write_json(&p, &self.skipped)?;
        files.push(p);
        if !self.weights.is_empty() {
            let p = dir.join("weights.csv");
            let mut s = String::from("method,day,c,weights\n");
            for w in &self.weights {
                let ws: Vec<String> = w.weights.iter().map(|v| format!("{v:?}")).collect();
                s.push_str(&format!("{},{},{:?},{}\n", w.method, w.day_index, w.c, ws.join(";")));
            }
            std::fs::write(&p, s).map_err(|e| Error::io(&p, e))?;
            files.push(p);
        }
        Ok(files)
    }
}
