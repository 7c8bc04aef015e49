//! `voltensor` batch driver.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use serde::Serialize;
use voltensor::io::{
    load_model, read_matrix_csv, read_panel_csv, read_tensor, save_model, write_json, write_matrix_csv,
    write_panel_csv, write_tensor,
};
use voltensor::market_sim::{estimate_covariates, simulate_paths};
use voltensor::ptpoet::{build_sieve, fit, PredictOptions};
use voltensor::realized_vol::{previous_tick_sync, IntradayPanel};
use voltensor::study::{estimate, run_pipeline, run_study};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "voltensor", version, about = "Volatility matrix prediction pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CommandKind {
    Simulate,
    Estimate,
    Fit,
    Predict,
    Evaluate,
    Backtest,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate intraday prices with ground truth.
    Simulate(Args),
    /// Estimate daily volatility matrices and covariates.
    Estimate(Args),
    /// Fit the projected tensor model.
    Fit(Args),
    /// Predict the next day's volatility matrix from a fitted model.
    Predict(Args),
    /// Monte Carlo prediction-error study.
    Evaluate(Args),
    /// Rolling out-of-sample losses, DM tests and portfolio risks.
    Backtest(Args),
}

#[derive(clap::Args, Clone)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Error tagged with the stage that raised it.
struct StageError {
    stage: &'static str,
    code: u8,
    message: String,
}

fn stage<E: std::fmt::Display>(stage: &'static str, code: u8) -> impl Fn(E) -> StageError {
    move |e| StageError {
        stage,
        code,
        message: e.to_string(),
    }
}

const CONFIG: (&str, u8) = ("config", 2);
const IO: (&str, u8) = ("io", 3);

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    config: &'a RunConfig,
    outputs: Vec<String>,
}

struct Context {
    config: RunConfig,
    /// Directory of the config file; relative input paths resolve here.
    base: PathBuf,
    out: PathBuf,
    outputs: Vec<PathBuf>,
}

impl Context {
    fn rel(&self, p: &Path) -> String {
        p.strip_prefix(&self.out).unwrap_or(p).display().to_string()
    }

    fn write_manifest(&self, command: &str, failure: Option<&StageError>) -> Result<(), StageError> {
        let mut outputs: Vec<String> = self.outputs.iter().map(|p| self.rel(p)).collect();
        outputs.sort();
        let m = Manifest {
            tool: "voltensor",
            version: env!("CARGO_PKG_VERSION"),
            command,
            status: if failure.is_some() { "failed" } else { "ok" },
            error: failure.map(|f| format!("[{}] {}", f.stage, f.message)),
            config: &self.config,
            outputs,
        };
        write_json(self.out.join("manifest.json"), &m).map_err(stage(IO.0, IO.1))
    }
}

fn load_config(args: &Args) -> Result<Context, StageError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| stage(CONFIG.0, CONFIG.1)(format!("{}: {e}", args.config.display())))?;
    let mut config = RunConfig::from_json(&text)
        .map_err(|e| stage(CONFIG.0, CONFIG.1)(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed.or(config.seed) {
        config.apply_seed(seed);
    }
    let base = args
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let mut resolved = config.clone();
    resolved.resolve_paths(&base);
    let out = args
        .out
        .clone()
        .or(resolved.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).map_err(|e| stage(IO.0, IO.1)(format!("{}: {e}", out.display())))?;
    Ok(Context {
        config,
        base,
        out,
        outputs: Vec::new(),
    })
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T, StageError> {
    s.as_ref()
        .ok_or_else(|| stage(CONFIG.0, CONFIG.1)(format!("config has no `{name}` section")))
}

fn mkdir(p: &Path) -> Result<(), StageError> {
    fs::create_dir_all(p).map_err(|e| stage(IO.0, IO.1)(format!("{}: {e}", p.display())))
}

fn write_panels(
    dir: &Path,
    panels: &[IntradayPanel<f64>],
    names: &[String],
    outputs: &mut Vec<PathBuf>,
) -> Result<(), StageError> {
    mkdir(dir)?;
    for (k, panel) in panels.iter().enumerate() {
        let p = dir.join(format!("day_{k:04}.csv"));
        write_panel_csv(&p, panel, names).map_err(stage(IO.0, IO.1))?;
        outputs.push(p);
    }
    Ok(())
}

fn read_panels(dir: &Path) -> Result<(Vec<IntradayPanel<f64>>, Vec<String>), StageError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| stage(IO.0, IO.1)(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut panels = Vec::with_capacity(files.len());
    let mut names = Vec::new();
    for (k, f) in files.iter().enumerate() {
        let (panel, n) = read_panel_csv(f, k).map_err(stage(IO.0, IO.1))?;
        if k > 0 && n != names {
            return Err(stage(IO.0, IO.1)(format!("{}: asset columns differ from the first day", f.display())));
        }
        names = n;
        panels.push(panel);
    }
    Ok((panels, names))
}

fn row_matrix(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v)
}

fn cmd_simulate(ctx: &mut Context) -> Result<(), StageError> {
    let sim = section(&ctx.config.simulate, "simulate")?.clone();
    let st = stage("simulate", 4);
    let paths = simulate_paths(&sim).map_err(&st)?;
    let (_, x, x_next) =
        estimate_covariates(&paths.all_panels(), sim.days, &Default::default()).map_err(&st)?;
    let names: Vec<String> = (1..=sim.p).map(|i| format!("A{i}")).collect();
    let out = ctx.out.clone();
    let io = stage(IO.0, IO.1);
    write_panels(&out.join("panels"), &paths.noisy_prices, &names, &mut ctx.outputs)?;
    write_panels(&out.join("history"), &paths.history_prices, &names, &mut ctx.outputs)?;
    let truth = out.join("truth");
    mkdir(&truth)?;
    for (stem, t) in [
        ("true_tensor", &paths.true_tensor),
        ("true_factor_tensor", &paths.true_factor_tensor),
        ("true_idio", &paths.true_idio),
    ] {
        let h = write_tensor(&truth, stem, t).map_err(&io)?;
        ctx.outputs.push(h);
        ctx.outputs.push(truth.join(format!("{stem}.bin")));
    }
    for (name, m) in [
        ("next_day_truth.csv", &paths.next_day_truth),
        ("loadings.csv", &paths.loadings),
        ("loading_q.csv", &paths.loading_q),
        ("idio.csv", &paths.idio),
    ] {
        let p = truth.join(name);
        write_matrix_csv(&p, m).map_err(&io)?;
        ctx.outputs.push(p);
    }
    let p = out.join("covariates.csv");
    write_matrix_csv(&p, &x).map_err(&io)?;
    ctx.outputs.push(p);
    let p = out.join("covariates_next.csv");
    write_matrix_csv(&p, &row_matrix(x_next.as_slice())).map_err(&io)?;
    ctx.outputs.push(p);
    Ok(())
}

fn cmd_estimate(ctx: &mut Context) -> Result<(), StageError> {
    let sec = section(&resolved(ctx).estimate, "estimate")?.clone();
    let cfg_err = stage(CONFIG.0, CONFIG.1);
    let (history, data, names) = match (&sec.panels_dir, &sec.ticks) {
        (Some(dir), None) => {
            let (data, names) = read_panels(dir)?;
            let history = match &sec.history_dir {
                Some(h) => read_panels(h)?.0,
                None => Vec::new(),
            };
            (history, data, names)
        }
        (None, Some(t)) => {
            let ticks = voltensor::io::read_ticks_csv(&t.path).map_err(stage(IO.0, IO.1))?;
            let step = t.grid_minutes * 60.0;
            let n = ((t.session_close - t.session_open) / step).floor() as usize;
            let grid: Vec<f64> = (0..=n).map(|j| t.session_open + j as f64 * step).collect();
            let mut panels = Vec::new();
            for (day, series) in &ticks.days {
                match previous_tick_sync(panels.len(), &ticks.assets, series, &grid) {
                    Ok(p) => panels.push(p),
                    Err(e) => log::warn!("dropping tick day {day}: {e}"),
                }
            }
            (Vec::new(), panels, ticks.assets)
        }
        _ => return Err(cfg_err("estimate needs exactly one of `panels_dir` and `ticks`")),
    };
    let mut all = history;
    let h = all.len();
    all.extend(data);
    let first = h.max(21);
    if all.len() <= first {
        return Err(stage("estimate", 5)(format!(
            "need more than {first} days (21 for the covariates), got {}",
            all.len()
        )));
    }
    let st = stage("estimate", 5);
    let est = estimate(&all, &sec.prvm).map_err(&st)?;
    let days = all.len() - first;
    let (y, x, x_next) = est.window(all.len(), days).map_err(&st)?;
    let io = stage(IO.0, IO.1);
    let out = ctx.out.clone();
    let h = write_tensor(&out, "tensor", &y).map_err(&io)?;
    ctx.outputs.push(h);
    ctx.outputs.push(out.join("tensor.bin"));
    let p = out.join("covariates.csv");
    write_matrix_csv(&p, &x).map_err(&io)?;
    ctx.outputs.push(p);
    let p = out.join("covariates_next.csv");
    write_matrix_csv(&p, &row_matrix(&x_next)).map_err(&io)?;
    ctx.outputs.push(p);
    let p = out.join("top_eigenvalues.csv");
    write_matrix_csv(&p, &DMatrix::from_column_slice(est.top_eigenvalues.len(), 1, &est.top_eigenvalues))
        .map_err(&io)?;
    ctx.outputs.push(p);
    let p = out.join("estimate.json");
    write_json(
        &p,
        &serde_json::json!({ "assets": names, "m": est.m, "days": days, "covariate_days": first }),
    )
    .map_err(&io)?;
    ctx.outputs.push(p);
    Ok(())
}

fn resolved(ctx: &Context) -> RunConfig {
    let mut rc = ctx.config.clone();
    rc.resolve_paths(&ctx.base);
    rc
}

fn cmd_fit(ctx: &mut Context) -> Result<(), StageError> {
    let rc = resolved(ctx);
    let sec = section(&rc.fit, "fit")?;
    let io = stage(IO.0, IO.1);
    let st = stage("fit", 6);
    let y = read_tensor(&sec.tensor).map_err(&io)?;
    let x = read_matrix_csv(&sec.covariates).map_err(&io)?;
    let tau = match (sec.estimator.tau, sec.m) {
        (Some(t), _) => t,
        (None, Some(m)) => sec.estimator.tau_for(y.dims()[0], m),
        (None, None) => {
            return Err(stage(CONFIG.0, CONFIG.1)("fit needs `m` when `estimator.tau` is unset"));
        }
    };
    let sieve = build_sieve(&x, sec.estimator.sieve).map_err(&st)?;
    let params = voltensor::ptpoet::FitParams {
        r1: sec.estimator.r1,
        r2: sec.estimator.r2,
        tau,
        rule: sec.estimator.rule,
        sector_labels: sec.estimator.sector_labels.clone(),
    };
    let model = fit(&y, &sieve, &params).map_err(&st)?;
    let dir = ctx.out.join("model");
    mkdir(&dir)?;
    save_model(&dir, &model).map_err(&io)?;
    ctx.outputs.push(dir.join("model.json"));
    ctx.outputs.push(dir.join("model.bin"));
    for (name, m) in [("q_hat.csv", model.q_hat()), ("g_hat.csv", model.g_hat())] {
        let p = ctx.out.join(name);
        write_matrix_csv(&p, m).map_err(&io)?;
        ctx.outputs.push(p);
    }
    Ok(())
}

fn cmd_predict(ctx: &mut Context) -> Result<(), StageError> {
    let rc = resolved(ctx);
    let sec = section(&rc.predict, "predict")?;
    let io = stage(IO.0, IO.1);
    let model = load_model(&sec.model_dir).map_err(&io)?;
    let x = read_matrix_csv(&sec.covariates_next).map_err(&io)?;
    if x.nrows() != 1 {
        return Err(stage(CONFIG.0, CONFIG.1)(format!(
            "{}: expected one row of covariates, got {}",
            sec.covariates_next.display(),
            x.nrows()
        )));
    }
    let opts = PredictOptions {
        idio: sec.idio,
        psd_floor: sec.psd_floor,
        ..PredictOptions::default()
    };
    let x: Vec<f64> = x.iter().copied().collect();
    let pred = model.predict(&x, &opts).map_err(stage("predict", 7))?;
    let p = ctx.out.join("prediction.csv");
    write_matrix_csv(&p, &pred.matrix).map_err(&io)?;
    ctx.outputs.push(p);
    let p = ctx.out.join("prediction.json");
    write_json(
        &p,
        &serde_json::json!({ "loading": pred.loading, "extrapolated_covariates": pred.extrapolated }),
    )
    .map_err(&io)?;
    ctx.outputs.push(p);
    Ok(())
}

fn cmd_evaluate(ctx: &mut Context) -> Result<(), StageError> {
    let cfg = section(&ctx.config.evaluate, "evaluate")?.clone();
    let report = run_study(&cfg).map_err(stage("evaluate", 8))?;
    let files = report.write(&ctx.out).map_err(stage(IO.0, IO.1))?;
    ctx.outputs.extend(files);
    Ok(())
}

fn cmd_backtest(ctx: &mut Context) -> Result<(), StageError> {
    let cfg = section(&resolved(ctx).backtest, "backtest")?.clone();
    let run = run_pipeline(&cfg).map_err(stage("backtest", 9))?;
    let files = run.report.write(&ctx.out).map_err(stage(IO.0, IO.1))?;
    ctx.outputs.extend(files);
    match run.failure {
        Some(e) => Err(stage("backtest", 9)(e)),
        None => Ok(()),
    }
}

fn run(kind: CommandKind, args: &Args) -> Result<(), StageError> {
    let mut ctx = load_config(args)?;
    let name = match kind {
        CommandKind::Simulate => "simulate",
        CommandKind::Estimate => "estimate",
        CommandKind::Fit => "fit",
        CommandKind::Predict => "predict",
        CommandKind::Evaluate => "evaluate",
        CommandKind::Backtest => "backtest",
    };
    let result = match kind {
        CommandKind::Simulate => cmd_simulate(&mut ctx),
        CommandKind::Estimate => cmd_estimate(&mut ctx),
        CommandKind::Fit => cmd_fit(&mut ctx),
        CommandKind::Predict => cmd_predict(&mut ctx),
        CommandKind::Evaluate => cmd_evaluate(&mut ctx),
        CommandKind::Backtest => cmd_backtest(&mut ctx),
    };
    ctx.write_manifest(name, result.as_ref().err())?;
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Simulate(a) => (CommandKind::Simulate, a),
        Command::Estimate(a) => (CommandKind::Estimate, a),
        Command::Fit(a) => (CommandKind::Fit, a),
        Command::Predict(a) => (CommandKind::Predict, a),
        Command::Evaluate(a) => (CommandKind::Evaluate, a),
        Command::Backtest(a) => (CommandKind::Backtest, a),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {}", e.stage, e.message);
            ExitCode::from(e.code)
        }
    }
}
