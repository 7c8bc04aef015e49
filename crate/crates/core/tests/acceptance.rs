//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use voltensor::evaluation::{dm_test, norm_errors, qlike_day, LossSeries};
use voltensor::linalg::{leading_left_singular_vectors, max_principal_angle_sin};
use voltensor::market_sim::{simulate_paths, SimConfig};
use voltensor::portfolio::{solve_min_variance, PortfolioProblem};
use voltensor::ptpoet::{build_sieve, fit, select_rank, FitParams, RankCriterion, SieveSpec, ThresholdRule};
use voltensor::realized_vol::{prvm, realized_covariance, IntradayPanel, PrvmConfig};
use voltensor::study::{estimate, run_pipeline, run_study, Method, PipelineConfig, StudyConfig, StudyReport};
use voltensor::tensor::tucker_reconstruct;
use voltensor::{Mode, Tensor3};

// Pinned tolerances.
const EXACT_REL_TOL: f64 = 1e-6;
const EXACT_ANGLE_TOL: f64 = 1e-6;
const EXACT_RUNTIME: Duration = Duration::from_secs(10);
const STUDY_RUNTIME: Duration = Duration::from_secs(30 * 60);
const RANK_SEEDS: u64 = 50;
const RANK_MIN_SHARE: f64 = 0.90;
const RANK_R_MAX: usize = 10;
const PRVM_DIAG_TOL: f64 = 0.10;
const JUMP_TRUNCATED_MAX_MOVE: f64 = 0.15;
const JUMP_UNTRUNCATED_MIN_MOVE: f64 = 1.0;
const KKT_TOL: f64 = 1e-8;
const CLOSED_FORM_TOL: f64 = 1e-6;
const SIMPLEX_GAP_TOL: f64 = 1e-6;
const DM_REPS: usize = 10_000;
const DM_T: usize = 200;
const DM_SIZE_BAND: (f64, f64) = (0.035, 0.065);
const METRIC_TOL: f64 = 1e-10;
const TENSOR_CASES: usize = 100;
const TENSOR_TOL: f64 = 1e-10;
const TUCKER_TOL: f64 = 1e-8;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn orthonormal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    gaussian(rng, r, c).qr().q().columns(0, c).into_owned()
}

fn random_pd(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    let a = gaussian(rng, p, p);
    let d = DMatrix::from_diagonal(&DVector::from_fn(p, |_, _| rng.random_range(0.1..1.0)));
    &a * a.transpose() / p as f64 + d
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

// 1 ---------------------------------------------------------------------------

fn exact_recovery() -> Outcome {
    let start = Instant::now();
    let (p, days, r1, r2) = (50, 100, 3, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let q = orthonormal(&mut rng, p, r1);
    let x = DMatrix::from_fn(days, 2, |_, _| rng.random_range(1.0..2.0));
    // Both loading columns are combinations of x, x² terms.
    let v = DMatrix::from_fn(days, r2, |l, k| {
        let (a, b) = (x[(l, 0)], x[(l, 1)]);
        if k == 0 {
            a + 0.3 * b * b
        } else {
            2.0 * b + a * a
        }
    });
    let mut core = Tensor3::zeros(r1, r1, r2);
    for k in 0..r2 {
        let b = gaussian(&mut rng, r1, r1);
        let f = (&b * b.transpose()).scale(p as f64);
        for i in 0..r1 {
            for j in 0..r1 {
                core.set(i, j, k, f[(i, j)]);
            }
        }
    }
    let y = tucker_reconstruct(&core, &q, &v).unwrap();
    let sieve = build_sieve(&x, SieveSpec::default()).unwrap();
    let model = fit(&y, &sieve, &FitParams::new(r1, r2, 0.0, ThresholdRule::Soft)).unwrap();
    let err = rel(&model.fit.factor_tensor().unwrap().matricize(Mode::One), &y.matricize(Mode::One));
    let angle = max_principal_angle_sin(model.q_hat(), &q);
    let elapsed = start.elapsed();
    Outcome::new(
        err < EXACT_REL_TOL && angle < EXACT_ANGLE_TOL && elapsed < EXACT_RUNTIME,
        format!("rel_frob={err:.2e} sin_angle={angle:.2e} runtime={elapsed:.2?}"),
    )
}

// 2, 3 ------------------------------------------------------------------------

fn study() -> (StudyReport, Duration) {
    let cfg = StudyConfig {
        sim: SimConfig {
            p: 50,
            ..SimConfig::default()
        },
        d_grid: vec![50, 100],
        m_grid: vec![250, 2000],
        n_seeds: 20,
        ..StudyConfig::default()
    };
    assert!(cfg.estimator.tau.is_none(), "study must use the default threshold");
    let start = Instant::now();
    let report = run_study(&cfg).unwrap();
    (report, start.elapsed())
}

fn study_ordering(report: &StudyReport, elapsed: Duration) -> Outcome {
    let mut pass = elapsed < STUDY_RUNTIME;
    let mut detail = Vec::new();
    for metric in ["frobenius", "max", "spectral", "relative_frobenius"] {
        let med = |m: Method| report.median(m, 100, 2000, metric).unwrap();
        let (pt, t, poet, rv) = (med(Method::PtPoet), med(Method::Tpoet), med(Method::Poet), med(Method::Prvm));
        let ok = pt < t && pt < poet && poet < rv;
        pass &= ok;
        detail.push(format!(
            "{metric}[{}]: PT-POET={pt:.4} T-POET={t:.4} POET={poet:.4} PRVM={rv:.4}",
            if ok { "ok" } else { "violated" }
        ));
    }
    detail.push(format!("runtime={elapsed:.1?}"));
    Outcome::new(pass, detail.join("; "))
}

fn study_trends(report: &StudyReport) -> Outcome {
    let med = |d, m| report.median(Method::PtPoet, d, m, "max").unwrap();
    let (m_lo, m_hi) = (med(100, 250), med(100, 2000));
    let (d_lo, d_hi) = (med(50, 2000), med(100, 2000));
    Outcome::new(
        m_hi <= m_lo && d_hi <= d_lo,
        format!("max norm: m 250->2000 {m_lo:.4}->{m_hi:.4}; D 50->100 {d_lo:.4}->{d_hi:.4}"),
    )
}

// 4 ---------------------------------------------------------------------------

fn rank_recovery() -> Outcome {
    let mut hits = [0usize; 2];
    let mut misses: Vec<String> = Vec::new();
    for seed in 0..RANK_SEEDS {
        let sim = SimConfig {
            p: 50,
            days: 100,
            m: 2000,
            seed,
            ..SimConfig::default()
        };
        let paths = simulate_paths(&sim).unwrap();
        let y = estimate(&paths.noisy_prices, &PrvmConfig::default()).unwrap().tensor;
        for (k, c) in [RankCriterion::Gap, RankCriterion::Ratio].into_iter().enumerate() {
            let r1 = select_rank(&y, Mode::One, RANK_R_MAX, c).unwrap();
            let r2 = select_rank(&y, Mode::Three, RANK_R_MAX, c).unwrap();
            if (r1, r2) == (3, 1) {
                hits[k] += 1;
            } else {
                misses.push(format!("{c:?}@{seed}=({r1},{r2})"));
            }
        }
    }
    let n = RANK_SEEDS as f64;
    let (gap, ratio) = (hits[0] as f64 / n, hits[1] as f64 / n);
    misses.truncate(12);
    Outcome::new(
        gap >= RANK_MIN_SHARE && ratio >= RANK_MIN_SHARE,
        format!("gap={gap:.2} ratio={ratio:.2} first misses: {}", misses.join(" ")),
    )
}

// 5 ---------------------------------------------------------------------------

fn brownian_panel(rng: &mut ChaCha8Rng, day: usize, chol: &DMatrix<f64>, m: usize) -> IntradayPanel<f64> {
    let p = chol.nrows();
    let sd = (1.0 / m as f64).sqrt();
    let mut prices = DMatrix::zeros(m + 1, p);
    for k in 1..=m {
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal) * sd);
        let dx = chol * z;
        for i in 0..p {
            prices[(k, i)] = prices[(k - 1, i)] + dx[i];
        }
    }
    let times = (0..=m).map(|k| k as f64 / m as f64).collect();
    IntradayPanel::new(day, times, prices).unwrap()
}

fn prvm_correctness() -> Outcome {
    let m = 10_000;
    let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.2, 0.3, 1.0, 0.1, 0.2, 0.1, 1.0]);
    let chol = sigma.clone().cholesky().unwrap().l();
    let cfg = PrvmConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut diag_sum = DVector::zeros(3);
    let days = 200;
    let mut jump_ok = true;
    let (mut worst_trunc, mut least_rv) = (0.0f64, f64::INFINITY);
    for day in 0..days {
        let panel = brownian_panel(&mut rng, day, &chol, m);
        let est = prvm(&panel, &cfg).unwrap();
        diag_sum += est.diagonal();
        if day < 20 {
            // One jump of three daily standard deviations in asset 0.
            let mut jumped = panel.log_prices.clone();
            for k in m / 2..=m {
                jumped[(k, 0)] += 3.0;
            }
            let jp = IntradayPanel::new(day, panel.times.clone(), jumped).unwrap();
            let trunc_move = (prvm(&jp, &cfg).unwrap()[(0, 0)] / est[(0, 0)] - 1.0).abs();
            let rv0 = realized_covariance(&panel)[(0, 0)];
            let rv_move = (realized_covariance(&jp)[(0, 0)] / rv0 - 1.0).abs();
            worst_trunc = worst_trunc.max(trunc_move);
            least_rv = least_rv.min(rv_move);
            jump_ok &= trunc_move < JUMP_TRUNCATED_MAX_MOVE && rv_move > JUMP_UNTRUNCATED_MIN_MOVE;
        }
    }
    let avg = diag_sum / days as f64;
    let worst = avg.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    Outcome::new(
        worst < PRVM_DIAG_TOL && jump_ok,
        format!(
            "avg diagonal={:.4?} max rel err={worst:.4}; jump (20 paired days): truncated move <= {worst_trunc:.4}, \
             realized variance move >= {least_rv:.2}",
            avg.as_slice()
        ),
    )
}

// 6 ---------------------------------------------------------------------------

/// Stationarity, feasibility and complementarity of `(w, μ, λ)` for
/// `min wᵀΣw s.t. 1ᵀw = 1, ‖w‖₁ ≤ c`, scaled by `max(1, max|Σ|)`.
fn kkt(sigma: &DMatrix<f64>, c: f64, w: &DVector<f64>, mu: f64, lambda: f64) -> f64 {
    let g = sigma * w * 2.0;
    let mut r = 0.0f64;
    for i in 0..w.len() {
        let s = g[i] - mu;
        r = r.max(if w[i].abs() > 1e-12 {
            (s + lambda * w[i].signum()).abs()
        } else {
            (s.abs() - lambda).max(0.0)
        });
    }
    let l1 = w.abs().sum();
    r = r.max((w.sum() - 1.0).abs());
    r = r.max((l1 - c).max(0.0));
    r = r.max((-lambda).max(0.0));
    r = r.max((lambda * (l1 - c)).abs());
    r / sigma.amax().max(1.0)
}

fn closed_form(sigma: &DMatrix<f64>) -> DVector<f64> {
    let x = sigma.clone().cholesky().unwrap().solve(&DVector::from_element(sigma.nrows(), 1.0));
    let s = x.sum();
    x / s
}

/// Exact long-only minimum: every support, equality-constrained solve,
/// feasible candidates only.
fn simplex_oracle(sigma: &DMatrix<f64>) -> f64 {
    let p = sigma.nrows();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << p) {
        let idx: Vec<usize> = (0..p).filter(|i| mask & (1 << i) != 0).collect();
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| sigma[(idx[a], idx[b])]);
        let w = closed_form(&sub);
        if w.iter().all(|&v| v >= -1e-14) {
            best = best.min(w.dot(&(&sub * &w)));
        }
    }
    best
}

fn portfolio_solver() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst_kkt, mut worst_cf, mut worst_neg, mut worst_gap) = (0.0f64, 0.0f64, 0.0f64, f64::NEG_INFINITY);
    let mut slack_cases = 0;
    for case in 0..100 {
        let p = [3, 10, 50][case % 3];
        let mut sigma = random_pd(&mut rng, p);
        if case % 2 == 0 {
            // Common factor: pushes the unconstrained solution to large short positions.
            let b = gaussian(&mut rng, p, 1).add_scalar(1.0);
            sigma += &b * b.transpose();
        }
        let c = rng.random_range(1.0..3.0);
        let sol = solve_min_variance(&PortfolioProblem::new(sigma.clone(), c)).unwrap();
        worst_kkt = worst_kkt.max(kkt(&sigma, c, &sol.weights, sol.mu, sol.lambda));

        let cf = closed_form(&sigma);
        let slack_c = cf.abs().sum() + 0.5;
        let slack = solve_min_variance(&PortfolioProblem::new(sigma.clone(), slack_c)).unwrap();
        worst_cf = worst_cf.max((&slack.weights - &cf).amax());
        worst_kkt = worst_kkt.max(kkt(&sigma, slack_c, &slack.weights, slack.mu, slack.lambda));
        if cf.abs().sum() <= c {
            slack_cases += 1;
            worst_cf = worst_cf.max((&sol.weights - &cf).amax());
        }

        let long = solve_min_variance(&PortfolioProblem::new(sigma.clone(), 1.0)).unwrap();
        worst_neg = worst_neg.max(long.weights.iter().map(|v| -v).fold(0.0, f64::max));
        worst_kkt = worst_kkt.max(kkt(&sigma, 1.0, &long.weights, long.mu, long.lambda));
    }
    for _ in 0..100 {
        let mut sigma = random_pd(&mut rng, 3);
        let b = gaussian(&mut rng, 3, 1);
        sigma += &b * b.transpose();
        let sol = solve_min_variance(&PortfolioProblem::new(sigma.clone(), 1.0)).unwrap();
        let obj = sol.weights.dot(&(&sigma * &sol.weights));
        worst_gap = worst_gap.max((obj - simplex_oracle(&sigma)).abs());
    }
    Outcome::new(
        worst_kkt < KKT_TOL && worst_cf < CLOSED_FORM_TOL && worst_neg <= 0.0 && worst_gap < SIMPLEX_GAP_TOL,
        format!(
            "max KKT={worst_kkt:.2e}; closed-form gap={worst_cf:.2e} ({slack_cases} naturally slack); \
             most negative c=1 weight={:.2e}; simplex objective gap={worst_gap:.2e}",
            -worst_neg
        ),
    )
}

// 7 ---------------------------------------------------------------------------

fn dm_size() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let zeros = LossSeries::new("B", vec![0.0; DM_T]).unwrap();
    let mut rejections = 0usize;
    for _ in 0..DM_REPS {
        let d: Vec<f64> = (0..DM_T).map(|_| rng.sample(StandardNormal)).collect();
        let r = dm_test(&LossSeries::new("A", d).unwrap(), &zeros, None).unwrap();
        if r.p_value < 0.05 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / DM_REPS as f64;
    Outcome::new(
        rate >= DM_SIZE_BAND.0 && rate <= DM_SIZE_BAND.1,
        format!("rejection rate={rate:.4} over {DM_REPS} replications (T={DM_T})"),
    )
}

// 8 ---------------------------------------------------------------------------

fn metric_closed_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for p in [1usize, 2, 5, 20, 50] {
        let eye = DMatrix::<f64>::identity(p, p);
        let q = qlike_day(&eye, &eye).unwrap().unwrap();
        worst = worst.max((q - p as f64).abs());

        let a = gaussian(&mut rng, p, p);
        let pred = &a + a.transpose();
        let e = norm_errors(&pred, &eye).unwrap();
        let want = (&pred - &eye).norm() / (p as f64).sqrt();
        worst = worst.max((e.relative_frobenius.unwrap() - want).abs());

        let truth = random_pd(&mut rng, p);
        let z = norm_errors(&truth, &truth).unwrap();
        worst = worst
            .max(z.frobenius)
            .max(z.max)
            .max(z.spectral)
            .max(z.relative_frobenius.unwrap());
    }
    Outcome::new(worst <= METRIC_TOL, format!("max deviation={worst:.2e}"))
}

// 9 ---------------------------------------------------------------------------

fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> Tensor3<f64> {
    Tensor3::from_fn(dims[0], dims[1], dims[2], |_, _, _| rng.sample(StandardNormal))
}

fn tensor_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let modes = [Mode::One, Mode::Two, Mode::Three];
    let mut counts = [0usize; 4];
    for _ in 0..TENSOR_CASES {
        let dims = [rng.random_range(1..7), rng.random_range(1..7), rng.random_range(1..7)];
        let t = random_tensor(&mut rng, dims);

        let round_trip = modes
            .iter()
            .all(|&m| Tensor3::fold(&t.matricize(m), m, dims).unwrap() == t);
        counts[0] += round_trip as usize;

        let mut comp_ok = true;
        for (k, &m) in modes.iter().enumerate() {
            let (ra, rb) = (rng.random_range(1..6), rng.random_range(1..6));
            let a = gaussian(&mut rng, ra, dims[k]);
            let b = gaussian(&mut rng, rb, ra);
            let ta = t.mode_product(&a, m).unwrap();
            comp_ok &= rel(&ta.matricize(m), &(&a * t.matricize(m))) < TENSOR_TOL;
            let tab = ta.mode_product(&b, m).unwrap();
            let direct = t.mode_product(&(&b * &a), m).unwrap();
            comp_ok &= rel(&tab.matricize(m), &direct.matricize(m)) < TENSOR_TOL;
            let other = modes[(k + 1) % 3];
            let c = gaussian(&mut rng, 3, dims[(k + 1) % 3]);
            let ac = ta.mode_product(&c, other).unwrap();
            let ca = t.mode_product(&c, other).unwrap().mode_product(&a, m).unwrap();
            comp_ok &= rel(&ac.matricize(Mode::One), &ca.matricize(Mode::One)) < TENSOR_TOL;
        }
        counts[1] += comp_ok as usize;

        let mut iso = t.clone();
        for (k, &m) in modes.iter().enumerate() {
            iso = iso.mode_product(&orthonormal(&mut rng, dims[k], dims[k]), m).unwrap();
        }
        counts[2] += ((iso.frobenius_norm() - t.frobenius_norm()).abs() <= TENSOR_TOL * t.frobenius_norm()) as usize;

        let big = [rng.random_range(4..12), rng.random_range(4..12), rng.random_range(4..12)];
        let ranks = [rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..4)];
        let mut low = random_tensor(&mut rng, ranks);
        for (k, &m) in modes.iter().enumerate() {
            low = low.mode_product(&gaussian(&mut rng, big[k], ranks[k]), m).unwrap();
        }
        let us: Vec<DMatrix<f64>> = modes
            .iter()
            .enumerate()
            .map(|(k, &m)| leading_left_singular_vectors(&low.matricize(m), ranks[k].min(big[k])).unwrap().vectors)
            .collect();
        let mut core = low.clone();
        for (k, &m) in modes.iter().enumerate() {
            core = core.mode_product(&us[k].transpose(), m).unwrap();
        }
        let mut back = core;
        for (k, &m) in modes.iter().enumerate() {
            back = back.mode_product(&us[k], m).unwrap();
        }
        counts[3] += (rel(&back.matricize(Mode::One), &low.matricize(Mode::One)) <= TUCKER_TOL) as usize;
    }
    let names = ["round-trip", "mode-product algebra", "Frobenius isometry", "Tucker exactness"];
    let detail = names
        .iter()
        .zip(counts)
        .map(|(n, c)| format!("{n} {c}/{TENSOR_CASES}"))
        .collect::<Vec<_>>()
        .join(", ");
    Outcome::new(counts.iter().all(|&c| c == TENSOR_CASES), detail)
}

// 10 --------------------------------------------------------------------------

fn read_tree(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn determinism() -> Outcome {
    let cfg = PipelineConfig::default();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let run = run_pipeline(&cfg).unwrap();
        assert!(run.failure.is_none(), "pipeline failed: {:?}", run.failure);
        run.report.write(dir.path()).unwrap();
    }
    let (a, b) = (read_tree(dirs[0].path()), read_tree(dirs[1].path()));
    let same = a == b && !a.is_empty();
    let bytes: usize = a.iter().map(|(_, v)| v.len()).sum();
    Outcome::new(same, format!("{} report files, {bytes} bytes compared", a.len()))
}

// ---------------------------------------------------------------------------

fn check(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f))
        .unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
    println!(
        "criterion {id:>2} {name}: {} [{:.1?}] {}",
        if outcome.pass { "PASS" } else { "FAIL" },
        start.elapsed(),
        outcome.detail
    );
    outcome.pass
}

fn main() {
    // `cargo test -- --list` and filters from other targets must not start the suite.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    if let Some(filter) = args.iter().find(|a| !a.starts_with('-')) {
        if !"acceptance".contains(filter.as_str()) {
            return;
        }
    }

    let mut results = Vec::new();
    results.push(check(1, "exact-model recovery", exact_recovery));
    let study = catch_unwind(study);
    match &study {
        Ok((report, elapsed)) => {
            results.push(check(2, "simulated study ordering", || study_ordering(report, *elapsed)));
            results.push(check(3, "convergence trends", || study_trends(report)));
        }
        Err(_) => {
            results.push(check(2, "simulated study ordering", || Outcome::new(false, "study run failed")));
            results.push(check(3, "convergence trends", || Outcome::new(false, "study run failed")));
        }
    }
    results.push(check(4, "rank recovery", rank_recovery));
    results.push(check(5, "PRVM correctness", prvm_correctness));
    results.push(check(6, "portfolio solver", portfolio_solver));
    results.push(check(7, "DM test size", dm_size));
    results.push(check(8, "metric closed forms", metric_closed_forms));
    results.push(check(9, "tensor algebra suite", tensor_suite));
    results.push(check(10, "pipeline determinism", determinism));

    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
