use nalgebra::DMatrix;
use proptest::prelude::*;

use voltensor::linalg::{is_positive_definite, max_abs, sym_eigen_desc};
use voltensor::market_sim::{generate_sparse_idio, sim_rng, simulate_har_loadings, simulate_paths, HarParams, SimConfig};
use voltensor::realized_vol::realized_covariance;
use voltensor::tensor::tucker_reconstruct;

fn small(seed: u64) -> SimConfig {
    SimConfig {
        p: 8,
        days: 10,
        m: 200,
        seed,
        ..SimConfig::default()
    }
}

#[test]
fn same_seed_gives_identical_paths() {
    let (a, b) = (simulate_paths(&small(3)).unwrap(), simulate_paths(&small(3)).unwrap());
    assert_eq!(a.all_panels(), b.all_panels());
    assert_eq!(a.next_day_truth, b.next_day_truth);
    let c = simulate_paths(&small(4)).unwrap();
    assert_ne!(a.noisy_prices, c.noisy_prices);
}

#[test]
fn truth_is_factor_plus_idiosyncratic() {
    let paths = simulate_paths(&small(5)).unwrap();
    for l in 0..10 {
        let sum = paths.true_factor_tensor.slice(l) + paths.true_idio.slice(l);
        assert_eq!(paths.true_tensor.slice(l), sum);
        assert_eq!(paths.true_idio.slice(l), paths.idio);
        assert!(is_positive_definite(&paths.true_tensor.slice(l)));
    }
}

#[test]
fn rank_one_design_has_proportional_factor_slices() {
    let cfg = SimConfig {
        r1: 1,
        r2: 1,
        noise_scale: 0.0,
        ..small(6)
    };
    let paths = simulate_paths(&cfg).unwrap();
    let q = paths.loading_q.column(0);
    let base = q * q.transpose();
    for l in 0..cfg.days {
        let s = paths.true_factor_tensor.slice(l);
        let c = s.dot(&base) / base.dot(&base);
        assert!(max_abs(&(&s - &base * c)) < 1e-10 * max_abs(&s));
    }
}

#[test]
fn next_day_truth_is_the_realized_slice_without_shocks() {
    let cfg = SimConfig {
        har: HarParams {
            shock_sd: 0.0,
            ..HarParams::default()
        },
        ..small(7)
    };
    let paths = simulate_paths(&cfg).unwrap();
    let total = paths.history_days() + cfg.days;
    let v = paths.loadings.rows(total, 1).into_owned();
    let want = tucker_reconstruct(&paths.core, &paths.loading_q, &v).unwrap().slice(0) + &paths.idio;
    assert!(max_abs(&(&paths.next_day_truth - &want)) < 1e-10 * max_abs(&want));
}

#[test]
fn noise_free_realized_covariance_tracks_the_truth() {
    let cfg = SimConfig {
        p: 5,
        days: 100,
        m: 10_000,
        jump_intensity: 0.0,
        noise_scale: 0.0,
        seed: 8,
        ..SimConfig::default()
    };
    let paths = simulate_paths(&cfg).unwrap();
    let mut rv = DMatrix::zeros(5, 5);
    let mut truth = DMatrix::zeros(5, 5);
    for (l, panel) in paths.noisy_prices.iter().enumerate() {
        rv += realized_covariance(panel);
        truth += paths.true_tensor.slice(l);
    }
    let rel = (&rv - &truth).norm() / truth.norm();
    assert!(rel < 0.05, "{rel}");
}

#[test]
fn factor_eigengap_grows_with_dimension() {
    let gap = |p: usize| {
        let paths = simulate_paths(&SimConfig {
            p,
            days: 2,
            m: 20,
            seed: 9,
            ..SimConfig::default()
        })
        .unwrap();
        let (values, _) = sym_eigen_desc(&paths.true_tensor.slice(0));
        values[2] / values[3]
    };
    let (a, b, c) = (gap(20), gap(80), gap(200));
    assert!(a < b && b < c, "{a} {b} {c}");
}

#[test]
fn har_loadings_average_to_the_stationary_mean() {
    let har = HarParams::default();
    let path = simulate_har_loadings(20_000, &har, 105, &mut sim_rng(10, 0)).unwrap();
    let mean = path.iter().sum::<f64>() / path.len() as f64;
    assert!((mean / har.stationary_mean() - 1.0).abs() < 0.05, "{mean}");
}

#[test]
fn explosive_har_is_rejected() {
    let har = HarParams {
        b1: 0.5,
        b2: 0.3,
        b3: 0.2,
        ..HarParams::default()
    };
    assert!(simulate_har_loadings(10, &har, 30, &mut sim_rng(0, 0)).is_err());
    assert!(simulate_paths(&SimConfig { har, ..small(0) }).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn sparse_idio_is_positive_definite_with_rank_one_off_diagonal(seed in any::<u64>(), p in 3usize..16) {
        let sigma = generate_sparse_idio(p, 100.0, 100.0, 0.3, 1000, &mut sim_rng(seed, 0)).unwrap();
        prop_assert!(is_positive_definite(&sigma));
        prop_assert_eq!(&sigma, &sigma.transpose());
        // Off-diagonal entries are s_i s_j, so σ_ij σ_kl = σ_il σ_kj.
        let off = |a: usize, b: usize| a != b;
        for i in 0..p {
            for j in 0..p {
                for k in 0..p {
                    for l in 0..p {
                        if off(i, j) && off(k, l) && off(i, l) && off(k, j) {
                            let (lhs, rhs) = (sigma[(i, j)] * sigma[(k, l)], sigma[(i, l)] * sigma[(k, j)]);
                            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
                        }
                    }
                }
            }
        }
    }
}
