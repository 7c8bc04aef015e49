use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use voltensor::portfolio::{kkt_residual, solve_min_variance, PortfolioProblem};

fn covariance(p: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (
        prop::collection::vec(-1.0f64..1.0, p * p),
        prop::collection::vec(0.05f64..1.0, p),
        prop::collection::vec(0.0f64..2.0, p),
    )
        .prop_map(move |(a, d, b)| {
            let a = DMatrix::from_vec(p, p, a);
            let b = DVector::from_vec(b);
            &a * a.transpose() / p as f64 + DMatrix::from_diagonal(&DVector::from_vec(d)) + &b * b.transpose()
        })
}

fn sized_covariance() -> impl Strategy<Value = DMatrix<f64>> {
    prop_oneof![covariance(3), covariance(10), covariance(50)]
}

fn solve(sigma: &DMatrix<f64>, c: f64) -> (DVector<f64>, f64) {
    let sol = solve_min_variance(&PortfolioProblem::new(sigma.clone(), c)).unwrap();
    assert!(kkt_residual(sigma, c, &sol.weights, sol.mu, sol.lambda) < 1e-8);
    let obj = sol.weights.dot(&(sigma * &sol.weights));
    (sol.weights, obj)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn every_solve_satisfies_kkt(sigma in sized_covariance(), c in 1.0f64..4.0) {
        let sol = solve_min_variance(&PortfolioProblem::new(sigma.clone(), c)).unwrap();
        prop_assert!(sol.kkt_residual < 1e-8);
        prop_assert!(kkt_residual(&sigma, c, &sol.weights, sol.mu, sol.lambda) < 1e-8);
        prop_assert!((sol.weights.sum() - 1.0).abs() < 1e-10);
        prop_assert!(sol.weights.abs().sum() <= c + 1e-9);
    }

    #[test]
    fn objective_does_not_increase_with_exposure(sigma in sized_covariance()) {
        let objs: Vec<f64> = [1.0, 1.5, 2.0, 2.5, 3.0].iter().map(|&c| solve(&sigma, c).1).collect();
        for w in objs.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-14);
        }
    }

    #[test]
    fn scaling_the_covariance_keeps_the_weights(sigma in sized_covariance(), c in 1.0f64..3.0, k in 0.01f64..100.0) {
        let (w1, o1) = solve(&sigma, c);
        let (w2, o2) = solve(&(&sigma * k), c);
        prop_assert!((&w1 - &w2).amax() < 1e-6);
        prop_assert!((o2 - k * o1).abs() <= 1e-8 * (k * o1));
    }

    #[test]
    fn long_only_bound_gives_nonnegative_weights(sigma in sized_covariance()) {
        let sol = solve_min_variance(&PortfolioProblem::new(sigma.clone(), 1.0)).unwrap();
        let w = sol.weights.clone();
        prop_assert!(w.iter().all(|&v| v >= 0.0), "{:?} {:?}", sol.method, w.min());
    }

    #[test]
    fn slack_bound_gives_the_closed_form(sigma in sized_covariance()) {
        let ones = DVector::from_element(sigma.nrows(), 1.0);
        let x = sigma.clone().cholesky().unwrap().solve(&ones);
        let cf = &x / x.sum();
        let (w, _) = solve(&sigma, cf.abs().sum() + 0.25);
        prop_assert!((w - cf).amax() < 1e-6);
    }
}
