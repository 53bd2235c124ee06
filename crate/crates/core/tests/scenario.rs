mod common;

use proptest::prelude::*;
use resdist_core::instance::validate_instance;
use resdist_core::scenario::{
    build_ambiguity_bounds, empirical_moments, moments_from_quantiles, sample_normal_scenarios,
    sample_uniform_scenarios, MomentEstimate, ScenarioError, ScenarioSet,
};

use common::{random_instance, random_scenarios};

fn moments(mean: Vec<Vec<f64>>, sd: Vec<Vec<f64>>) -> MomentEstimate {
    MomentEstimate::from_mean_std(mean, sd).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampling_is_reproducible(seed in any::<u64>(), mu in 1.0f64..1e6, f in 0.0f64..=1.0, n in 1usize..40) {
        let m = moments(vec![vec![mu, 2.0 * mu]], vec![vec![0.1 * mu, 0.2 * mu]]);
        prop_assert_eq!(sample_uniform_scenarios(&m, f, n, seed).unwrap(), sample_uniform_scenarios(&m, f, n, seed).unwrap());
        prop_assert_eq!(sample_normal_scenarios(&m, n, seed).unwrap(), sample_normal_scenarios(&m, n, seed).unwrap());
    }

    #[test]
    fn uniform_draws_stay_in_range(seed in any::<u64>(), mu in 0.0f64..1e5, f in 0.0f64..=1.0) {
        let m = moments(vec![vec![mu; 3]; 2], vec![vec![0.0; 3]; 2]);
        let sc = sample_uniform_scenarios(&m, f, 50, seed).unwrap();
        for d in sc.demands().iter().flatten().flatten() {
            prop_assert!(*d >= (1.0 - f) * mu - 1e-9 && *d <= (1.0 + f) * mu + 1e-9);
        }
    }

    /// Zero mean slack and unit second-moment factors pin the empirical
    /// distribution, which always lies on its own support.
    #[test]
    fn tightest_ambiguity_set_is_feasible(seed in 0u64..10_000, k in 1usize..12, nj in 1usize..4, nt in 1usize..4) {
        let sc = random_scenarios(seed, k, nj, nt);
        prop_assert!(build_ambiguity_bounds(&empirical_moments(&sc), 0.0, 1.0, 1.0, &sc).is_ok());
    }

    #[test]
    fn quantile_moments_are_monotone(a in 0.0f64..1e6, b in 0.0f64..1e6, c in 0.0f64..1e6, shift in 0.0f64..1e5) {
        let mut q = [a, b, c];
        q.sort_by(f64::total_cmp);
        let (mu, sd) = moments_from_quantiles(q[0], q[1], q[2]).unwrap();
        prop_assert!(q[0] <= mu + 1e-9 && mu <= q[2] + 1e-9 && sd >= 0.0);
        let (mu2, _) = moments_from_quantiles(q[0], q[1] + shift.min(q[2] - q[1]), q[2]).unwrap();
        prop_assert!(mu2 >= mu - 1e-9);
        let (_, sd2) = moments_from_quantiles(q[0], q[1], q[2] + shift).unwrap();
        prop_assert!(sd2 >= sd);
    }

    #[test]
    fn validation_is_idempotent(seed in 0u64..10_000, broken in any::<bool>()) {
        let mut inst = random_instance(seed, 3, 2, 2);
        if broken {
            inst.operating_cost[1] = -1.0;
            inst.temporal_budget.pop();
        }
        let first = validate_instance(&inst);
        prop_assert_eq!(first.is_valid(), !broken);
        prop_assert_eq!(first, validate_instance(&inst.clone()));
    }

    #[test]
    fn empirical_second_moment_dominates_squared_mean(seed in 0u64..10_000, k in 1usize..20) {
        let m = empirical_moments(&random_scenarios(seed, k, 2, 3));
        for (mu, s) in m.mean.iter().flatten().zip(m.second_moment.iter().flatten()) {
            prop_assert!(*s >= mu * mu * (1.0 - 1e-12));
        }
    }
}

#[test]
fn sample_moments_converge() {
    let m = moments(vec![vec![100.0, 5000.0]], vec![vec![10.0, 800.0]]);
    let u = empirical_moments(&sample_uniform_scenarios(&m, 0.5, 10_000, 3).unwrap());
    // uniform on [0.5 mu, 1.5 mu] has sd mu / sqrt(12)
    for (t, mu) in [100.0, 5000.0].into_iter().enumerate() {
        assert!((u.mean[0][t] - mu).abs() < 0.01 * mu, "uniform mean {}", u.mean[0][t]);
        let sd = mu / 12f64.sqrt();
        assert!((u.std_dev[0][t] - sd).abs() < 0.03 * sd, "uniform sd {}", u.std_dev[0][t]);
    }
    let n = empirical_moments(&sample_normal_scenarios(&m, 10_000, 3).unwrap());
    for (t, (mu, sd)) in [(100.0, 10.0), (5000.0, 800.0)].into_iter().enumerate() {
        assert!((n.mean[0][t] - mu).abs() < 4.0 * sd / 100.0, "normal mean {}", n.mean[0][t]);
        assert!((n.std_dev[0][t] - sd).abs() < 0.03 * sd, "normal sd {}", n.std_dev[0][t]);
    }
}

#[test]
fn wan_estimate_for_a_symmetric_range() {
    let (mu, sd) = moments_from_quantiles(80.0, 100.0, 120.0).unwrap();
    assert_eq!(mu, 100.0);
    assert!((sd - 40.0 / 3.92).abs() < 1e-12);
    assert!(matches!(moments_from_quantiles(3.0, 2.0, 4.0), Err(ScenarioError::QuantileOrder(..))));
}

#[test]
fn probabilities_are_checked() {
    let d = vec![vec![vec![1.0]], vec![vec![2.0]]];
    assert!(matches!(ScenarioSet::new(d.clone(), vec![0.5]), Err(ScenarioError::ProbabilityCount(1, 2))));
    assert!(matches!(ScenarioSet::new(d.clone(), vec![0.5, 0.6]), Err(ScenarioError::ProbabilitySum(_))));
    assert!(matches!(ScenarioSet::new(d.clone(), vec![-0.5, 1.5]), Err(ScenarioError::BadProbability(0))));
    assert!(matches!(ScenarioSet::equiprobable(vec![]), Err(ScenarioError::NoScenarios)));
    assert!(matches!(
        ScenarioSet::equiprobable(vec![vec![vec![-1.0]]]),
        Err(ScenarioError::BadDemand { scenario: 0, site: 0, period: 0 })
    ));
    assert_eq!(ScenarioSet::new(d, vec![0.25, 0.75]).unwrap().expected_total_demand(), 1.75);
}

#[test]
fn mean_outside_support_hull_is_infeasible() {
    let support = ScenarioSet::equiprobable(vec![vec![vec![1.0]], vec![vec![2.0]]]).unwrap();
    let far = MomentEstimate::point(vec![vec![10.0]]);
    assert!(build_ambiguity_bounds(&far, 0.1, 0.5, 2.0, &support).is_err());
}
