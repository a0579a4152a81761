//! Checks against slow, independent reference computations.

use approx::assert_abs_diff_eq;

use riskpool::exact::exact_insolvency_quantile;
use riskpool::pricing::{shapley_exact, shapley_sampled};
use riskpool::quantile::{bp_from_p, p_from_bp};
use riskpool::{CostParams, PoolComposition, Population, RiskProfile};

/// Upper tail of the standard normal by composite Simpson on `[0, x]`.
fn simpson_tail(x: f64) -> f64 {
    let n = 20_000;
    let h = x / n as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(0.0) + pdf(x);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * pdf(i as f64 * h);
    }
    0.5 - s * h / 3.0
}

fn simpson_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if simpson_tail(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn quantile_matches_numerical_integration() {
    for p in [0.00135, 0.01, 0.02275, 0.1, 0.3, 0.45] {
        assert_abs_diff_eq!(bp_from_p(p).unwrap(), simpson_quantile(p), epsilon = 1e-9);
        let bp = simpson_quantile(p);
        assert_abs_diff_eq!(p_from_bp(bp).unwrap(), p, epsilon = 1e-10);
    }
    assert_abs_diff_eq!(bp_from_p(0.00135).unwrap(), 3.0, epsilon = 1e-3);
}

/// Tail probabilities from all `2^n` claim outcomes.
fn brute_force_quantile(n_low: usize, n_high: usize, r_low: f64, r_high: f64, value: f64, p: f64) -> f64 {
    let n = n_low + n_high;
    let mut by_count = vec![0.0; n + 1];
    for mask in 0u32..(1 << n) {
        let mut prob = 1.0;
        for m in 0..n {
            let r = if m < n_low { r_low } else { r_high };
            prob *= if mask >> m & 1 == 1 { r } else { 1.0 - r };
        }
        by_count[mask.count_ones() as usize] += prob;
    }
    let mut tail: f64 = by_count.iter().sum();
    for (k, pk) in by_count.iter().enumerate() {
        tail -= pk;
        if tail <= p {
            return value * k as f64;
        }
    }
    value * n as f64
}

#[test]
fn exact_quantile_matches_enumeration() {
    let params = CostParams::insolvency(1000.0, 2.0).unwrap();
    for (nl, nh, rl, rh, p) in [
        (4, 4, 0.1, 0.3, 0.05),
        (6, 3, 0.2, 0.4, 0.2),
        (10, 0, 0.05, 0.1, 0.01),
        (0, 8, 0.05, 0.25, 0.3),
        (5, 7, 0.02, 0.04, 0.02275),
    ] {
        let pop = Population::new(RiskProfile::new(rl, nl as u64), RiskProfile::new(rh, nh as u64)).unwrap();
        let comp = PoolComposition::new(nl as u64, nh as u64);
        let got = exact_insolvency_quantile(comp, &pop, &params, p).unwrap();
        assert_eq!(got, brute_force_quantile(nl, nh, rl, rh, 1000.0, p), "({nl}, {nh}) p = {p}");
    }
}

#[test]
fn sampled_shapley_small_pool() {
    let pop = Population::new(RiskProfile::new(0.1, 2), RiskProfile::new(0.3, 2)).unwrap();
    let params = CostParams::insolvency(1000.0, 2.0).unwrap();
    let comp = pop.grand();
    let exact = shapley_exact(comp, &pop, &params).unwrap();
    let est = shapley_sampled(comp, &pop, &params, 100_000, 11).unwrap();
    assert!((est.prices.low.unwrap() - exact.low.unwrap()).abs() <= 3.0 * est.stderr_low.unwrap());
    assert!((est.prices.high.unwrap() - exact.high.unwrap()).abs() <= 3.0 * est.stderr_high.unwrap());
}

#[test]
fn sampled_shapley_mid_pool() {
    let pop = Population::new(RiskProfile::new(0.02, 50), RiskProfile::new(0.025, 50)).unwrap();
    let params = CostParams::insolvency(1000.0, 2.0).unwrap();
    let comp = pop.grand();
    let exact = shapley_exact(comp, &pop, &params).unwrap();
    let est = shapley_sampled(comp, &pop, &params, 20_000, 5).unwrap();
    assert!((est.prices.low.unwrap() - exact.low.unwrap()).abs() <= 3.0 * est.stderr_low.unwrap());
    assert!((est.prices.high.unwrap() - exact.high.unwrap()).abs() <= 3.0 * est.stderr_high.unwrap());
}

#[test]
fn exact_oracle_refuses_huge_pools() {
    let pop = Population::new(RiskProfile::new(0.02, 4000), RiskProfile::new(0.04, 4000)).unwrap();
    let params = CostParams::insolvency(1000.0, 2.0).unwrap();
    let err = exact_insolvency_quantile(pop.grand(), &pop, &params, 0.02).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}
