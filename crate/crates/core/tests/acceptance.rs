//! Acceptance suite. Each test prints one `PASS`/`FAIL` line for its
//! criterion before asserting, so `cargo test --test acceptance -- --nocapture`
//! gives a readable summary.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use riskpool::audit::{audit, risk_slope};
use riskpool::exact::exact_insolvency_quantile;
use riskpool::model::{cost, variance_factor};
use riskpool::pricing::{shapley_exact, Proportional, Shapley};
use riskpool::quantile::{bp_from_p, p_from_bp};
use riskpool::scenario::Scenario;
use riskpool::stability::{
    cascade, evensplit_condition, is_core_stable, max_subsidy_tightness, CascadePolicy, STRICT_SLACK,
};
use riskpool::submodular::{check_submodularity, check_submodularity_exhaustive};
use riskpool::tables::worked_tables;
use riskpool::{CostParams, PoolComposition, Population, RiskClass, RiskProfile, SchemeId};

fn verdict(n: u8, name: &str, pass: bool, detail: impl AsRef<str>) {
    println!(
        "[{}] criterion {n}: {name} ({})",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
}

fn bundled(name: &str) -> (Population, CostParams) {
    let s = Scenario::bundled(name).unwrap();
    (s.population, s.params)
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

/// Random strict two-type scenarios with both counts in `1..=60`.
fn random_scenarios(count: usize, seed: u64) -> Vec<(Population, CostParams)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let r_low = rng.gen_range(0.001..0.2);
            // Half the draws keep r_H close to r_L so both verdicts occur.
            let r_high = if rng.gen_bool(0.5) {
                r_low + rng.gen_range(0.0005..0.02)
            } else {
                rng.gen_range(r_low + 0.001..0.45)
            };
            let pop = Population::new(
                RiskProfile::new(r_low, rng.gen_range(1..=60)),
                RiskProfile::new(r_high, rng.gen_range(1..=60)),
            )
            .unwrap();
            let params = CostParams::insolvency(1000.0, rng.gen_range(0.5..=3.0)).unwrap();
            (pop, params)
        })
        .collect()
}

#[test]
fn criterion_1_tables() {
    let start = Instant::now();
    let tables = worked_tables().unwrap();
    let elapsed = start.elapsed();
    let mut failures = Vec::new();
    let mut check = |what: &str, ok: bool| {
        if !ok {
            failures.push(what.to_string());
        }
    };

    let t1 = &tables[0];
    for row in &t1.rows {
        check("table 1 total", row.rounded_total() == 22_500.0);
    }
    check("table 1 separate", t1.rows[0].rounded_low() == 20.0 && t1.rows[0].rounded_high() == 25.0);
    check("table 1 even", t1.rows[1].rounded_low() == 22.5 && t1.rows[1].rounded_high() == 22.5);
    check("table 1 fair", t1.rows[2].rounded_low() == 20.0 && t1.rows[2].rounded_high() == 25.0);

    let t2 = &tables[1];
    for (row, (low, high)) in t2.rows.iter().zip([(32.52, 38.96), (31.88, 31.88), (28.36, 35.40)]) {
        check(&format!("table 2 {}", row.label), within(row.low, low, 0.005) && within(row.high, high, 0.005));
    }
    check("table 2 pooled total", within(t2.rows[1].total, 31_878.0, 1.0));

    let t3 = &tables[2];
    check("table 3 separate high", within(t3.rows[0].high, 57.53, 0.005));
    check("table 3 even", within(t3.rows[1].low, 40.77, 0.005));
    check(
        "table 3 proportional",
        within(t3.rows[2].low, 27.28, 0.005) && within(t3.rows[2].high, 54.26, 0.005),
    );
    check("table 3 separate total", within(t3.rows[0].total, 45_024.0, 2.0));
    check("table 3 pooled total", within(t3.rows[1].total, 40_770.0, 1.0));
    check("runtime", elapsed < Duration::from_secs(1));

    let pass = failures.is_empty();
    verdict(1, "table reproduction", pass, format!("{elapsed:?}; failures: {failures:?}"));
    assert!(pass);
}

#[test]
fn criterion_2_submodularity() {
    let start = Instant::now();
    let (pop, params) = bundled("table3");
    let sampled = check_submodularity(&pop, &params, 10_000, 2024).unwrap();
    let small = Population::new(RiskProfile::new(0.02, 6), RiskProfile::new(0.04, 6)).unwrap();
    let exhaustive = check_submodularity_exhaustive(&small, &params).unwrap();
    let elapsed = start.elapsed();
    let pass = sampled.passed()
        && exhaustive.passed()
        && sampled.pairs_checked == 10_000
        && exhaustive.strict_pairs > 0
        && elapsed < Duration::from_secs(5);
    verdict(
        2,
        "submodularity",
        pass,
        format!(
            "{} random pairs ({} strict), {} exhaustive pairs ({} strict), violations {}+{}, {elapsed:?}",
            sampled.pairs_checked,
            sampled.strict_pairs,
            exhaustive.pairs_checked,
            exhaustive.strict_pairs,
            sampled.violations,
            exhaustive.violations
        ),
    );
    assert!(pass, "{sampled:?} {exhaustive:?}");
}

#[test]
fn criterion_3_even_split_equivalence() {
    let start = Instant::now();
    let scenarios = random_scenarios(600, 3);
    let mut mismatches = Vec::new();
    let mut stable = 0;
    for (pop, params) in &scenarios {
        let closed = evensplit_condition(pop, params).unwrap();
        let full = is_core_stable(SchemeId::EvenSplit.scheme(), pop, params, STRICT_SLACK)
            .unwrap()
            .stable;
        stable += full as usize;
        if closed != full {
            mismatches.push((pop.low, pop.high, params.bp));
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatches.is_empty() && elapsed < Duration::from_secs(30);
    verdict(
        3,
        "even-split closed form equals enumeration",
        pass,
        format!(
            "{} scenarios, {stable} stable, {} mismatches, {elapsed:?}",
            scenarios.len(),
            mismatches.len()
        ),
    );
    assert!(pass, "{:?}", mismatches.first());
}

#[test]
fn criterion_4_max_subsidy() {
    let scenarios = random_scenarios(600, 3);
    let mut unstable_plain = 0;
    let mut wrong_witness = 0;
    for (pop, params) in &scenarios {
        if !is_core_stable(SchemeId::MaxSubsidy.scheme(), pop, params, STRICT_SLACK).unwrap().stable {
            unstable_plain += 1;
        }
        for eps in [1e-4, 1e-2, 1.0] {
            let r = max_subsidy_tightness(pop, params, eps).unwrap();
            if r.stable || r.blocking_witness != Some(PoolComposition::new(pop.low.count, 0)) {
                wrong_witness += 1;
            }
        }
    }
    let pass = unstable_plain == 0 && wrong_witness == 0;
    verdict(
        4,
        "max-subsidy stable and tight",
        pass,
        format!(
            "{} scenarios, {unstable_plain} unstable, {wrong_witness} perturbed runs without witness (N_L, 0)",
            scenarios.len()
        ),
    );
    assert!(pass);
}

/// Average marginal cost of each type over every ordering of labelled
/// members, using the cost formula written out directly. Orders are
/// enumerated exhaustively; the arrival states `(a, b, type)` they pass
/// through are tallied as exact integers and weighted once at the end.
fn permutation_shapley(n_low: usize, n_high: usize, pop: &Population, params: &CostParams) -> (f64, f64) {
    let c = |a: usize, b: usize| {
        let (rl, rh) = (pop.low.r, pop.high.r);
        let s = a as f64 * rl * (1.0 - rl) + b as f64 * rh * (1.0 - rh);
        params.insured_value * (rl * a as f64 + rh * b as f64 + params.bp * s.sqrt())
    };
    let n = n_low + n_high;
    let width = n_high + 1;
    let mut tally_low = vec![0u64; (n_low + 1) * width];
    let mut tally_high = vec![0u64; (n_low + 1) * width];
    let mut orders = 0u64;
    let mut order: Vec<usize> = (0..n).collect();
    let mut visit = |order: &[usize]| {
        let (mut a, mut b) = (0, 0);
        for &m in order {
            if m < n_low {
                tally_low[a * width + b] += 1;
                a += 1;
            } else {
                tally_high[a * width + b] += 1;
                b += 1;
            }
        }
        orders += 1;
    };
    // Heap's algorithm.
    let mut stack = vec![0; n];
    visit(&order);
    let mut i = 0;
    while i < n {
        if stack[i] < i {
            if i % 2 == 0 {
                order.swap(0, i);
            } else {
                order.swap(stack[i], i);
            }
            visit(&order);
            stack[i] += 1;
            i = 0;
        } else {
            stack[i] = 0;
            i += 1;
        }
    }
    let (mut sum_low, mut sum_high) = (0.0, 0.0);
    for a in 0..=n_low {
        for b in 0..=n_high {
            let k = a * width + b;
            if tally_low[k] > 0 {
                sum_low += tally_low[k] as f64 / orders as f64 * (c(a + 1, b) - c(a, b));
            }
            if tally_high[k] > 0 {
                sum_high += tally_high[k] as f64 / orders as f64 * (c(a, b + 1) - c(a, b));
            }
        }
    }
    let per = |sum: f64, k: usize| if k == 0 { f64::NAN } else { sum / k as f64 };
    (per(sum_low, n_low), per(sum_high, n_high))
}

#[test]
fn criterion_5_shapley() {
    let settings = [(0.02, 0.04, 2.0), (0.1, 0.3, 1.0), (0.001, 0.45, 3.0)];
    let mut worst: f64 = 0.0;
    let mut blocked = 0;
    let mut populations = 0;
    for &(rl, rh, bp) in &settings {
        let params = CostParams::insolvency(1000.0, bp).unwrap();
        for n in 1..=8usize {
            for a in 0..=n {
                let pop = Population::new(RiskProfile::new(rl, a as u64), RiskProfile::new(rh, (n - a) as u64)).unwrap();
                let exact = shapley_exact(pop.grand(), &pop, &params).unwrap();
                let (low, high) = permutation_shapley(a, n - a, &pop, &params);
                if let Some(p) = exact.low {
                    worst = worst.max((p - low).abs());
                }
                if let Some(p) = exact.high {
                    worst = worst.max((p - high).abs());
                }
            }
        }
        for n in 1..=12u64 {
            for a in 0..=n {
                let pop = Population::new(RiskProfile::new(rl, a), RiskProfile::new(rh, n - a)).unwrap();
                populations += 1;
                if !is_core_stable(&Shapley, &pop, &params, STRICT_SLACK).unwrap().stable {
                    blocked += 1;
                }
            }
        }
    }
    let (pop, params) = bundled("table2");
    let grand = pop.grand();
    let prices = shapley_exact(grand, &pop, &params).unwrap();
    let total = cost(grand, &pop, &params).unwrap();
    let residual = prices.efficiency_residual(grand, &pop, &params).unwrap() / total;

    let pass = worst <= 1e-10 && blocked == 0 && residual <= 1e-9;
    verdict(
        5,
        "Shapley",
        pass,
        format!(
            "max |exact - permutations| {worst:.2e}, {blocked}/{populations} populations blocked, relative residual at (500,500) {residual:.2e}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_audit_patterns() {
    let mut forbidden = Vec::new();
    let mut slope_errors = Vec::new();
    for name in ["table2", "table3"] {
        let (pop, params) = bundled(name);
        for id in SchemeId::ALL {
            let report = audit(id.scheme(), &pop, &params).unwrap();
            let v = report.verdicts;
            if v.efficient && v.independent_low && v.independent_high {
                forbidden.push(format!("{name}/{id}: efficient and independent"));
            }
            if v.efficient && v.aligned && v.stable_for_all_probed_r {
                forbidden.push(format!("{name}/{id}: efficient, aligned and stable"));
            }
        }

        let grand = pop.grand();
        let fd = risk_slope(&Proportional, grand, &pop, &params, RiskClass::Low, RiskClass::High).unwrap();
        let (rl, rh) = (variance_factor(pop.low.r), variance_factor(pop.high.r));
        let s = pop.low.count as f64 * rl + pop.high.count as f64 * rh;
        let analytic = -params.insured_value * params.bp * rl * pop.high.count as f64 * (1.0 - 2.0 * pop.high.r)
            / (2.0 * s.powf(1.5));
        let rel = ((fd - analytic) / analytic).abs();
        if !(fd < 0.0 && rel <= 1e-4) {
            slope_errors.push(format!("{name}: fd {fd} analytic {analytic}"));
        }
        println!("  {name}: proportional dp_L/dr_H fd {fd:.6} analytic {analytic:.6} rel {rel:.2e}");
    }
    let pass = forbidden.is_empty() && slope_errors.is_empty();
    verdict(
        6,
        "audit impossibility patterns",
        pass,
        format!("forbidden: {forbidden:?}; slope: {slope_errors:?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_7_normal_approximation() {
    let (pop, params) = bundled("table2");
    let p = 0.02275;
    let closed_params = params.with_bp(bp_from_p(p).unwrap()).unwrap();
    let mut gaps = Vec::new();
    for comp in [
        PoolComposition::new(500, 0),
        PoolComposition::new(0, 500),
        PoolComposition::new(500, 500),
    ] {
        let exact = exact_insolvency_quantile(comp, &pop, &params, p).unwrap();
        let closed = cost(comp, &pop, &closed_params).unwrap();
        gaps.push((comp, exact - closed));
    }
    let mut grid: Vec<f64> = Vec::new();
    for e in [1e-4, 1e-3, 1e-2] {
        grid.extend([1.0, 2.0, 5.0].iter().map(|m| m * e));
    }
    grid.extend((1..=49).map(|i| i as f64 / 100.0));
    let worst_trip = grid
        .iter()
        .map(|&p| (p_from_bp(bp_from_p(p).unwrap()).unwrap() - p).abs())
        .fold(0.0, f64::max);

    let pass = gaps.iter().all(|(_, g)| g.abs() <= params.insured_value) && worst_trip <= 1e-9;
    let shown: Vec<String> = gaps.iter().map(|(c, g)| format!("{c}: {g:+.2}")).collect();
    verdict(
        7,
        "normal approximation fidelity",
        pass,
        format!("exact minus closed form {}; worst round trip {worst_trip:.2e}", shown.join(", ")),
    );
    assert!(pass);
}

#[test]
fn criterion_8_cascade() {
    let (pop3, params3) = bundled("table3");
    let trace3 = cascade(SchemeId::EvenSplit.scheme(), &pop3, &params3, CascadePolicy::LowRiskExodus).unwrap();
    let remainder = trace3
        .steps
        .first()
        .and_then(|s| s.prices_after)
        .and_then(|p| p.high);
    let (pop2, params2) = bundled("table2");
    let trace2 = cascade(SchemeId::EvenSplit.scheme(), &pop2, &params2, CascadePolicy::LowRiskExodus).unwrap();
    let pass = trace3.steps.len() == 1
        && remainder.is_some_and(|p| within(p, 57.53, 0.005))
        && trace2.steps.is_empty();
    verdict(
        8,
        "defection cascade",
        pass,
        format!(
            "table 3: {} step(s), remainder price {remainder:?}; table 2: {} step(s)",
            trace3.steps.len(),
            trace2.steps.len()
        ),
    );
    assert!(pass);
}
