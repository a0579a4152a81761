//! Exact insolvency quantile of a two-type pool.
//!
//! The number of claims is `K = Binom(n_L, r_L) + Binom(n_H, r_H)`. Its PMF is
//! obtained by convolving the two binomial PMFs, each evaluated in log space so
//! that the far tails underflow gracefully instead of producing NaNs. This is
//! a validation oracle for the closed-form normal approximation in
//! [`crate::model::cost`]; nothing else depends on it.

use crate::error::{Error, Result};
use crate::model::{CostParams, PoolComposition, Population};
use crate::numeric::{CompensatedSum, LnFactorials};

/// Largest pool the convolution will enumerate.
pub const MAX_EXACT_MEMBERS: u64 = 5_000;

/// Binomial PMF `P(X = k)` for `k = 0..=n`.
pub fn binomial_pmf(n: usize, r: f64, table: &LnFactorials) -> Vec<f64> {
    if r == 0.0 {
        let mut pmf = vec![0.0; n + 1];
        pmf[0] = 1.0;
        return pmf;
    }
    if r == 1.0 {
        let mut pmf = vec![0.0; n + 1];
        pmf[n] = 1.0;
        return pmf;
    }
    let (ln_r, ln_q) = (r.ln(), (-r).ln_1p());
    (0..=n)
        .map(|k| (table.ln_choose(n, k) + k as f64 * ln_r + (n - k) as f64 * ln_q).exp())
        .collect()
}

/// PMF of the total claim count for `comp`.
pub fn claim_count_pmf(comp: PoolComposition, pop: &Population) -> Vec<f64> {
    let (nl, nh) = (comp.n_low as usize, comp.n_high as usize);
    let table = LnFactorials::up_to(nl.max(nh));
    let low = binomial_pmf(nl, pop.low.r, &table);
    let high = binomial_pmf(nh, pop.high.r, &table);
    let mut out = vec![0.0; nl + nh + 1];
    for (i, &a) in low.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (j, &b) in high.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

/// Smallest premium `C` with `P(V * K > C) <= p`, where `K` is the exact
/// claim count. Claims come in whole multiples of `V`, so `C = V * k` for the
/// smallest `k` whose upper tail `P(K > k)` is at most `p`.
pub fn exact_insolvency_quantile(
    comp: PoolComposition,
    pop: &Population,
    params: &CostParams,
    p: f64,
) -> Result<f64> {
    pop.check(comp)?;
    if comp.size() > MAX_EXACT_MEMBERS {
        return Err(Error::capability(format!(
            "exact quantile enumerates at most {MAX_EXACT_MEMBERS} members, got {}",
            comp.size()
        )));
    }
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::domain(format!("p = {p} must lie in (0, 0.5)")));
    }
    let pmf = claim_count_pmf(comp, pop);
    // tail[k] = P(K > k), accumulated from the top.
    let mut tail = CompensatedSum::new();
    let mut threshold = pmf.len() - 1;
    for k in (0..pmf.len()).rev() {
        // At this point tail = P(K > k).
        if tail.value() > p {
            break;
        }
        threshold = k;
        tail.add(pmf[k]);
    }
    Ok(params.insured_value * threshold as f64)
}
