//! Core stability of the grand coalition.
//!
//! A composition blocks when every type present in it pays strictly less
//! there than in the pool it would leave. Because schemes are anonymous, it
//! suffices to enumerate compositions `(n_L, n_H)` instead of member subsets.
//! Schemes that price members individually would invalidate this reduction.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{cost, CostParams, PoolComposition, Population, RiskClass};
use crate::par::{self, Execution};
use crate::pricing::{max_subsidy, PriceSchedule, PricingScheme};

/// Default strictness slack in money units, absorbing float ties.
pub const STRICT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub stable: bool,
    pub blocking_witness: Option<PoolComposition>,
    pub prices_at_witness: Option<PriceSchedule>,
    /// Smallest per-person saving among the witness's types.
    pub witness_gain: Option<f64>,
    pub pool: PoolComposition,
    pub pool_prices: PriceSchedule,
    pub compositions_checked: u64,
}

/// Smallest saving over the types present in `candidate`, if every one of
/// them saves more than `epsilon`.
pub fn blocking_gain(pool: &PriceSchedule, candidate: &PriceSchedule, epsilon: f64) -> Option<f64> {
    let mut gain = f64::INFINITY;
    for class in RiskClass::ALL {
        if let Some(p) = candidate.price(class) {
            let here = pool.price(class)?;
            let saving = here - p;
            if saving.partial_cmp(&epsilon) != Some(Ordering::Greater) {
                return None;
            }
            gain = gain.min(saving);
        }
    }
    gain.is_finite().then_some(gain)
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    comp: PoolComposition,
    prices: PriceSchedule,
    gain: f64,
}

/// Larger gain wins; ties go to larger `n_L`, then larger `n_H`.
fn better(a: &Candidate, b: &Candidate) -> bool {
    match a.gain.partial_cmp(&b.gain).unwrap_or(Ordering::Equal) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => (a.comp.n_low, a.comp.n_high) > (b.comp.n_low, b.comp.n_high),
    }
}

fn pick(best: Option<Candidate>, next: Option<Candidate>) -> Option<Candidate> {
    match (best, next) {
        (Some(a), Some(b)) => Some(if better(&b, &a) { b } else { a }),
        (a, b) => a.or(b),
    }
}

/// Which sub-compositions of the pool may deviate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Deviators {
    Any,
    LowOnly,
}

struct Search {
    pool_prices: PriceSchedule,
    best: Option<Candidate>,
    checked: u64,
}

fn search_blocking(
    exec: Execution,
    scheme: &dyn PricingScheme,
    pool: PoolComposition,
    pop: &Population,
    params: &CostParams,
    epsilon: f64,
    deviators: Deviators,
) -> Result<Search> {
    if pool.is_empty() {
        return Err(Error::domain("stability of an empty pool is undefined"));
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::domain(format!("strictness slack {epsilon} must be >= 0")));
    }
    pop.check(pool)?;
    let grid = scheme.sub_pool_prices(pool, pop, params)?;
    let price_of = |comp: PoolComposition| -> Result<PriceSchedule> {
        match grid.as_ref().and_then(|g| g.get(comp)) {
            Some(p) => Ok(p),
            None => scheme.price(comp, pop, params),
        }
    };
    let pool_prices = price_of(pool)?;
    let high_max = match deviators {
        Deviators::Any => pool.n_high,
        Deviators::LowOnly => 0,
    };
    // Rows descend in n_L so the scan order matches the tie-break order.
    let rows = par::map_range(exec, pool.n_low as usize + 1, |i| -> Result<(Option<Candidate>, u64)> {
        let n_low = pool.n_low - i as u64;
        let mut best = None;
        let mut checked = 0;
        for n_high in (0..=high_max).rev() {
            let comp = PoolComposition::new(n_low, n_high);
            if comp.is_empty() {
                continue;
            }
            checked += 1;
            let prices = price_of(comp)?;
            if let Some(gain) = blocking_gain(&pool_prices, &prices, epsilon) {
                best = pick(best, Some(Candidate { comp, prices, gain }));
            }
        }
        Ok((best, checked))
    });
    let mut search = Search {
        pool_prices,
        best: None,
        checked: 0,
    };
    for row in rows {
        let (best, checked) = row?;
        search.best = pick(search.best, best);
        search.checked += checked;
    }
    Ok(search)
}

fn report(pool: PoolComposition, search: Search) -> StabilityReport {
    StabilityReport {
        stable: search.best.is_none(),
        blocking_witness: search.best.map(|c| c.comp),
        prices_at_witness: search.best.map(|c| c.prices),
        witness_gain: search.best.map(|c| c.gain),
        pool,
        pool_prices: search.pool_prices,
        compositions_checked: search.checked,
    }
}

/// Enumerates every non-empty composition of the population and reports the
/// most attractive blocking one, if any.
pub fn is_core_stable(
    scheme: &dyn PricingScheme,
    pop: &Population,
    params: &CostParams,
    epsilon: f64,
) -> Result<StabilityReport> {
    is_core_stable_with(Execution::default(), scheme, pop, params, epsilon)
}

pub fn is_core_stable_with(
    exec: Execution,
    scheme: &dyn PricingScheme,
    pop: &Population,
    params: &CostParams,
    epsilon: f64,
) -> Result<StabilityReport> {
    let grand = pop.grand();
    let search = search_blocking(exec, scheme, grand, pop, params, epsilon, Deviators::Any)?;
    Ok(report(grand, search))
}

/// Closed-form sufficient condition for even-split stability: the grand
/// coalition's average cost is below the all-low pool's average.
pub fn evensplit_condition(pop: &Population, params: &CostParams) -> Result<bool> {
    if pop.low.count == 0 {
        return Err(Error::domain("even-split condition needs N_L > 0"));
    }
    let grand = pop.grand();
    let pooled = cost(grand, pop, params)? / grand.size() as f64;
    let low_alone = cost(PoolComposition::new(pop.low.count, 0), pop, params)? / pop.low.count as f64;
    Ok(pooled < low_alone)
}

/// Max-subsidy with the high type undercharged by `epsilon` per head and the
/// low type making up the difference, on every mixed composition.
#[derive(Debug, Clone, Copy)]
pub struct PerturbedMaxSubsidy {
    pub epsilon: f64,
}

impl PricingScheme for PerturbedMaxSubsidy {
    fn id(&self) -> &str {
        "max_subsidy_perturbed"
    }

    fn price(&self, comp: PoolComposition, pop: &Population, params: &CostParams) -> Result<PriceSchedule> {
        let base = max_subsidy(comp, pop, params)?;
        match (base.low, base.high) {
            (Some(low), Some(high)) => Ok(PriceSchedule {
                low: Some(low + self.epsilon * comp.n_high as f64 / comp.n_low as f64),
                high: Some(high - self.epsilon),
            }),
            _ => Ok(base),
        }
    }
}

/// Core check of [`PerturbedMaxSubsidy`]. Any positive undercharge should
/// make the all-low pool `(N_L, 0)` block; `epsilon_subsidy = 0` is plain
/// max-subsidy and should be stable.
pub fn max_subsidy_tightness(
    pop: &Population,
    params: &CostParams,
    epsilon_subsidy: f64,
) -> Result<StabilityReport> {
    if pop.low.count == 0 || pop.high.count == 0 {
        return Err(Error::domain("tightness needs both N_L > 0 and N_H > 0"));
    }
    if !(epsilon_subsidy.is_finite() && epsilon_subsidy >= 0.0) {
        return Err(Error::domain(format!(
            "subsidy perturbation {epsilon_subsidy} must be >= 0"
        )));
    }
    let scheme = PerturbedMaxSubsidy {
        epsilon: epsilon_subsidy,
    };
    is_core_stable(&scheme, pop, params, STRICT_SLACK)
}

/// How the cascade picks the group that leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CascadePolicy {
    /// The blocking composition with the largest minimum saving.
    BestBlocking,
    /// Only all-low-risk groups may leave.
    LowRiskExodus,
}

impl fmt::Display for CascadePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CascadePolicy::BestBlocking => "best_blocking",
            CascadePolicy::LowRiskExodus => "low_risk_exodus",
        })
    }
}

impl FromStr for CascadePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "best_blocking" => Ok(CascadePolicy::BestBlocking),
            "low_risk_exodus" => Ok(CascadePolicy::LowRiskExodus),
            other => Err(Error::validation(
                "policy",
                format!("unknown cascade policy `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CascadeStep {
    pub step: usize,
    pub departing: PoolComposition,
    pub departing_prices: PriceSchedule,
    pub remaining: PoolComposition,
    pub prices_before: PriceSchedule,
    /// `None` once nobody is left.
    pub prices_after: Option<PriceSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CascadeTrace {
    pub policy: CascadePolicy,
    pub steps: Vec<CascadeStep>,
    pub final_pool: PoolComposition,
}

/// Repeatedly removes the policy's chosen blocking group from the pool and
/// re-prices whoever is left, until no group wants to leave.
pub fn cascade(
    scheme: &dyn PricingScheme,
    pop: &Population,
    params: &CostParams,
    policy: CascadePolicy,
) -> Result<CascadeTrace> {
    let deviators = match policy {
        CascadePolicy::BestBlocking => Deviators::Any,
        CascadePolicy::LowRiskExodus => Deviators::LowOnly,
    };
    let mut pool = pop.grand();
    let mut steps = Vec::new();
    while !pool.is_empty() {
        let search = search_blocking(
            Execution::default(),
            scheme,
            pool,
            pop,
            params,
            STRICT_SLACK,
            deviators,
        )?;
        let Some(leaving) = search.best else { break };
        let remaining = pool
            .minus(leaving.comp)
            .ok_or_else(|| Error::Invariant("departing group exceeds the pool".into()))?;
        let prices_after = if remaining.is_empty() {
            None
        } else {
            Some(scheme.price(remaining, pop, params)?)
        };
        steps.push(CascadeStep {
            step: steps.len() + 1,
            departing: leaving.comp,
            departing_prices: leaving.prices,
            remaining,
            prices_before: search.pool_prices,
            prices_after,
        });
        pool = remaining;
    }
    Ok(CascadeTrace {
        policy,
        steps,
        final_pool: pool,
    })
}
