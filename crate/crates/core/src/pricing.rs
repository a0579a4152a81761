//! Pricing schemes: rules that split a pool's cost into per-type prices.
//!
//! Every scheme sees only the composition, the two risk levels and the cost
//! parameters, so members of the same type always pay the same price.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{
    cost, marginal_unchecked, CostModel, CostParams, PoolComposition, Population,
    RiskClass,
};
use crate::numeric::{CompensatedSum, LnFactorials};
use crate::par::{self, Execution};

/// Relative tolerance on `n_L p_L + n_H p_H = cost`.
pub const EFFICIENCY_TOLERANCE: f64 = 1e-9;

/// Largest pool the exact Shapley computation accepts.
pub const MAX_SHAPLEY_MEMBERS: u64 = 100_000;

/// Per-person prices for one composition. A type with no members has no price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceSchedule {
    pub low: Option<f64>,
    pub high: Option<f64>,
}

impl PriceSchedule {
    /// Attaches prices, dropping the price of any type absent from `comp`.
    pub fn for_composition(comp: PoolComposition, low: f64, high: f64) -> Self {
        Self {
            low: (comp.n_low > 0).then_some(low),
            high: (comp.n_high > 0).then_some(high),
        }
    }

    pub fn price(&self, class: RiskClass) -> Option<f64> {
        match class {
            RiskClass::Low => self.low,
            RiskClass::High => self.high,
        }
    }

    /// Total collected from `comp`.
    pub fn collected(&self, comp: PoolComposition) -> f64 {
        comp.n_low as f64 * self.low.unwrap_or(0.0) + comp.n_high as f64 * self.high.unwrap_or(0.0)
    }

    /// `|collected - cost|`.
    pub fn efficiency_residual(
        &self,
        comp: PoolComposition,
        pop: &Population,
        params: &CostParams,
    ) -> Result<f64> {
        Ok((self.collected(comp) - cost(comp, pop, params)?).abs())
    }
}

/// Stable identifiers of the bundled schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    EvenSplit,
    Proportional,
    MaxSubsidy,
    Shapley,
}

impl SchemeId {
    pub const ALL: [SchemeId; 4] = [
        SchemeId::EvenSplit,
        SchemeId::Proportional,
        SchemeId::MaxSubsidy,
        SchemeId::Shapley,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::EvenSplit => "even_split",
            SchemeId::Proportional => "proportional",
            SchemeId::MaxSubsidy => "max_subsidy",
            SchemeId::Shapley => "shapley",
        }
    }

    pub fn scheme(self) -> &'static dyn PricingScheme {
        match self {
            SchemeId::EvenSplit => &EvenSplit,
            SchemeId::Proportional => &Proportional,
            SchemeId::MaxSubsidy => &MaxSubsidy,
            SchemeId::Shapley => &Shapley,
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                Error::validation(
                    "schemes",
                    format!("unknown scheme `{s}`; expected one of even_split, proportional, max_subsidy, shapley"),
                )
            })
    }
}

/// A rule mapping a composition to per-type prices.
///
/// Implementations must be anonymous: the output may depend only on the
/// counts, the two risk levels and the cost parameters. Stability checks
/// enumerate compositions rather than member subsets and rely on this.
pub trait PricingScheme: Send + Sync {
    fn id(&self) -> &str;

    fn price(
        &self,
        comp: PoolComposition,
        pop: &Population,
        params: &CostParams,
    ) -> Result<PriceSchedule>;

    /// Prices of every sub-composition of `pool` at once, for schemes that
    /// can produce them faster than one composition at a time.
    fn sub_pool_prices(
        &self,
        _pool: PoolComposition,
        _pop: &Population,
        _params: &CostParams,
    ) -> Result<Option<PriceGrid>> {
        Ok(None)
    }
}

/// Prices indexed by composition, covering every `(a, b) <= pool`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceGrid {
    pool: PoolComposition,
    cells: Vec<PriceSchedule>,
}

impl PriceGrid {
    pub fn pool(&self) -> PoolComposition {
        self.pool
    }

    pub fn get(&self, comp: PoolComposition) -> Option<PriceSchedule> {
        if !comp.is_within(self.pool) || comp.is_empty() {
            return None;
        }
        let width = self.pool.n_high as usize + 1;
        Some(self.cells[comp.n_low as usize * width + comp.n_high as usize])
    }
}

fn require_nonempty(comp: PoolComposition, scheme: &str) -> Result<()> {
    if comp.is_empty() {
        return Err(Error::domain(format!("{scheme} pricing of an empty pool is undefined")));
    }
    Ok(())
}

/// Everybody pays `cost / (n_L + n_H)`.
pub fn even_split(comp: PoolComposition, pop: &Population, params: &CostParams) -> Result<PriceSchedule> {
    require_nonempty(comp, "even-split")?;
    let average = cost(comp, pop, params)? / comp.size() as f64;
    Ok(PriceSchedule::for_composition(comp, average, average))
}

/// Own expected loss plus a variance-weighted share of the safety buffer:
/// `V (r + b_p R / sqrt(R_L n_L + R_H n_H))`.
pub fn proportional(
    comp: PoolComposition,
    pop: &Population,
    params: &CostParams,
) -> Result<PriceSchedule> {
    require_nonempty(comp, "proportional")?;
    if params.model != CostModel::Insolvency {
        return Err(Error::capability(
            "proportional pricing is only defined for the insolvency cost model",
        ));
    }
    pop.check(comp)?;
    let (rl, rh) = (pop.low.variance_factor(), pop.high.variance_factor());
    let sd = (rl * comp.n_low as f64 + rh * comp.n_high as f64).sqrt();
    let share = |r: f64, big_r: f64| {
        let spread = if sd == 0.0 { 0.0 } else { params.buffer() * big_r / sd };
        params.insured_value * (r + spread)
    };
    Ok(PriceSchedule::for_composition(
        comp,
        share(pop.low.r, rl),
        share(pop.high.r, rh),
    ))
}

/// Low-risk members pay their homogeneous-pool average; high-risk members
/// pay the incremental cost of joining them.
pub fn max_subsidy(comp: PoolComposition, pop: &Population, params: &CostParams) -> Result<PriceSchedule> {
    require_nonempty(comp, "max-subsidy")?;
    let total = cost(comp, pop, params)?;
    let low_alone = cost(PoolComposition::new(comp.n_low, 0), pop, params)?;
    let low = if comp.n_low > 0 { low_alone / comp.n_low as f64 } else { f64::NAN };
    let high = if comp.n_high > 0 {
        (total - low_alone) / comp.n_high as f64
    } else {
        f64::NAN
    };
    Ok(PriceSchedule::for_composition(comp, low, high))
}

/// Exact Shapley value of one member of `class`, reduced to a sum over the
/// compositions `(a, b)` of the members that arrive before it:
///
/// ```text
/// phi = 1/n * sum_{a,b} C(n_L', a) C(n_H', b) / C(n - 1, a + b) * marginal(a, b)
/// ```
///
/// where `(n_L', n_H')` counts the other members.
fn shapley_class(
    exec: Execution,
    comp: PoolComposition,
    class: RiskClass,
    pop: &Population,
    params: &CostParams,
    table: &LnFactorials,
) -> f64 {
    let n = comp.size() as usize;
    let (others_low, others_high) = match class {
        RiskClass::Low => (comp.n_low as usize - 1, comp.n_high as usize),
        RiskClass::High => (comp.n_low as usize, comp.n_high as usize - 1),
    };
    let ln_n = (n as f64).ln();
    let rows = par::map_range(exec, others_low + 1, |a| {
        let mut row = CompensatedSum::new();
        let ln_a = table.ln_choose(others_low, a);
        for b in 0..=others_high {
            let ln_w = ln_a + table.ln_choose(others_high, b) - table.ln_choose(n - 1, a + b) - ln_n;
            let m = marginal_unchecked(a as u64, b as u64, class, pop, params);
            row.add(ln_w.exp() * m);
        }
        row
    });
    let mut total = CompensatedSum::new();
    for row in rows {
        total.merge(row);
    }
    total.value()
}

/// Exact Shapley prices.
pub fn shapley_exact(comp: PoolComposition, pop: &Population, params: &CostParams) -> Result<PriceSchedule> {
    shapley_exact_with(Execution::default(), comp, pop, params)
}

pub fn shapley_exact_with(
    exec: Execution,
    comp: PoolComposition,
    pop: &Population,
    params: &CostParams,
) -> Result<PriceSchedule> {
    require_nonempty(comp, "Shapley")?;
    pop.check(comp)?;
    if comp.size() > MAX_SHAPLEY_MEMBERS {
        return Err(Error::capability(format!(
            "exact Shapley pricing supports at most {MAX_SHAPLEY_MEMBERS} members, got {}",
            comp.size()
        )));
    }
    let table = LnFactorials::up_to(comp.size() as usize);
    let low = if comp.n_low > 0 {
        shapley_class(exec, comp, RiskClass::Low, pop, params, &table)
    } else {
        f64::NAN
    };
    let high = if comp.n_high > 0 {
        shapley_class(exec, comp, RiskClass::High, pop, params, &table)
    } else {
        f64::NAN
    };
    Ok(PriceSchedule::for_composition(comp, low, high))
}

/// Largest number of sub-compositions [`shapley_grid`] will fill.
pub const MAX_GRID_CELLS: u64 = 50_000_000;

/// Exact Shapley prices of every sub-composition of `pool`, from the
/// recursion
///
/// ```text
/// phi_i(N) = ( v(N) - v(N - i) + sum_{j != i} phi_i(N - j) ) / |N|
/// ```
///
/// which for two types costs O(1) per composition.
pub fn shapley_grid(pool: PoolComposition, pop: &Population, params: &CostParams) -> Result<PriceGrid> {
    require_nonempty(pool, "Shapley")?;
    pop.check(pool)?;
    let cells = (pool.n_low + 1).saturating_mul(pool.n_high + 1);
    if cells > MAX_GRID_CELLS {
        return Err(Error::capability(format!(
            "Shapley price grid supports at most {MAX_GRID_CELLS} compositions, got {cells}"
        )));
    }
    let width = pool.n_high as usize + 1;
    let mut low = vec![0.0; cells as usize];
    let mut high = vec![0.0; cells as usize];
    let mut out = vec![PriceSchedule { low: None, high: None }; cells as usize];
    for a in 0..=pool.n_low as usize {
        for b in 0..=pool.n_high as usize {
            let n = (a + b) as f64;
            let i = a * width + b;
            if a > 0 {
                let mut acc = marginal_unchecked(a as u64 - 1, b as u64, RiskClass::Low, pop, params);
                if a > 1 {
                    acc += (a - 1) as f64 * low[i - width];
                }
                if b > 0 {
                    acc += b as f64 * low[i - 1];
                }
                low[i] = acc / n;
            }
            if b > 0 {
                let mut acc = marginal_unchecked(a as u64, b as u64 - 1, RiskClass::High, pop, params);
                if b > 1 {
                    acc += (b - 1) as f64 * high[i - 1];
                }
                if a > 0 {
                    acc += a as f64 * high[i - width];
                }
                high[i] = acc / n;
            }
            out[i] = PriceSchedule::for_composition(PoolComposition::new(a as u64, b as u64), low[i], high[i]);
        }
    }
    Ok(PriceGrid { pool, cells: out })
}

/// Monte Carlo Shapley estimate with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampledShapley {
    pub prices: PriceSchedule,
    pub stderr_low: Option<f64>,
    pub stderr_high: Option<f64>,
    pub permutations: usize,
}

const SAMPLE_CHUNK: usize = 1024;

#[derive(Default)]
struct Moments {
    sum: CompensatedSum,
    sum_sq: CompensatedSum,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.sum.add(x);
        self.sum_sq.add(x * x);
    }

    fn merge(&mut self, other: Moments) {
        self.sum.merge(other.sum);
        self.sum_sq.merge(other.sum_sq);
    }

    fn mean_and_stderr(&self, count: usize) -> (f64, f64) {
        let k = count as f64;
        let mean = self.sum.value() / k;
        if count < 2 {
            return (mean, f64::INFINITY);
        }
        let var = ((self.sum_sq.value() - k * mean * mean) / (k - 1.0)).max(0.0);
        (mean, (var / k).sqrt())
    }
}

/// Estimates Shapley prices from random arrival orders. Each order yields one
/// draw per type: the average marginal cost of that type's members. Chunk `i`
/// of the orders is generated from `(seed, i)`, so results do not depend on
/// the execution strategy.
pub fn shapley_sampled(
    comp: PoolComposition,
    pop: &Population,
    params: &CostParams,
    permutations: usize,
    seed: u64,
) -> Result<SampledShapley> {
    shapley_sampled_with(Execution::default(), comp, pop, params, permutations, seed)
}

pub fn shapley_sampled_with(
    exec: Execution,
    comp: PoolComposition,
    pop: &Population,
    params: &CostParams,
    permutations: usize,
    seed: u64,
) -> Result<SampledShapley> {
    require_nonempty(comp, "Shapley")?;
    pop.check(comp)?;
    if permutations == 0 {
        return Err(Error::domain("Shapley sampling needs at least one permutation"));
    }
    let chunks = permutations.div_ceil(SAMPLE_CHUNK);
    let partials = par::map_range(exec, chunks, |chunk| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chunk as u64);
        let count = SAMPLE_CHUNK.min(permutations - chunk * SAMPLE_CHUNK);
        let mut order: Vec<RiskClass> = std::iter::repeat_n(RiskClass::Low, comp.n_low as usize)
            .chain(std::iter::repeat_n(RiskClass::High, comp.n_high as usize))
            .collect();
        let (mut low, mut high) = (Moments::default(), Moments::default());
        for _ in 0..count {
            order.shuffle(&mut rng);
            let (mut nl, mut nh) = (0u64, 0u64);
            let (mut sum_low, mut sum_high) = (0.0, 0.0);
            for &class in &order {
                let m = marginal_unchecked(nl, nh, class, pop, params);
                match class {
                    RiskClass::Low => {
                        sum_low += m;
                        nl += 1;
                    }
                    RiskClass::High => {
                        sum_high += m;
                        nh += 1;
                    }
                }
            }
            if comp.n_low > 0 {
                low.push(sum_low / comp.n_low as f64);
            }
            if comp.n_high > 0 {
                high.push(sum_high / comp.n_high as f64);
            }
        }
        (low, high)
    });
    let (mut low, mut high) = (Moments::default(), Moments::default());
    for (l, h) in partials {
        low.merge(l);
        high.merge(h);
    }
    let (low_mean, low_se) = low.mean_and_stderr(permutations);
    let (high_mean, high_se) = high.mean_and_stderr(permutations);
    Ok(SampledShapley {
        prices: PriceSchedule::for_composition(comp, low_mean, high_mean),
        stderr_low: (comp.n_low > 0).then_some(low_se),
        stderr_high: (comp.n_high > 0).then_some(high_se),
        permutations,
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvenSplit;

#[derive(Debug, Clone, Copy, Default)]
pub struct Proportional;

#[derive(Debug, Clone, Copy, Default)]
pub struct MaxSubsidy;

/// Exact Shapley pricing. Runs sequentially inside; callers that price many
/// compositions parallelize across compositions instead.
#[derive(Debug, Clone, Copy, Default)]
pub struct Shapley;

impl PricingScheme for EvenSplit {
    fn id(&self) -> &str {
        SchemeId::EvenSplit.as_str()
    }

    fn price(&self, comp: PoolComposition, pop: &Population, params: &CostParams) -> Result<PriceSchedule> {
        even_split(comp, pop, params)
    }
}

impl PricingScheme for Proportional {
    fn id(&self) -> &str {
        SchemeId::Proportional.as_str()
    }

    fn price(&self, comp: PoolComposition, pop: &Population, params: &CostParams) -> Result<PriceSchedule> {
        proportional(comp, pop, params)
    }
}

impl PricingScheme for MaxSubsidy {
    fn id(&self) -> &str {
        SchemeId::MaxSubsidy.as_str()
    }

    fn price(&self, comp: PoolComposition, pop: &Population, params: &CostParams) -> Result<PriceSchedule> {
        max_subsidy(comp, pop, params)
    }
}

impl PricingScheme for Shapley {
    fn id(&self) -> &str {
        SchemeId::Shapley.as_str()
    }

    fn price(&self, comp: PoolComposition, pop: &Population, params: &CostParams) -> Result<PriceSchedule> {
        shapley_exact_with(Execution::Sequential, comp, pop, params)
    }

    fn sub_pool_prices(
        &self,
        pool: PoolComposition,
        pop: &Population,
        params: &CostParams,
    ) -> Result<Option<PriceGrid>> {
        shapley_grid(pool, pop, params).map(Some)
    }
}
