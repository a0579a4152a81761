//! Randomized and exhaustive checks of submodularity of the pool cost.
//!
//! Pools are multisets of two interchangeable types, so a pair `(S, T)` is
//! described per type by how many members sit only in `S`, in both, and only
//! in `T`. Then `S ∪ T` and `S ∩ T` follow directly and the check is
//!
//! ```text
//! cost(S) + cost(T) >= cost(S ∪ T) + cost(S ∩ T)
//! ```
//!
//! with strict inequality whenever neither set contains the other (and both
//! exclusive parts carry some claim variance).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{cost_unchecked, CostParams, PoolComposition, Population};
use crate::par::{self, Execution};

/// Relative slack allowed on the non-strict inequality.
pub const INEQUALITY_TOLERANCE: f64 = 1e-12;

/// Overlap decomposition of a pair of pools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OverlapPair {
    pub only_s: PoolComposition,
    pub shared: PoolComposition,
    pub only_t: PoolComposition,
}

fn add(a: PoolComposition, b: PoolComposition) -> PoolComposition {
    PoolComposition::new(a.n_low + b.n_low, a.n_high + b.n_high)
}

impl OverlapPair {
    pub fn s(&self) -> PoolComposition {
        add(self.only_s, self.shared)
    }

    pub fn t(&self) -> PoolComposition {
        add(self.shared, self.only_t)
    }

    pub fn union(&self) -> PoolComposition {
        add(self.s(), self.only_t)
    }

    pub fn intersection(&self) -> PoolComposition {
        self.shared
    }

    /// `S ⊆ T` or `T ⊆ S`.
    pub fn is_nested(&self) -> bool {
        self.only_s.is_empty() || self.only_t.is_empty()
    }

    /// Strictness is owed when both exclusive parts add claim variance.
    pub fn owes_strictness(&self, pop: &Population, params: &CostParams) -> bool {
        let variance = |c: PoolComposition| {
            c.n_low as f64 * pop.low.variance_factor() + c.n_high as f64 * pop.high.variance_factor()
        };
        params.buffer() > 0.0 && variance(self.only_s) > 0.0 && variance(self.only_t) > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// `cost(S) + cost(T) < cost(S ∪ T) + cost(S ∩ T)`.
    Inequality,
    /// Equality where a strict gap was owed.
    Strictness,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Counterexample {
    pub pair: OverlapPair,
    pub separate: f64,
    pub merged: f64,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubmodularityReport {
    pub pairs_checked: usize,
    pub strict_pairs: usize,
    pub nested_pairs: usize,
    pub violations: usize,
    pub first_counterexample: Option<Counterexample>,
}

impl SubmodularityReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Outcome of one pair: `(owes_strictness, counterexample)`.
pub fn check_pair(
    pair: &OverlapPair,
    pop: &Population,
    params: &CostParams,
) -> (bool, Option<Counterexample>) {
    let c = |p: PoolComposition| cost_unchecked(p.n_low, p.n_high, pop, params);
    let separate = c(pair.s()) + c(pair.t());
    let merged = c(pair.union()) + c(pair.intersection());
    let strict = pair.owes_strictness(pop, params);
    let slack = INEQUALITY_TOLERANCE * separate.abs().max(1.0);
    let kind = if separate < merged - slack {
        Some(ViolationKind::Inequality)
    } else if strict && separate <= merged {
        Some(ViolationKind::Strictness)
    } else {
        None
    };
    let counterexample = kind.map(|kind| Counterexample {
        pair: *pair,
        separate,
        merged,
        kind,
    });
    (strict, counterexample)
}

fn summarize(
    pairs: &[OverlapPair],
    outcomes: Vec<(bool, Option<Counterexample>)>,
) -> SubmodularityReport {
    let mut report = SubmodularityReport {
        pairs_checked: pairs.len(),
        strict_pairs: 0,
        nested_pairs: pairs.iter().filter(|p| p.is_nested()).count(),
        violations: 0,
        first_counterexample: None,
    };
    for (strict, cex) in outcomes {
        report.strict_pairs += usize::from(strict);
        if let Some(cex) = cex {
            report.violations += 1;
            report.first_counterexample.get_or_insert(cex);
        }
    }
    report
}

/// Splits `total` members of one type into (only S, shared, only T).
fn random_split(rng: &mut ChaCha8Rng, total: u64) -> (u64, u64, u64) {
    let used = rng.gen_range(0..=total);
    let mut cuts = [rng.gen_range(0..=used), rng.gen_range(0..=used)];
    cuts.sort_unstable();
    (cuts[0], cuts[1] - cuts[0], used - cuts[1])
}

/// Draws `trials` random pairs from the population. Pair `i` depends only on
/// `(seed, i)`.
pub fn sample_pairs(pop: &Population, trials: usize, seed: u64) -> Vec<OverlapPair> {
    (0..trials)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let (ls, lb, lt) = random_split(&mut rng, pop.low.count);
            let (hs, hb, ht) = random_split(&mut rng, pop.high.count);
            OverlapPair {
                only_s: PoolComposition::new(ls, hs),
                shared: PoolComposition::new(lb, hb),
                only_t: PoolComposition::new(lt, ht),
            }
        })
        .collect()
}

/// Every overlap decomposition with at most `n_low` / `n_high` members per type.
pub fn exhaustive_pairs(n_low: u64, n_high: u64) -> Vec<OverlapPair> {
    let splits = |n: u64| {
        let mut out = Vec::new();
        for a in 0..=n {
            for b in 0..=n - a {
                for c in 0..=n - a - b {
                    out.push((a, b, c));
                }
            }
        }
        out
    };
    let (low, high) = (splits(n_low), splits(n_high));
    let mut pairs = Vec::with_capacity(low.len() * high.len());
    for &(ls, lb, lt) in &low {
        for &(hs, hb, ht) in &high {
            pairs.push(OverlapPair {
                only_s: PoolComposition::new(ls, hs),
                shared: PoolComposition::new(lb, hb),
                only_t: PoolComposition::new(lt, ht),
            });
        }
    }
    pairs
}

pub fn check_pairs(
    exec: Execution,
    pairs: &[OverlapPair],
    pop: &Population,
    params: &CostParams,
) -> SubmodularityReport {
    let outcomes = par::map_slice(exec, pairs, |pair| check_pair(pair, pop, params));
    summarize(pairs, outcomes)
}

/// Randomized submodularity check over `trials` pairs.
pub fn check_submodularity(
    pop: &Population,
    params: &CostParams,
    trials: usize,
    seed: u64,
) -> Result<SubmodularityReport> {
    check_submodularity_with(Execution::default(), pop, params, trials, seed)
}

pub fn check_submodularity_with(
    exec: Execution,
    pop: &Population,
    params: &CostParams,
    trials: usize,
    seed: u64,
) -> Result<SubmodularityReport> {
    if trials == 0 {
        return Err(Error::domain("submodularity check needs at least one trial"));
    }
    let pairs = sample_pairs(pop, trials, seed);
    Ok(check_pairs(exec, &pairs, pop, params))
}

/// Every pair drawn from the population. Only sensible for tiny populations.
pub fn check_submodularity_exhaustive(
    pop: &Population,
    params: &CostParams,
) -> Result<SubmodularityReport> {
    const MAX_PER_TYPE: u64 = 12;
    if pop.low.count > MAX_PER_TYPE || pop.high.count > MAX_PER_TYPE {
        return Err(Error::capability(format!(
            "exhaustive pair enumeration supports at most {MAX_PER_TYPE} members per type"
        )));
    }
    let pairs = exhaustive_pairs(pop.low.count, pop.high.count);
    Ok(check_pairs(Execution::default(), &pairs, pop, params))
}
