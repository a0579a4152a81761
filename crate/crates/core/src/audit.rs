//! Numerical audits of pricing schemes against two impossibility results for
//! strictly submodular costs:
//!
//! 1. efficiency, a low price independent of the high type, and a high price
//!    independent of the low type cannot all hold;
//! 2. if the high price has a finite limit `c` as `r_H -> 0`, efficiency,
//!    aligned incentives (`d price_L / d r_H > 0` near zero) and stability
//!    cannot all hold.
//!
//! The audits cannot prove either statement. They measure each property on
//! probe grids and report when a forbidden combination shows up, which
//! would indicate a bug in the scheme or in the cost model.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{cost, standalone_price, CostParams, PoolComposition, Population, RiskClass};
use crate::pricing::{PriceSchedule, PricingScheme, EFFICIENCY_TOLERANCE};
use crate::stability::STRICT_SLACK;

/// Dependence on the other type below this fraction of the price counts as none.
pub const INDEPENDENCE_TOLERANCE: f64 = 1e-6;

/// Central-difference step, relative to the risk level being varied.
pub const SLOPE_STEP: f64 = 1e-6;

/// `r_H` values used to estimate `lim_{r_H -> 0} price_H`.
pub const LIMIT_SEQUENCE: [f64; 8] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EfficiencyAudit {
    pub max_abs_residual: f64,
    pub max_rel_residual: f64,
    pub worst_composition: Option<PoolComposition>,
    pub compositions: usize,
    pub pass: bool,
}

/// Largest efficiency residual over `grid`.
pub fn audit_efficiency(
    scheme: &dyn PricingScheme,
    pop: &Population,
    params: &CostParams,
    grid: &[PoolComposition],
) -> Result<EfficiencyAudit> {
    let mut audit = EfficiencyAudit {
        max_abs_residual: 0.0,
        max_rel_residual: 0.0,
        worst_composition: None,
        compositions: 0,
        pass: true,
    };
    for &comp in grid.iter().filter(|c| !c.is_empty()) {
        let total = cost(comp, pop, params)?;
        let residual = scheme.price(comp, pop, params)?.collected(comp) - total;
        let abs = residual.abs();
        let rel = if total != 0.0 { abs / total.abs() } else { abs };
        if abs > audit.max_abs_residual || audit.worst_composition.is_none() {
            audit.worst_composition = Some(comp);
        }
        audit.max_abs_residual = audit.max_abs_residual.max(abs);
        audit.max_rel_residual = audit.max_rel_residual.max(rel);
        audit.compositions += 1;
    }
    audit.pass = audit.max_rel_residual <= EFFICIENCY_TOLERANCE;
    Ok(audit)
}

/// How strongly one type's price responds to the other type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossSensitivity {
    /// Largest `|d price / d r_other|`.
    pub max_risk_slope: f64,
    /// Largest `|price(n_other + 1) - price(n_other)|`.
    pub max_count_delta: f64,
    /// Largest own price seen, used to scale the tolerance.
    pub scale: f64,
    pub probes: usize,
    pub pass: bool,
}

impl CrossSensitivity {
    fn new() -> Self {
        Self {
            max_risk_slope: 0.0,
            max_count_delta: 0.0,
            scale: 0.0,
            probes: 0,
            pass: true,
        }
    }

    fn finish(&mut self) {
        let limit = INDEPENDENCE_TOLERANCE * self.scale.max(f64::MIN_POSITIVE);
        self.pass = self.max_risk_slope <= limit && self.max_count_delta <= limit;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependenceAudit {
    pub low: CrossSensitivity,
    pub high: CrossSensitivity,
    pub skipped: Vec<String>,
}

fn risk_of(pop: &Population, class: RiskClass) -> f64 {
    pop.profile(class).r
}

fn with_risk(pop: &Population, class: RiskClass, r: f64) -> Result<Population> {
    let relaxed = pop.relaxed();
    match class {
        RiskClass::Low => relaxed.with_risks(r, pop.high.r),
        RiskClass::High => relaxed.with_risks(pop.low.r, r),
    }
}

fn price_of(
    scheme: &dyn PricingScheme,
    comp: PoolComposition,
    pop: &Population,
    params: &CostParams,
    class: RiskClass,
) -> Result<f64> {
    scheme
        .price(comp, pop, params)?
        .price(class)
        .ok_or_else(|| Error::domain(format!("no {class} members in {comp}")))
}

/// Central difference of `priced`'s price with respect to the risk level of
/// `varied`, evaluated in probe mode.
pub fn risk_slope(
    scheme: &dyn PricingScheme,
    comp: PoolComposition,
    pop: &Population,
    params: &CostParams,
    priced: RiskClass,
    varied: RiskClass,
) -> Result<f64> {
    let r = risk_of(pop, varied);
    let h = if r > 0.0 { SLOPE_STEP * r } else { SLOPE_STEP };
    if r - h < 0.0 {
        return Err(Error::domain(format!("cannot step {varied} risk {r} below zero")));
    }
    let up = price_of(scheme, comp, &with_risk(pop, varied, r + h)?, params, priced)?;
    let down = price_of(scheme, comp, &with_risk(pop, varied, r - h)?, params, priced)?;
    Ok((up - down) / (2.0 * h))
}

/// Default probes: the grand coalition and a half-sized pool.
pub fn default_probes(pop: &Population) -> Vec<PoolComposition> {
    let grand = pop.grand();
    let half = PoolComposition::new(grand.n_low.div_ceil(2), grand.n_high.div_ceil(2));
    if half == grand {
        vec![grand]
    } else {
        vec![grand, half]
    }
}

/// Measures how each type's price reacts to the other type's risk and count.
pub fn audit_independence(
    scheme: &dyn PricingScheme,
    pop: &Population,
    params: &CostParams,
    probes: &[PoolComposition],
) -> Result<IndependenceAudit> {
    // One spare member of each type, so `n + 1` probes stay inside the population.
    let roomy = pop.relaxed().with_counts(pop.low.count + 1, pop.high.count + 1);
    let mut audit = IndependenceAudit {
        low: CrossSensitivity::new(),
        high: CrossSensitivity::new(),
        skipped: Vec::new(),
    };
    for &comp in probes {
        pop.check(comp)?;
        for class in RiskClass::ALL {
            if comp.count(class) == 0 {
                audit.skipped.push(format!("{comp}: no {class} members to price"));
                continue;
            }
            let other = class.other();
            let own = price_of(scheme, comp, &roomy, params, class)?;
            let bumped = comp.plus(other);
            let count_delta = (price_of(scheme, bumped, &roomy, params, class)? - own).abs();
            let slope = match risk_slope(scheme, comp, &roomy, params, class, other) {
                Ok(s) => Some(s.abs()),
                Err(e) => {
                    audit.skipped.push(format!("{comp}: {e}"));
                    None
                }
            };
            let sens = match class {
                RiskClass::Low => &mut audit.low,
                RiskClass::High => &mut audit.high,
            };
            sens.scale = sens.scale.max(own.abs());
            sens.max_count_delta = sens.max_count_delta.max(count_delta);
            if let Some(s) = slope {
                sens.max_risk_slope = sens.max_risk_slope.max(s);
            }
            sens.probes += 1;
        }
    }
    audit.low.finish();
    audit.high.finish();
    Ok(audit)
}

/// One point of the `r_H` sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeProbe {
    pub r_high: f64,
    pub price_low: f64,
    pub price_high: f64,
    /// `d price_L / d r_H`.
    pub slope: f64,
    pub efficient: bool,
    /// Neither type strictly prefers its standalone pool.
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentAudit {
    pub probes: Vec<SlopeProbe>,
    pub min_slope: f64,
    pub max_slope: f64,
    /// `d price_L / d r_H > 0` at every probe.
    pub aligned: bool,
    /// `d price_L / d r_H < 0` at some probe.
    pub anti_social: bool,
    pub limit_sequence: Vec<(f64, f64)>,
    pub limit_c: Option<f64>,
    pub limit_hypothesis_met: bool,
    pub efficient: bool,
    pub stable_for_all_probed_r: bool,
    pub first_unstable_r: Option<f64>,
    /// `efficient && aligned && stable`; `None` when the limit hypothesis fails.
    pub forbidden_pattern: Option<bool>,
}

/// `count` evenly spaced `r_H` values from `0.001` up to the population's `r_H`.
pub fn default_r_interval(pop: &Population, count: usize) -> Vec<f64> {
    let lo = 1e-3;
    let hi = pop.high.r.max(lo);
    if count <= 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

fn standalone_stable(
    prices: &PriceSchedule,
    comp: PoolComposition,
    pop: &Population,
    params: &CostParams,
) -> Result<bool> {
    for class in RiskClass::ALL {
        if let Some(p) = prices.price(class) {
            let alone = standalone_price(class, comp.count(class), pop, params)?;
            if p > alone + STRICT_SLACK {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn limit_of(sequence: &[(f64, f64)]) -> (Option<f64>, bool) {
    let Some(&(_, last)) = sequence.last() else {
        return (None, false);
    };
    let diffs: Vec<f64> = sequence.windows(2).map(|w| (w[1].1 - w[0].1).abs()).collect();
    let scale = sequence.iter().map(|(_, p)| p.abs()).fold(1.0, f64::max);
    let settled = diffs.last().is_some_and(|d| *d <= 1e-3 * scale);
    let shrinking = diffs
        .windows(2)
        .rev()
        .take(3)
        .all(|w| w[1] <= w[0] + 1e-12 * scale);
    let met = last.is_finite() && settled && shrinking;
    (met.then_some(last), met)
}

/// Sweeps `r_H` over `r_interval` with everything else fixed, measuring the
/// slope of the low price, efficiency, and whether either type would rather
/// stand alone. Also estimates `lim_{r_H -> 0} price_H` on the grand coalition.
pub fn audit_aligned_incentives(
    scheme: &dyn PricingScheme,
    pop: &Population,
    params: &CostParams,
    r_interval: &[f64],
) -> Result<AlignmentAudit> {
    let grand = pop.grand();
    if grand.n_low == 0 || grand.n_high == 0 {
        return Err(Error::domain("alignment audit needs both types present"));
    }
    let mut probes = Vec::with_capacity(r_interval.len());
    for &r_high in r_interval {
        let probe_pop = with_risk(pop, RiskClass::High, r_high)?;
        let prices = scheme.price(grand, &probe_pop, params)?;
        let total = cost(grand, &probe_pop, params)?;
        let efficient = (prices.collected(grand) - total).abs() <= EFFICIENCY_TOLERANCE * total.abs();
        let slope = risk_slope(scheme, grand, &probe_pop, params, RiskClass::Low, RiskClass::High)?;
        probes.push(SlopeProbe {
            r_high,
            price_low: prices.low.unwrap_or(f64::NAN),
            price_high: prices.high.unwrap_or(f64::NAN),
            slope,
            efficient,
            stable: standalone_stable(&prices, grand, &probe_pop, params)?,
        });
    }
    let scale = probes
        .iter()
        .map(|p| p.price_low.abs())
        .fold(f64::MIN_POSITIVE, f64::max);
    let tol = INDEPENDENCE_TOLERANCE * scale;
    let min_slope = probes.iter().map(|p| p.slope).fold(f64::INFINITY, f64::min);
    let max_slope = probes.iter().map(|p| p.slope).fold(f64::NEG_INFINITY, f64::max);
    let aligned = !probes.is_empty() && probes.iter().all(|p| p.slope > tol);
    let anti_social = probes.iter().any(|p| p.slope < -tol);
    let efficient = probes.iter().all(|p| p.efficient);
    let first_unstable_r = probes.iter().find(|p| !p.stable).map(|p| p.r_high);

    let mut limit_sequence = Vec::with_capacity(LIMIT_SEQUENCE.len());
    for r_high in LIMIT_SEQUENCE {
        let probe_pop = with_risk(pop, RiskClass::High, r_high)?;
        limit_sequence.push((r_high, price_of(scheme, grand, &probe_pop, params, RiskClass::High)?));
    }
    let (limit_c, limit_hypothesis_met) = limit_of(&limit_sequence);
    let stable = first_unstable_r.is_none();
    Ok(AlignmentAudit {
        probes,
        min_slope,
        max_slope,
        aligned,
        anti_social,
        limit_sequence,
        limit_c,
        limit_hypothesis_met,
        efficient,
        stable_for_all_probed_r: stable,
        first_unstable_r,
        forbidden_pattern: limit_hypothesis_met.then_some(efficient && aligned && stable),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdicts {
    pub efficient: bool,
    pub independent_low: bool,
    pub independent_high: bool,
    pub aligned: bool,
    pub stable_for_all_probed_r: bool,
    pub limit_hypothesis_met: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub scheme: String,
    pub efficiency: EfficiencyAudit,
    pub independence: IndependenceAudit,
    pub alignment: AlignmentAudit,
    pub verdicts: Verdicts,
}

impl AuditReport {
    /// Efficient and independent in both directions.
    pub fn independence_pattern(&self) -> bool {
        let v = &self.verdicts;
        v.efficient && v.independent_low && v.independent_high
    }

    /// Efficient, aligned and stable, under a finite `c`.
    pub fn aligned_pattern(&self) -> bool {
        let v = &self.verdicts;
        v.limit_hypothesis_met && v.efficient && v.aligned && v.stable_for_all_probed_r
    }

    /// Errors if either forbidden combination was observed.
    pub fn check_impossibility(&self) -> Result<()> {
        if self.independence_pattern() {
            return Err(Error::Invariant(format!(
                "scheme `{}` is efficient with both prices independent of the other type",
                self.scheme
            )));
        }
        if self.aligned_pattern() {
            return Err(Error::Invariant(format!(
                "scheme `{}` is efficient, aligned and stable on every probe",
                self.scheme
            )));
        }
        Ok(())
    }
}

/// Evenly spaced compositions covering the population, at most
/// `per_axis` values per type, always including both ends.
pub fn strided_grid(pop: &Population, per_axis: u64) -> Vec<PoolComposition> {
    let axis = |n: u64| -> Vec<u64> {
        if n < per_axis {
            (0..=n).collect()
        } else {
            let mut v: Vec<u64> = (0..per_axis).map(|i| i * n / (per_axis - 1)).collect();
            v.dedup();
            v
        }
    };
    let (ls, hs) = (axis(pop.low.count), axis(pop.high.count));
    ls.iter()
        .flat_map(|&l| hs.iter().map(move |&h| PoolComposition::new(l, h)))
        .filter(|c| !c.is_empty())
        .collect()
}

/// All three audits with default grids.
pub fn audit(scheme: &dyn PricingScheme, pop: &Population, params: &CostParams) -> Result<AuditReport> {
    let efficiency = audit_efficiency(scheme, pop, params, &strided_grid(pop, 11))?;
    let independence = audit_independence(scheme, pop, params, &default_probes(pop))?;
    let alignment = audit_aligned_incentives(scheme, pop, params, &default_r_interval(pop, 16))?;
    let verdicts = Verdicts {
        efficient: efficiency.pass && alignment.efficient,
        independent_low: independence.low.pass,
        independent_high: independence.high.pass,
        aligned: alignment.aligned,
        stable_for_all_probed_r: alignment.stable_for_all_probed_r,
        limit_hypothesis_met: alignment.limit_hypothesis_met,
    };
    Ok(AuditReport {
        scheme: scheme.id().to_string(),
        efficiency,
        independence,
        alignment,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RiskProfile;
    use crate::pricing::{EvenSplit, MaxSubsidy, Proportional, SchemeId};
    use crate::stability::{evensplit_condition, is_core_stable};

    fn scenario(r_high: f64) -> (Population, CostParams) {
        (
            Population::new(RiskProfile::new(0.02, 500), RiskProfile::new(r_high, 500)).unwrap(),
            CostParams::insolvency(1000.0, 2.0).unwrap(),
        )
    }

    /// Charges everybody $30 no matter what.
    struct Flat;

    impl PricingScheme for Flat {
        fn id(&self) -> &str {
            "flat_30"
        }

        fn price(&self, comp: PoolComposition, _: &Population, _: &CostParams) -> Result<PriceSchedule> {
            Ok(PriceSchedule::for_composition(comp, 30.0, 30.0))
        }
    }

    #[test]
    fn flat_scheme_is_inefficient() {
        let (pop, params) = scenario(0.025);
        let a = audit_efficiency(&Flat, &pop, &params, &[pop.grand()]).unwrap();
        let expected = cost(pop.grand(), &pop, &params).unwrap() - 30_000.0;
        assert!((a.max_abs_residual - expected).abs() < 1e-9);
        assert!((a.max_abs_residual - 1878.0).abs() < 1.0);
        assert!(!a.pass);
    }

    #[test]
    fn bundled_schemes_are_efficient_on_full_grid() {
        let (pop, params) = scenario(0.025);
        let pop = pop.with_counts(60, 60);
        let grid: Vec<_> = pop.compositions().collect();
        for scheme in [&EvenSplit as &dyn PricingScheme, &Proportional, &MaxSubsidy] {
            let a = audit_efficiency(scheme, &pop, &params, &grid).unwrap();
            assert!(a.pass, "{}: {}", scheme.id(), a.max_rel_residual);
            assert_eq!(a.compositions, grid.len());
        }
    }

    #[test]
    fn max_subsidy_independence_split() {
        let (pop, params) = scenario(0.025);
        let a = audit_independence(&MaxSubsidy, &pop, &params, &default_probes(&pop)).unwrap();
        assert!(a.low.pass, "{:?}", a.low);
        assert_eq!(a.low.max_risk_slope, 0.0);
        assert!(!a.high.pass);
    }

    #[test]
    fn max_subsidy_high_price_moves_with_low_count() {
        let (pop, params) = scenario(0.025);
        let at = |n_low| {
            MaxSubsidy
                .price(PoolComposition::new(n_low, 500), &pop, &params)
                .unwrap()
                .high
                .unwrap()
        };
        assert!((at(400) - at(500)).abs() > 0.1);
    }

    #[test]
    fn proportional_depends_both_ways() {
        let (pop, params) = scenario(0.025);
        let a = audit_independence(&Proportional, &pop, &params, &default_probes(&pop)).unwrap();
        assert!(!a.low.pass && !a.high.pass);
    }

    #[test]
    fn proportional_is_anti_social() {
        let (pop, params) = scenario(0.025);
        let a = audit_aligned_incentives(&Proportional, &pop, &params, &default_r_interval(&pop, 8)).unwrap();
        assert!(!a.aligned);
        assert!(a.anti_social);
        assert!(a.max_slope < 0.0);
    }

    #[test]
    fn max_subsidy_is_flat_in_r_high() {
        let (pop, params) = scenario(0.025);
        let a = audit_aligned_incentives(&MaxSubsidy, &pop, &params, &default_r_interval(&pop, 8)).unwrap();
        assert!(a.probes.iter().all(|p| p.slope == 0.0));
        assert!(!a.aligned && !a.anti_social);
        assert!(a.stable_for_all_probed_r);
        assert_eq!(a.forbidden_pattern, Some(false));
    }

    #[test]
    fn even_split_is_aligned_but_loses_stability() {
        let (pop, params) = scenario(0.025);
        let a = audit_aligned_incentives(&EvenSplit, &pop, &params, &default_r_interval(&pop, 8)).unwrap();
        assert!(a.aligned);
        assert!(!a.stable_for_all_probed_r);
        assert!(a.limit_hypothesis_met);

        // Between r_H = 0.025 and 0.04 the even-split condition flips, and the
        // full core check agrees on both sides of the flip.
        let sweep: Vec<f64> = (0..=15).map(|i| 0.025 + 0.001 * i as f64).collect();
        let verdicts: Vec<bool> = sweep
            .iter()
            .map(|&r| evensplit_condition(&pop.with_risks(0.02, r).unwrap(), &params).unwrap())
            .collect();
        let flip = verdicts.iter().position(|v| !v).unwrap();
        assert!(flip > 0);
        for &i in &[flip - 1, flip] {
            let p = pop.with_risks(0.02, sweep[i]).unwrap().with_counts(500, 500);
            let stable = is_core_stable(&EvenSplit, &p, &params, STRICT_SLACK).unwrap().stable;
            assert_eq!(stable, verdicts[i]);
        }
    }

    #[test]
    fn no_bundled_scheme_shows_a_forbidden_pattern() {
        let (pop, params) = scenario(0.04);
        let pop = pop.with_counts(40, 40);
        for id in SchemeId::ALL {
            let report = audit(id.scheme(), &pop, &params).unwrap();
            report.check_impossibility().unwrap();
        }
    }

    #[test]
    fn strided_grid_covers_corners() {
        let (pop, _) = scenario(0.025);
        let g = strided_grid(&pop, 11);
        assert_eq!(g.len(), 11 * 11 - 1);
        assert!(g.contains(&pop.grand()));
        assert!(g.contains(&PoolComposition::new(500, 0)));
    }
}
