//! Domain types and the pool cost functions.
//!
//! Members of a risk class are interchangeable, so a pool is fully described
//! by how many members of each class it holds: a [`PoolComposition`].
//!
//! Two cost models are supported. Under the expected-value model the pool
//! collects exactly its expected loss. Under the insolvency model it collects
//! the normal-approximation quantile `mu + b_p * sigma` of total claims, where
//! claims are a sum of independent Bernoulli losses of size `V`:
//!
//! ```text
//! cost(n_L, n_H) = V * (r_L n_L + r_H n_H + b_p * sqrt(n_L R_L + n_H R_H)),  R = r (1 - r)
//! ```

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// One of the two risk classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskClass {
    Low,
    High,
}

impl RiskClass {
    pub const ALL: [RiskClass; 2] = [RiskClass::Low, RiskClass::High];

    pub fn other(self) -> RiskClass {
        match self {
            RiskClass::Low => RiskClass::High,
            RiskClass::High => RiskClass::Low,
        }
    }
}

impl fmt::Display for RiskClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RiskClass::Low => f.write_str("low"),
            RiskClass::High => f.write_str("high"),
        }
    }
}

/// A risk class: per-period loss probability and head count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskProfile {
    pub r: f64,
    pub count: u64,
}

impl RiskProfile {
    pub fn new(r: f64, count: u64) -> Self {
        Self { r, count }
    }

    /// `r (1 - r)`, the per-member claim variance in units of `V^2`.
    pub fn variance_factor(&self) -> f64 {
        variance_factor(self.r)
    }
}

/// `R = r (1 - r)`.
pub fn variance_factor(r: f64) -> f64 {
    r * (1.0 - r)
}

/// How strictly a [`Population`] validates its risk levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMode {
    /// `0 <= r_L < r_H < 0.5`.
    #[default]
    Strict,
    /// Any `0 <= r < 1`, in any order. Used by the audits, which probe limits
    /// such as `r_H -> 0` with `r_L` held fixed.
    Probe,
}

/// The two risk classes that make up the grand coalition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Population {
    pub low: RiskProfile,
    pub high: RiskProfile,
    #[serde(skip)]
    mode: ValidationMode,
}

impl Population {
    /// Builds a population under strict validation.
    pub fn new(low: RiskProfile, high: RiskProfile) -> Result<Self> {
        Self::with_mode(low, high, ValidationMode::Strict)
    }

    /// Builds a population under probe validation.
    pub fn probe(low: RiskProfile, high: RiskProfile) -> Result<Self> {
        Self::with_mode(low, high, ValidationMode::Probe)
    }

    pub fn with_mode(low: RiskProfile, high: RiskProfile, mode: ValidationMode) -> Result<Self> {
        let pop = Self { low, high, mode };
        pop.validate()?;
        Ok(pop)
    }

    pub fn mode(&self) -> ValidationMode {
        self.mode
    }

    /// Re-validates after a field was edited in place.
    pub fn validate(&self) -> Result<()> {
        let upper = match self.mode {
            ValidationMode::Strict => 0.5,
            ValidationMode::Probe => 1.0,
        };
        for (class, profile) in [(RiskClass::Low, &self.low), (RiskClass::High, &self.high)] {
            if !profile.r.is_finite() || profile.r < 0.0 || profile.r >= upper {
                return Err(Error::domain(format!(
                    "{class} risk r = {} must lie in [0, {upper})",
                    profile.r
                )));
            }
        }
        if self.mode == ValidationMode::Strict && self.low.r >= self.high.r {
            return Err(Error::domain(format!(
                "strict mode requires r_L < r_H, got r_L = {} and r_H = {}",
                self.low.r, self.high.r
            )));
        }
        Ok(())
    }

    /// Copy with the same counts and mode but different risk levels.
    pub fn with_risks(&self, r_low: f64, r_high: f64) -> Result<Self> {
        Self::with_mode(
            RiskProfile::new(r_low, self.low.count),
            RiskProfile::new(r_high, self.high.count),
            self.mode,
        )
    }

    /// Copy with the same risk levels but different counts.
    pub fn with_counts(&self, n_low: u64, n_high: u64) -> Self {
        Self {
            low: RiskProfile::new(self.low.r, n_low),
            high: RiskProfile::new(self.high.r, n_high),
            mode: self.mode,
        }
    }

    /// Same data, probe-mode validation.
    pub fn relaxed(&self) -> Self {
        Self {
            mode: ValidationMode::Probe,
            ..*self
        }
    }

    pub fn profile(&self, class: RiskClass) -> &RiskProfile {
        match class {
            RiskClass::Low => &self.low,
            RiskClass::High => &self.high,
        }
    }

    /// The grand coalition `pi(N_L, N_H)`.
    pub fn grand(&self) -> PoolComposition {
        PoolComposition::new(self.low.count, self.high.count)
    }

    pub fn total(&self) -> u64 {
        self.low.count + self.high.count
    }

    /// Checks that `comp` fits inside this population.
    pub fn check(&self, comp: PoolComposition) -> Result<()> {
        if comp.n_low > self.low.count || comp.n_high > self.high.count {
            return Err(Error::domain(format!(
                "composition {comp} exceeds population ({}, {})",
                self.low.count, self.high.count
            )));
        }
        Ok(())
    }

    /// Every composition `(n_L, n_H)` other than `(0, 0)`.
    pub fn compositions(&self) -> impl Iterator<Item = PoolComposition> + '_ {
        (0..=self.low.count)
            .flat_map(move |l| (0..=self.high.count).map(move |h| PoolComposition::new(l, h)))
            .filter(|c| !c.is_empty())
    }
}

/// A coalition `pi(n_L, n_H)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PoolComposition {
    pub n_low: u64,
    pub n_high: u64,
}

impl PoolComposition {
    pub const EMPTY: PoolComposition = PoolComposition { n_low: 0, n_high: 0 };

    pub fn new(n_low: u64, n_high: u64) -> Self {
        Self { n_low, n_high }
    }

    pub fn count(&self, class: RiskClass) -> u64 {
        match class {
            RiskClass::Low => self.n_low,
            RiskClass::High => self.n_high,
        }
    }

    pub fn size(&self) -> u64 {
        self.n_low + self.n_high
    }

    pub fn is_empty(&self) -> bool {
        self.size() == 0
    }

    /// Adds one member of `class`.
    pub fn plus(&self, class: RiskClass) -> Self {
        match class {
            RiskClass::Low => Self::new(self.n_low + 1, self.n_high),
            RiskClass::High => Self::new(self.n_low, self.n_high + 1),
        }
    }

    /// Componentwise difference; `None` if `other` is not contained in `self`.
    pub fn minus(&self, other: PoolComposition) -> Option<Self> {
        Some(Self::new(
            self.n_low.checked_sub(other.n_low)?,
            self.n_high.checked_sub(other.n_high)?,
        ))
    }

    /// Componentwise `<=`.
    pub fn is_within(&self, other: PoolComposition) -> bool {
        self.n_low <= other.n_low && self.n_high <= other.n_high
    }
}

impl fmt::Display for PoolComposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.n_low, self.n_high)
    }
}

/// Which premium principle sets the pool's total cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostModel {
    ExpectedValue,
    Insolvency,
}

impl fmt::Display for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostModel::ExpectedValue => f.write_str("expected_value"),
            CostModel::Insolvency => f.write_str("insolvency"),
        }
    }
}

/// Parameters of the cost function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Insured value `V` of the single loss.
    pub insured_value: f64,
    /// Insolvency multiplier `b_p`; ignored by the expected-value model.
    pub bp: f64,
    pub model: CostModel,
    /// Extra factor on `b_p` for insurers that want compensation for
    /// holding capital. Defaults to 1.
    pub capital_multiplier: f64,
}

impl CostParams {
    pub fn insolvency(insured_value: f64, bp: f64) -> Result<Self> {
        let params = Self {
            insured_value,
            bp,
            model: CostModel::Insolvency,
            capital_multiplier: 1.0,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn expected_value(insured_value: f64) -> Result<Self> {
        let params = Self {
            insured_value,
            bp: 0.0,
            model: CostModel::ExpectedValue,
            capital_multiplier: 1.0,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_capital_multiplier(mut self, multiplier: f64) -> Result<Self> {
        self.capital_multiplier = multiplier;
        self.validate()?;
        Ok(self)
    }

    pub fn with_bp(mut self, bp: f64) -> Result<Self> {
        self.bp = bp;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.insured_value.is_finite() && self.insured_value > 0.0) {
            return Err(Error::domain(format!(
                "insured value V = {} must be positive",
                self.insured_value
            )));
        }
        if self.model == CostModel::Insolvency {
            if !(self.bp.is_finite() && self.bp > 0.0) {
                return Err(Error::domain(format!("b_p = {} must be positive", self.bp)));
            }
            if !(self.capital_multiplier.is_finite() && self.capital_multiplier > 0.0) {
                return Err(Error::domain(format!(
                    "capital multiplier {} must be positive",
                    self.capital_multiplier
                )));
            }
        }
        Ok(())
    }

    /// Coefficient on the standard deviation, zero for the expected-value model.
    pub fn buffer(&self) -> f64 {
        match self.model {
            CostModel::ExpectedValue => 0.0,
            CostModel::Insolvency => self.bp * self.capital_multiplier,
        }
    }
}

/// Total premium the pool must collect. `cost(0, 0) = 0`.
pub fn cost(comp: PoolComposition, pop: &Population, params: &CostParams) -> Result<f64> {
    pop.check(comp)?;
    Ok(cost_unchecked(comp.n_low, comp.n_high, pop, params))
}

/// [`cost`] without the population bound check, for inner loops whose
/// indices are already in range.
#[inline]
pub fn cost_unchecked(n_low: u64, n_high: u64, pop: &Population, params: &CostParams) -> f64 {
    let (nl, nh) = (n_low as f64, n_high as f64);
    let mean = pop.low.r * nl + pop.high.r * nh;
    let buffer = params.buffer();
    let spread = if buffer == 0.0 {
        0.0
    } else {
        buffer * (nl * pop.low.variance_factor() + nh * pop.high.variance_factor()).sqrt()
    };
    params.insured_value * (mean + spread)
}

/// Per-person price of a homogeneous pool of `n` members of `class`.
pub fn standalone_price(class: RiskClass, n: u64, pop: &Population, params: &CostParams) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain(format!("empty homogeneous {class} pool has no price")));
    }
    let comp = match class {
        RiskClass::Low => PoolComposition::new(n, 0),
        RiskClass::High => PoolComposition::new(0, n),
    };
    Ok(cost(comp, pop, params)? / n as f64)
}

/// `cost(comp + one member of class) - cost(comp)`.
pub fn marginal_cost(
    comp: PoolComposition,
    class: RiskClass,
    pop: &Population,
    params: &CostParams,
) -> Result<f64> {
    let grown = comp.plus(class);
    pop.check(grown).map_err(|_| {
        Error::domain(format!(
            "adding a {class} member to {comp} overflows the population"
        ))
    })?;
    Ok(marginal_unchecked(comp.n_low, comp.n_high, class, pop, params))
}

/// Marginal cost without bounds checks. The square-root difference is
/// evaluated as `R / (sqrt(s + R) + sqrt(s))` so that small increments on
/// large pools do not cancel.
#[inline]
pub fn marginal_unchecked(
    n_low: u64,
    n_high: u64,
    class: RiskClass,
    pop: &Population,
    params: &CostParams,
) -> f64 {
    let profile = pop.profile(class);
    let buffer = params.buffer();
    let spread = if buffer == 0.0 {
        0.0
    } else {
        let s = n_low as f64 * pop.low.variance_factor() + n_high as f64 * pop.high.variance_factor();
        let added = profile.variance_factor();
        let denom = (s + added).sqrt() + s.sqrt();
        if denom == 0.0 {
            0.0
        } else {
            buffer * added / denom
        }
    };
    params.insured_value * (profile.r + spread)
}
