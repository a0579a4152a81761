//! Scenario files.
//!
//! A scenario is a JSON document:
//!
//! ```json
//! {
//!   "schema": 1,
//!   "name": "table2",
//!   "population": { "low": { "r": 0.02, "count": 500 }, "high": { "r": 0.025, "count": 500 } },
//!   "cost": { "V": 1000, "model": "insolvency", "b_p": 2 },
//!   "schemes": ["even_split", "proportional"],
//!   "analyses": ["prices", "stability"],
//!   "output": "markdown"
//! }
//! ```
//!
//! The insolvency model takes exactly one of `b_p` or `p`; the expected-value
//! model takes neither. `capital_multiplier`, `cascade_policy` and `output`
//! are optional.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{CostModel, CostParams, Population, RiskProfile};
use crate::pricing::SchemeId;
use crate::quantile::{bp_from_p, p_from_bp};
use crate::stability::CascadePolicy;

pub const SCHEMA_VERSION: u32 = 1;

/// Names of the bundled scenarios.
pub const BUNDLED: [&str; 3] = ["table1", "table2", "table3"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Prices,
    Stability,
    Cascade,
    Audit,
    Shapley,
}

impl Analysis {
    pub const ALL: [Analysis; 5] = [
        Analysis::Prices,
        Analysis::Stability,
        Analysis::Cascade,
        Analysis::Audit,
        Analysis::Shapley,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OutputFormat {
    #[default]
    #[serde(rename = "markdown")]
    Markdown,
    #[serde(rename = "csv")]
    Csv,
    #[serde(rename = "json-report")]
    JsonReport,
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Markdown => "markdown",
            OutputFormat::Csv => "csv",
            OutputFormat::JsonReport => "json-report",
        })
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markdown" => Ok(OutputFormat::Markdown),
            "csv" => Ok(OutputFormat::Csv),
            "json-report" => Ok(OutputFormat::JsonReport),
            other => Err(Error::validation(
                "output",
                format!("unknown format `{other}`; expected markdown, csv or json-report"),
            )),
        }
    }
}

/// How the insolvency buffer was specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BufferSpec {
    Multiplier(f64),
    Probability(f64),
    None,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: Option<String>,
    pub population: Population,
    pub params: CostParams,
    pub buffer: BufferSpec,
    pub schemes: Vec<SchemeId>,
    pub analyses: Vec<Analysis>,
    pub cascade_policy: CascadePolicy,
    pub output: Option<OutputFormat>,
}

// Wire format. Field names follow the documented schema.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RiskFile {
    r: f64,
    count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PopulationFile {
    low: RiskFile,
    high: RiskFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostFile {
    #[serde(rename = "V")]
    insured_value: f64,
    model: CostModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    capital_multiplier: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    population: PopulationFile,
    cost: CostFile,
    schemes: Vec<String>,
    analyses: Vec<Analysis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cascade_policy: Option<CascadePolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<OutputFormat>,
}

fn field_error(field: &str, err: Error) -> Error {
    match err {
        Error::Domain(msg) => Error::validation(field, msg),
        other => other,
    }
}

impl Scenario {
    /// Parses and validates a JSON scenario document.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)
            .map_err(|e| Error::validation("<document>", e.to_string()))?;
        Self::from_file(file)
    }

    /// Loads a scenario from a path, or a bundled scenario by name.
    pub fn load(source: &str) -> Result<Self> {
        if let Some(s) = Self::bundled(source) {
            return Ok(s);
        }
        let text = std::fs::read_to_string(Path::new(source)).map_err(|e| {
            Error::validation("<file>", format!("cannot read scenario `{source}`: {e}"))
        })?;
        Self::from_json(&text)
    }

    fn from_file(file: ScenarioFile) -> Result<Self> {
        if file.schema != SCHEMA_VERSION {
            return Err(Error::validation(
                "schema",
                format!("unsupported schema version {}; expected {SCHEMA_VERSION}", file.schema),
            ));
        }
        let low = RiskProfile::new(file.population.low.r, file.population.low.count);
        let high = RiskProfile::new(file.population.high.r, file.population.high.count);
        for (field, r) in [("population.low.r", low.r), ("population.high.r", high.r)] {
            if !(r.is_finite() && (0.0..0.5).contains(&r)) {
                return Err(Error::validation(field, format!("must lie in [0, 0.5), got {r}")));
            }
        }
        let population = Population::new(low, high)
            .map_err(|e| field_error("population", e))?;

        let c = &file.cost;
        let (params, buffer) = match c.model {
            CostModel::ExpectedValue => {
                if c.b_p.is_some() || c.p.is_some() {
                    return Err(Error::validation(
                        "cost",
                        "expected_value model takes neither b_p nor p",
                    ));
                }
                let params = CostParams::expected_value(c.insured_value)
                    .map_err(|e| field_error("cost.V", e))?;
                (params, BufferSpec::None)
            }
            CostModel::Insolvency => {
                let (bp, buffer) = match (c.b_p, c.p) {
                    (Some(bp), None) => (bp, BufferSpec::Multiplier(bp)),
                    (None, Some(p)) => (
                        bp_from_p(p).map_err(|e| field_error("cost.p", e))?,
                        BufferSpec::Probability(p),
                    ),
                    _ => {
                        return Err(Error::validation(
                            "cost",
                            "insolvency model needs exactly one of b_p or p",
                        ))
                    }
                };
                if !(c.insured_value.is_finite() && c.insured_value > 0.0) {
                    return Err(Error::validation("cost.V", "must be positive"));
                }
                let params = CostParams::insolvency(c.insured_value, bp)
                    .map_err(|e| field_error("cost.b_p", e))?;
                (params, buffer)
            }
        };
        let params = match c.capital_multiplier {
            Some(m) => params
                .with_capital_multiplier(m)
                .map_err(|e| field_error("cost.capital_multiplier", e))?,
            None => params,
        };

        let mut schemes = Vec::with_capacity(file.schemes.len());
        for (i, s) in file.schemes.iter().enumerate() {
            let id = s.parse::<SchemeId>().map_err(|e| match e {
                Error::Validation { constraint, .. } => {
                    Error::validation(format!("schemes[{i}]"), constraint)
                }
                other => other,
            })?;
            if !schemes.contains(&id) {
                schemes.push(id);
            }
        }
        let mut analyses: Vec<Analysis> = Vec::with_capacity(file.analyses.len());
        for a in &file.analyses {
            if !analyses.contains(a) {
                analyses.push(*a);
            }
        }

        Ok(Scenario {
            name: file.name,
            population,
            params,
            buffer,
            schemes,
            analyses,
            cascade_policy: file.cascade_policy.unwrap_or(CascadePolicy::LowRiskExodus),
            output: file.output,
        })
    }

    fn to_file(&self) -> ScenarioFile {
        let (b_p, p) = match self.buffer {
            BufferSpec::Multiplier(bp) => (Some(bp), None),
            BufferSpec::Probability(p) => (None, Some(p)),
            BufferSpec::None => (None, None),
        };
        ScenarioFile {
            schema: SCHEMA_VERSION,
            name: self.name.clone(),
            population: PopulationFile {
                low: RiskFile {
                    r: self.population.low.r,
                    count: self.population.low.count,
                },
                high: RiskFile {
                    r: self.population.high.r,
                    count: self.population.high.count,
                },
            },
            cost: CostFile {
                insured_value: self.params.insured_value,
                model: self.params.model,
                b_p,
                p,
                capital_multiplier: (self.params.capital_multiplier != 1.0)
                    .then_some(self.params.capital_multiplier),
            },
            schemes: self.schemes.iter().map(|s| s.as_str().to_string()).collect(),
            analyses: self.analyses.clone(),
            cascade_policy: Some(self.cascade_policy),
            output: self.output,
        }
    }

    /// Canonical JSON form.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("scenario serializes")
    }

    /// Insolvency probability implied by the buffer, if any.
    pub fn insolvency_probability(&self) -> Option<f64> {
        match self.buffer {
            BufferSpec::Probability(p) => Some(p),
            BufferSpec::Multiplier(bp) => p_from_bp(bp).ok(),
            BufferSpec::None => None,
        }
    }

    pub fn wants(&self, analysis: Analysis) -> bool {
        self.analyses.contains(&analysis)
    }

    /// The three worked examples: 500 low-risk members at 2% and 500
    /// high-risk members at 2.5% (tables 1 and 2) or 4% (table 3), insuring
    /// a $1,000 loss.
    pub fn bundled(name: &str) -> Option<Self> {
        let (r_high, model) = match name {
            "table1" => (0.025, CostModel::ExpectedValue),
            "table2" => (0.025, CostModel::Insolvency),
            "table3" => (0.04, CostModel::Insolvency),
            _ => return None,
        };
        let population =
            Population::new(RiskProfile::new(0.02, 500), RiskProfile::new(r_high, 500)).ok()?;
        let (params, buffer, schemes) = match model {
            CostModel::ExpectedValue => (
                CostParams::expected_value(1000.0).ok()?,
                BufferSpec::None,
                vec![SchemeId::EvenSplit, SchemeId::MaxSubsidy, SchemeId::Shapley],
            ),
            CostModel::Insolvency => (
                CostParams::insolvency(1000.0, 2.0).ok()?,
                BufferSpec::Multiplier(2.0),
                vec![SchemeId::EvenSplit, SchemeId::Proportional, SchemeId::MaxSubsidy],
            ),
        };
        Some(Scenario {
            name: Some(name.to_string()),
            population,
            params,
            buffer,
            schemes,
            analyses: vec![Analysis::Prices, Analysis::Stability, Analysis::Cascade],
            cascade_policy: CascadePolicy::LowRiskExodus,
            output: None,
        })
    }
}
