//! One-parameter sweeps over a scenario.

use serde::Serialize;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{CostParams, Population, RiskProfile};
use crate::pricing::{EvenSplit, PriceSchedule, SchemeId};
use crate::scenario::Scenario;
use crate::stability::{evensplit_condition, is_core_stable, STRICT_SLACK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepParam {
    #[serde(rename = "r_H")]
    RHigh,
    #[serde(rename = "r_L")]
    RLow,
    #[serde(rename = "N_L")]
    NLow,
    #[serde(rename = "N_H")]
    NHigh,
    #[serde(rename = "b_p")]
    Bp,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::RHigh => "r_H",
            SweepParam::RLow => "r_L",
            SweepParam::NLow => "N_L",
            SweepParam::NHigh => "N_H",
            SweepParam::Bp => "b_p",
        }
    }

    fn is_count(self) -> bool {
        matches!(self, SweepParam::NLow | SweepParam::NHigh)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r_H" => Ok(SweepParam::RHigh),
            "r_L" => Ok(SweepParam::RLow),
            "N_L" => Ok(SweepParam::NLow),
            "N_H" => Ok(SweepParam::NHigh),
            "b_p" => Ok(SweepParam::Bp),
            other => Err(Error::validation(
                "param",
                format!("unknown sweep parameter `{other}`; expected r_H, r_L, N_L, N_H or b_p"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRange {
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl SweepRange {
    /// Sample points; a zero-width range yields a single point.
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.from.is_finite() && self.to.is_finite()) {
            return Err(Error::validation("range", "bounds must be finite"));
        }
        if self.from == self.to {
            return Ok(vec![self.from]);
        }
        if self.steps < 2 {
            return Err(Error::validation("steps", "a non-degenerate range needs at least 2 steps"));
        }
        let n = self.steps - 1;
        Ok((0..=n)
            .map(|i| self.from + (self.to - self.from) * i as f64 / n as f64)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub prices: Vec<(SchemeId, PriceSchedule)>,
    pub evensplit_condition: Option<bool>,
    pub even_split_core_stable: Option<bool>,
    /// Why the row has no results, when the value left the valid domain.
    pub note: Option<String>,
}

fn apply(scenario: &Scenario, param: SweepParam, value: f64) -> Result<(Population, CostParams)> {
    let pop = &scenario.population;
    let count = || -> Result<u64> {
        if value < 0.0 || value.fract() != 0.0 {
            return Err(Error::domain(format!("count {value} must be a non-negative integer")));
        }
        Ok(value as u64)
    };
    let (low, high) = (pop.low, pop.high);
    let new_pop = match param {
        SweepParam::RHigh => Population::new(low, RiskProfile::new(value, high.count))?,
        SweepParam::RLow => Population::new(RiskProfile::new(value, low.count), high)?,
        SweepParam::NLow => Population::new(RiskProfile::new(low.r, count()?), high)?,
        SweepParam::NHigh => Population::new(low, RiskProfile::new(high.r, count()?))?,
        SweepParam::Bp => *pop,
    };
    let params = match param {
        SweepParam::Bp => scenario.params.with_bp(value)?,
        _ => scenario.params,
    };
    Ok((new_pop, params))
}

fn evaluate(scenario: &Scenario, pop: &Population, params: &CostParams) -> Result<SweepRow> {
    let grand = pop.grand();
    let mut prices = Vec::with_capacity(scenario.schemes.len());
    for &id in &scenario.schemes {
        prices.push((id, id.scheme().price(grand, pop, params)?));
    }
    let condition = (pop.low.count > 0)
        .then(|| evensplit_condition(pop, params))
        .transpose()?;
    let stable = (!grand.is_empty())
        .then(|| is_core_stable(&EvenSplit, pop, params, STRICT_SLACK).map(|r| r.stable))
        .transpose()?;
    Ok(SweepRow {
        value: f64::NAN,
        prices,
        evensplit_condition: condition,
        even_split_core_stable: stable,
        note: None,
    })
}

/// Evaluates the scenario's schemes, the even-split condition and full
/// even-split core stability at each value of `param`. Values outside the
/// valid domain produce a row with a note instead of failing the sweep.
pub fn sweep(scenario: &Scenario, param: SweepParam, range: SweepRange) -> Result<Vec<SweepRow>> {
    let mut values = range.values()?;
    if param.is_count() {
        for v in &mut values {
            *v = v.round();
        }
        values.dedup();
    }
    let mut rows = Vec::with_capacity(values.len());
    for value in values {
        let row = match apply(scenario, param, value) {
            Ok((pop, params)) => match evaluate(scenario, &pop, &params) {
                Ok(row) => SweepRow { value, ..row },
                Err(e @ (Error::Domain(_) | Error::Validation { .. })) => skipped(value, e),
                Err(e) => return Err(e),
            },
            Err(e) => skipped(value, e),
        };
        rows.push(row);
    }
    Ok(rows)
}

fn skipped(value: f64, e: Error) -> SweepRow {
    SweepRow {
        value,
        prices: Vec::new(),
        evensplit_condition: None,
        even_split_core_stable: None,
        note: Some(format!("skipped: {e}")),
    }
}

pub fn render_csv(param: SweepParam, schemes: &[SchemeId], rows: &[SweepRow]) -> String {
    let mut out = format!("{param}");
    for s in schemes {
        out.push_str(&format!(",{s}_low,{s}_high"));
    }
    out.push_str(",evensplit_condition,even_split_core_stable,note\n");
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let flag = |x: Option<bool>| x.map(|v| v.to_string()).unwrap_or_default();
    for row in rows {
        out.push_str(&row.value.to_string());
        for s in schemes {
            let p = row.prices.iter().find(|(id, _)| id == s).map(|(_, p)| *p);
            out.push_str(&format!(
                ",{},{}",
                opt(p.and_then(|p| p.low)),
                opt(p.and_then(|p| p.high))
            ));
        }
        out.push_str(&format!(
            ",{},{},{}\n",
            flag(row.evensplit_condition),
            flag(row.even_split_core_stable),
            row.note.clone().unwrap_or_default().replace(',', ";")
        ));
    }
    out
}

pub fn render_markdown(param: SweepParam, schemes: &[SchemeId], rows: &[SweepRow]) -> String {
    let mut out = format!("| {param} |");
    let mut rule = String::from("|---:|");
    for s in schemes {
        out.push_str(&format!(" {s} low | {s} high |"));
        rule.push_str("---:|---:|");
    }
    out.push_str(" condition | even split stable | note |\n");
    rule.push_str("---|---|---|\n");
    out.push_str(&rule);
    let cell = |x: Option<f64>| x.map(|v| crate::tables::dollars(v, 2)).unwrap_or_else(|| "-".into());
    let flag = |x: Option<bool>| match x {
        Some(true) => "yes",
        Some(false) => "no",
        None => "-",
    };
    for row in rows {
        out.push_str(&format!("| {} |", row.value));
        for s in schemes {
            let p = row.prices.iter().find(|(id, _)| id == s).map(|(_, p)| *p);
            out.push_str(&format!(
                " {} | {} |",
                cell(p.and_then(|p| p.low)),
                cell(p.and_then(|p| p.high))
            ));
        }
        out.push_str(&format!(
            " {} | {} | {} |\n",
            flag(row.evensplit_condition),
            flag(row.even_split_core_stable),
            row.note.as_deref().unwrap_or("")
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table2() -> Scenario {
        let mut s = Scenario::bundled("table2").unwrap();
        s.schemes = vec![SchemeId::EvenSplit];
        s
    }

    #[test]
    fn r_high_sweep_flips_inside() {
        let rows = sweep(
            &table2(),
            SweepParam::RHigh,
            SweepRange { from: 0.025, to: 0.04, steps: 16 },
        )
        .unwrap();
        let flags: Vec<bool> = rows.iter().map(|r| r.evensplit_condition.unwrap()).collect();
        assert!(flags[0]);
        assert!(!flags[flags.len() - 1]);
        let flips = flags.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(flips, 1);
        for r in &rows {
            assert_eq!(r.evensplit_condition, r.even_split_core_stable);
        }
    }

    #[test]
    fn n_high_sweep_lowers_even_price() {
        let rows = sweep(
            &table2(),
            SweepParam::NHigh,
            SweepRange { from: 100.0, to: 1000.0, steps: 10 },
        )
        .unwrap();
        let prices: Vec<f64> = rows.iter().map(|r| r.prices[0].1.low.unwrap()).collect();
        for (w, r) in prices.windows(2).zip(&rows) {
            assert!(r.evensplit_condition.unwrap());
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn zero_width_is_one_row() {
        let rows = sweep(&table2(), SweepParam::Bp, SweepRange { from: 2.0, to: 2.0, steps: 50 }).unwrap();
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn out_of_domain_rows_are_skipped() {
        let rows = sweep(
            &table2(),
            SweepParam::RHigh,
            SweepRange { from: 0.01, to: 0.03, steps: 3 },
        )
        .unwrap();
        assert!(rows[0].note.is_some());
        assert!(rows[0].prices.is_empty());
        assert!(rows[2].note.is_none());
        let csv = render_csv(SweepParam::RHigh, &[SchemeId::EvenSplit], &rows);
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn param_names() {
        for p in ["r_H", "r_L", "N_L", "N_H", "b_p"] {
            assert_eq!(p.parse::<SweepParam>().unwrap().as_str(), p);
        }
        assert!("V".parse::<SweepParam>().is_err());
    }
}
