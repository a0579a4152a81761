//! Regenerates the three worked example tables from first principles.
//!
//! Each table compares two separate homogeneous pools against one pooled
//! coalition under two pricing rules, for 500 low-risk (2%) and 500 high-risk
//! members insuring a $1,000 loss. Per-person prices are shown in cents and
//! totals in whole dollars, both with banker's rounding. Each row also carries
//! the reference figures of the original worked example; where a recomputed
//! total rounds differently, a note records both values.

use serde::Serialize;

use crate::error::Result;
use crate::model::{cost, CostParams, PoolComposition};
use crate::numeric::round_half_even;
use crate::pricing::{even_split, proportional, shapley_exact, PriceSchedule};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Reference {
    pub total: f64,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub label: String,
    pub total: f64,
    pub low: f64,
    pub high: f64,
    pub reference: Reference,
}

impl TableRow {
    pub fn rounded_total(&self) -> f64 {
        round_half_even(self.total, 0)
    }

    pub fn rounded_low(&self) -> f64 {
        round_half_even(self.low, 2)
    }

    pub fn rounded_high(&self) -> f64 {
        round_half_even(self.high, 2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkedTable {
    pub number: u8,
    pub scenario: String,
    pub caption: String,
    pub rows: Vec<TableRow>,
    pub notes: Vec<String>,
}

const SEPARATE: &str = "Separate pools";
const EVEN: &str = "Pooled: even-split pricing";
const PROPORTIONAL: &str = "Pooled: proportional pricing";

fn references(number: u8) -> [Reference; 3] {
    let r = |total, low, high| Reference { total, low, high };
    match number {
        1 => [r(22_500.0, 20.0, 25.0), r(22_500.0, 22.5, 22.5), r(22_500.0, 20.0, 25.0)],
        2 => [r(35_741.0, 32.52, 38.96), r(31_878.0, 31.88, 31.88), r(31_878.0, 28.36, 35.40)],
        _ => [r(45_024.0, 32.52, 57.53), r(40_770.0, 40.77, 40.77), r(40_770.0, 27.28, 54.26)],
    }
}

fn both(p: PriceSchedule) -> (f64, f64) {
    (p.low.unwrap_or(f64::NAN), p.high.unwrap_or(f64::NAN))
}

/// Builds one table from its bundled scenario.
pub fn worked_table(number: u8) -> Result<WorkedTable> {
    let name = format!("table{number}");
    let scenario = Scenario::bundled(&name)
        .ok_or_else(|| crate::error::Error::domain(format!("no worked table {number}")))?;
    let pop = &scenario.population;
    let params: &CostParams = &scenario.params;
    let grand = pop.grand();
    let low_pool = PoolComposition::new(pop.low.count, 0);
    let high_pool = PoolComposition::new(0, pop.high.count);

    let low_cost = cost(low_pool, pop, params)?;
    let high_cost = cost(high_pool, pop, params)?;
    let pooled = cost(grand, pop, params)?;

    let (even_low, even_high) = both(even_split(grand, pop, params)?);
    // Under the linear expected-value cost, each member's Shapley value is
    // exactly its own expected loss, which is what the proportional row shows.
    let fair = if number == 1 {
        shapley_exact(grand, pop, params)?
    } else {
        proportional(grand, pop, params)?
    };
    let (fair_low, fair_high) = both(fair);

    let [ref_sep, ref_even, ref_prop] = references(number);
    let rows = vec![
        TableRow {
            label: SEPARATE.into(),
            total: low_cost + high_cost,
            low: low_cost / pop.low.count as f64,
            high: high_cost / pop.high.count as f64,
            reference: ref_sep,
        },
        TableRow {
            label: EVEN.into(),
            total: pooled,
            low: even_low,
            high: even_high,
            reference: ref_even,
        },
        TableRow {
            label: PROPORTIONAL.into(),
            total: pooled,
            low: fair_low,
            high: fair_high,
            reference: ref_prop,
        },
    ];

    let mut notes = Vec::new();
    for row in &rows {
        if row.rounded_total() != row.reference.total {
            notes.push(format!(
                "{}: total recomputes to {} from unrounded pool costs; reference figure is {}",
                row.label,
                dollars(row.total, 0),
                dollars(row.reference.total, 0)
            ));
        }
    }

    let caption = match number {
        1 => "Expected-value premiums; low risk 2%, high risk 2.5%",
        2 => "Insolvency-based premiums (b_p = 2); low risk 2%, high risk 2.5%",
        _ => "Insolvency-based premiums (b_p = 2); low risk 2%, high risk 4%",
    };
    Ok(WorkedTable {
        number,
        scenario: name,
        caption: caption.into(),
        rows,
        notes,
    })
}

pub fn worked_tables() -> Result<Vec<WorkedTable>> {
    (1..=3).map(worked_table).collect()
}

/// `$12,345` or `$32.52`, banker's-rounded to `decimals` places.
pub fn dollars(x: f64, decimals: i32) -> String {
    let v = round_half_even(x, decimals);
    let sign = if v < 0.0 { "-" } else { "" };
    let text = format!("{:.*}", decimals.max(0) as usize, v.abs());
    let (int, frac) = match text.split_once('.') {
        Some((i, f)) => (i.to_string(), Some(f.to_string())),
        None => (text.clone(), None),
    };
    let mut grouped = String::new();
    for (i, ch) in int.chars().enumerate() {
        if i > 0 && (int.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(ch);
    }
    match frac {
        Some(f) => format!("{sign}${grouped}.{f}"),
        None => format!("{sign}${grouped}"),
    }
}

pub fn render_markdown(tables: &[WorkedTable]) -> String {
    let mut out = String::new();
    for t in tables {
        out.push_str(&format!("## Table {}: {}\n\n", t.number, t.caption));
        out.push_str("| | Total | Low risk | High risk |\n|---|---:|---:|---:|\n");
        for row in &t.rows {
            out.push_str(&format!(
                "| {} | {} | {} | {} |\n",
                row.label,
                dollars(row.total, 0),
                dollars(row.low, 2),
                dollars(row.high, 2)
            ));
        }
        for note in &t.notes {
            out.push_str(&format!("\nNote: {note}\n"));
        }
        out.push('\n');
    }
    out
}

pub fn render_csv(tables: &[WorkedTable]) -> String {
    let mut out = String::from(
        "table,row,total,low,high,total_raw,low_raw,high_raw,reference_total,reference_low,reference_high\n",
    );
    for t in tables {
        for row in &t.rows {
            out.push_str(&format!(
                "{},{},{:.0},{:.2},{:.2},{},{},{},{},{},{}\n",
                t.number,
                row.label,
                row.rounded_total(),
                row.rounded_low(),
                row.rounded_high(),
                row.total,
                row.low,
                row.high,
                row.reference.total,
                row.reference.low,
                row.reference.high
            ));
        }
    }
    out
}
