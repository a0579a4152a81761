//! Running a scenario and rendering the results.

use serde::Serialize;

use crate::audit::{audit, AuditReport};
use crate::error::{Error, Result};
use crate::model::{cost, CostModel, PoolComposition};
use crate::pricing::{shapley_exact, shapley_sampled, PriceSchedule, SampledShapley, SchemeId};
use crate::scenario::{Analysis, OutputFormat, Scenario};
use crate::stability::{cascade, evensplit_condition, is_core_stable, CascadeTrace, StabilityReport};
use crate::tables::dollars;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    pub epsilon: f64,
    pub permutations: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            epsilon: crate::stability::STRICT_SLACK,
            permutations: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeparatePools {
    pub low_total: f64,
    pub low_price: Option<f64>,
    pub high_total: f64,
    pub high_price: Option<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemePrices {
    pub scheme: SchemeId,
    pub prices: PriceSchedule,
    pub collected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeStability {
    pub scheme: SchemeId,
    pub report: StabilityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeCascade {
    pub scheme: SchemeId,
    pub trace: CascadeTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapleySummary {
    pub exact: PriceSchedule,
    pub sampled: SampledShapley,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub schema: u32,
    pub name: Option<String>,
    pub model: CostModel,
    pub insured_value: f64,
    pub bp: Option<f64>,
    pub insolvency_probability: Option<f64>,
    pub n_low: u64,
    pub n_high: u64,
    pub r_low: f64,
    pub r_high: f64,
    pub separate: SeparatePools,
    pub pooled_total: f64,
    pub prices: Vec<SchemePrices>,
    pub evensplit_condition: Option<bool>,
    pub stability: Vec<SchemeStability>,
    pub cascades: Vec<SchemeCascade>,
    pub audits: Vec<AuditReport>,
    pub shapley: Option<ShapleySummary>,
    /// Forbidden audit patterns that were observed; non-empty means a bug.
    pub invariant_violations: Vec<String>,
}

/// Runs every analysis the scenario asks for.
pub fn run_scenario(scenario: &Scenario, options: &RunOptions) -> Result<ScenarioReport> {
    let pop = &scenario.population;
    let params = &scenario.params;
    let grand = pop.grand();
    if grand.is_empty() {
        return Err(Error::validation("population", "the population is empty"));
    }
    let low_total = cost(PoolComposition::new(pop.low.count, 0), pop, params)?;
    let high_total = cost(PoolComposition::new(0, pop.high.count), pop, params)?;
    let per = |total: f64, n: u64| (n > 0).then(|| total / n as f64);

    let mut report = ScenarioReport {
        schema: crate::scenario::SCHEMA_VERSION,
        name: scenario.name.clone(),
        model: params.model,
        insured_value: params.insured_value,
        bp: (params.model == CostModel::Insolvency).then_some(params.bp),
        insolvency_probability: scenario.insolvency_probability(),
        n_low: pop.low.count,
        n_high: pop.high.count,
        r_low: pop.low.r,
        r_high: pop.high.r,
        separate: SeparatePools {
            low_total,
            low_price: per(low_total, pop.low.count),
            high_total,
            high_price: per(high_total, pop.high.count),
            total: low_total + high_total,
        },
        pooled_total: cost(grand, pop, params)?,
        prices: Vec::new(),
        evensplit_condition: None,
        stability: Vec::new(),
        cascades: Vec::new(),
        audits: Vec::new(),
        shapley: None,
        invariant_violations: Vec::new(),
    };

    if scenario.wants(Analysis::Prices) {
        for &id in &scenario.schemes {
            let prices = id.scheme().price(grand, pop, params)?;
            report.prices.push(SchemePrices {
                scheme: id,
                collected: prices.collected(grand),
                prices,
            });
        }
    }
    if scenario.wants(Analysis::Stability) {
        if pop.low.count > 0 {
            report.evensplit_condition = Some(evensplit_condition(pop, params)?);
        }
        for &id in &scenario.schemes {
            report.stability.push(SchemeStability {
                scheme: id,
                report: is_core_stable(id.scheme(), pop, params, options.epsilon)?,
            });
        }
    }
    if scenario.wants(Analysis::Cascade) {
        for &id in &scenario.schemes {
            report.cascades.push(SchemeCascade {
                scheme: id,
                trace: cascade(id.scheme(), pop, params, scenario.cascade_policy)?,
            });
        }
    }
    if scenario.wants(Analysis::Audit) {
        for &id in &scenario.schemes {
            let a = audit(id.scheme(), pop, params)?;
            if let Err(e) = a.check_impossibility() {
                report.invariant_violations.push(e.to_string());
            }
            report.audits.push(a);
        }
    }
    if scenario.wants(Analysis::Shapley) {
        report.shapley = Some(ShapleySummary {
            exact: shapley_exact(grand, pop, params)?,
            sampled: shapley_sampled(grand, pop, params, options.permutations, options.seed)?,
        });
    }
    Ok(report)
}

fn cents(x: Option<f64>) -> String {
    x.map(|v| dollars(v, 2)).unwrap_or_else(|| "-".into())
}

fn raw(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

pub fn render_markdown(r: &ScenarioReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# Scenario {}\n\n",
        r.name.as_deref().unwrap_or("(unnamed)")
    ));
    out.push_str(&format!(
        "Model: {}; V = {}; N_L = {} at r_L = {}; N_H = {} at r_H = {}",
        r.model,
        dollars(r.insured_value, 0),
        r.n_low,
        r.r_low,
        r.n_high,
        r.r_high
    ));
    if let Some(bp) = r.bp {
        out.push_str(&format!("; b_p = {bp}"));
    }
    if let Some(p) = r.insolvency_probability {
        out.push_str(&format!(" (insolvency probability {:.5})", p));
    }
    out.push_str("\n\n| | Total | Low risk | High risk |\n|---|---:|---:|---:|\n");
    out.push_str(&format!(
        "| Separate pools | {} | {} | {} |\n",
        dollars(r.separate.total, 0),
        cents(r.separate.low_price),
        cents(r.separate.high_price)
    ));
    for p in &r.prices {
        out.push_str(&format!(
            "| Pooled: {} | {} | {} | {} |\n",
            p.scheme,
            dollars(r.pooled_total, 0),
            cents(p.prices.low),
            cents(p.prices.high)
        ));
    }
    if !r.stability.is_empty() {
        out.push_str("\n## Core stability\n\n");
        if let Some(c) = r.evensplit_condition {
            out.push_str(&format!("Even-split condition holds: {}\n\n", yes_no(c)));
        }
        out.push_str("| Scheme | Stable | Witness | Compositions checked |\n|---|---|---|---:|\n");
        for s in &r.stability {
            out.push_str(&format!(
                "| {} | {} | {} | {} |\n",
                s.scheme,
                yes_no(s.report.stable),
                s.report
                    .blocking_witness
                    .map(|w| w.to_string())
                    .unwrap_or_else(|| "-".into()),
                s.report.compositions_checked
            ));
        }
    }
    if !r.cascades.is_empty() {
        out.push_str("\n## Defection cascades\n\n");
        for c in &r.cascades {
            out.push_str(&format!("{} ({}): ", c.scheme, c.trace.policy));
            if c.trace.steps.is_empty() {
                out.push_str("no departures\n");
                continue;
            }
            out.push_str(&format!("{} step(s)\n\n", c.trace.steps.len()));
            for s in &c.trace.steps {
                let after = s.prices_after.unwrap_or(PriceSchedule { low: None, high: None });
                out.push_str(&format!(
                    "- step {}: {} leaves, {} remains; remaining prices {} / {}\n",
                    s.step,
                    s.departing,
                    s.remaining,
                    cents(after.low),
                    cents(after.high)
                ));
            }
        }
    }
    if !r.audits.is_empty() {
        out.push_str("\n## Audits\n\n| Scheme | Efficient | Independent (low) | Independent (high) | Aligned | Stable on all probes | Limit c |\n|---|---|---|---|---|---|---:|\n");
        for a in &r.audits {
            let v = &a.verdicts;
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} |\n",
                a.scheme,
                yes_no(v.efficient),
                yes_no(v.independent_low),
                yes_no(v.independent_high),
                yes_no(v.aligned),
                yes_no(v.stable_for_all_probed_r),
                a.alignment
                    .limit_c
                    .map(|c| format!("{c:.4}"))
                    .unwrap_or_else(|| "hypothesis not met".into())
            ));
        }
        for v in &r.invariant_violations {
            out.push_str(&format!("\nINVARIANT VIOLATION: {v}\n"));
        }
    }
    if let Some(s) = &r.shapley {
        out.push_str("\n## Shapley value\n\n| | Low risk | High risk |\n|---|---:|---:|\n");
        out.push_str(&format!("| Exact | {} | {} |\n", cents(s.exact.low), cents(s.exact.high)));
        out.push_str(&format!(
            "| Sampled ({} orders) | {} ± {} | {} ± {} |\n",
            s.sampled.permutations,
            cents(s.sampled.prices.low),
            s.sampled.stderr_low.map(|e| format!("{e:.4}")).unwrap_or_default(),
            cents(s.sampled.prices.high),
            s.sampled.stderr_high.map(|e| format!("{e:.4}")).unwrap_or_default()
        ));
    }
    out
}

/// Long-form CSV: one `section,item,key,value` record per number.
pub fn render_csv(r: &ScenarioReport) -> String {
    let mut out = String::from("section,item,key,value\n");
    let mut put = |section: &str, item: &str, key: &str, value: String| {
        out.push_str(&format!("{section},{item},{key},{value}\n"));
    };
    put("separate", "pools", "total", r.separate.total.to_string());
    put("separate", "low", "price", raw(r.separate.low_price));
    put("separate", "high", "price", raw(r.separate.high_price));
    put("pooled", "grand", "total", r.pooled_total.to_string());
    for p in &r.prices {
        put("prices", p.scheme.as_str(), "low", raw(p.prices.low));
        put("prices", p.scheme.as_str(), "high", raw(p.prices.high));
        put("prices", p.scheme.as_str(), "collected", p.collected.to_string());
    }
    if let Some(c) = r.evensplit_condition {
        put("stability", "even_split", "condition", c.to_string());
    }
    for s in &r.stability {
        put("stability", s.scheme.as_str(), "stable", s.report.stable.to_string());
        if let Some(w) = s.report.blocking_witness {
            put("stability", s.scheme.as_str(), "witness_n_low", w.n_low.to_string());
            put("stability", s.scheme.as_str(), "witness_n_high", w.n_high.to_string());
        }
    }
    for c in &r.cascades {
        put("cascade", c.scheme.as_str(), "steps", c.trace.steps.len().to_string());
        for s in &c.trace.steps {
            let key = format!("step{}", s.step);
            put("cascade", c.scheme.as_str(), &format!("{key}_departing"), format!("{}:{}", s.departing.n_low, s.departing.n_high));
            let after = s.prices_after.unwrap_or(PriceSchedule { low: None, high: None });
            put("cascade", c.scheme.as_str(), &format!("{key}_after_low"), raw(after.low));
            put("cascade", c.scheme.as_str(), &format!("{key}_after_high"), raw(after.high));
        }
    }
    for a in &r.audits {
        let v = &a.verdicts;
        put("audit", &a.scheme, "efficient", v.efficient.to_string());
        put("audit", &a.scheme, "independent_low", v.independent_low.to_string());
        put("audit", &a.scheme, "independent_high", v.independent_high.to_string());
        put("audit", &a.scheme, "aligned", v.aligned.to_string());
        put("audit", &a.scheme, "stable_for_all_probed_r", v.stable_for_all_probed_r.to_string());
        put("audit", &a.scheme, "limit_c", raw(a.alignment.limit_c));
        put("audit", &a.scheme, "efficiency_residual", a.efficiency.max_abs_residual.to_string());
    }
    if let Some(s) = &r.shapley {
        put("shapley", "exact", "low", raw(s.exact.low));
        put("shapley", "exact", "high", raw(s.exact.high));
        put("shapley", "sampled", "low", raw(s.sampled.prices.low));
        put("shapley", "sampled", "high", raw(s.sampled.prices.high));
        put("shapley", "sampled", "stderr_low", raw(s.sampled.stderr_low));
        put("shapley", "sampled", "stderr_high", raw(s.sampled.stderr_high));
    }
    out
}

/// Pretty JSON of any serializable report.
pub fn render_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize")
}

pub fn render(r: &ScenarioReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Markdown => render_markdown(r),
        OutputFormat::Csv => render_csv(r),
        OutputFormat::JsonReport => render_json(r),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table2_report() {
        let s = Scenario::bundled("table2").unwrap();
        let r = run_scenario(&s, &RunOptions::default()).unwrap();
        assert!((r.separate.low_price.unwrap() - 32.52).abs() < 0.005);
        assert!((r.separate.high_price.unwrap() - 38.96).abs() < 0.005);
        let md = render_markdown(&r);
        for needle in ["$32.52", "$38.96", "$31.88", "$28.36", "$35.40", "$31,878"] {
            assert!(md.contains(needle), "missing {needle}\n{md}");
        }
        assert!(r.stability.iter().all(|s| s.report.stable));
    }

    #[test]
    fn table3_cascade_in_report() {
        let s = Scenario::bundled("table3").unwrap();
        let r = run_scenario(&s, &RunOptions::default()).unwrap();
        let even = r.cascades.iter().find(|c| c.scheme == SchemeId::EvenSplit).unwrap();
        assert_eq!(even.trace.steps.len(), 1);
        let md = render_markdown(&r);
        for needle in ["$57.53", "$40.77", "$27.28", "$54.26"] {
            assert!(md.contains(needle), "missing {needle}");
        }
    }

    #[test]
    fn table1_report() {
        let s = Scenario::bundled("table1").unwrap();
        let r = run_scenario(&s, &RunOptions::default()).unwrap();
        let md = render_markdown(&r);
        for needle in ["$20.00", "$25.00", "$22.50", "$22,500"] {
            assert!(md.contains(needle), "missing {needle}");
        }
    }

    #[test]
    fn proportional_under_expected_value_is_capability_error() {
        let mut s = Scenario::bundled("table1").unwrap();
        s.schemes = vec![SchemeId::Proportional];
        let err = run_scenario(&s, &RunOptions::default()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn json_report_carries_raw_values() {
        let s = Scenario::bundled("table2").unwrap();
        let r = run_scenario(&s, &RunOptions::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&render_json(&r)).unwrap();
        let total = v["pooled_total"].as_f64().unwrap();
        assert!((total - 31_878.166).abs() < 1e-2);
        assert!(render_csv(&r).lines().count() > 5);
    }
}
