use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use riskpool::report::{render, render_json, run_scenario, RunOptions};
use riskpool::scenario::{Analysis, OutputFormat, Scenario};
use riskpool::stability::STRICT_SLACK;
use riskpool::sweep::{self, SweepParam, SweepRange};
use riskpool::{tables, Error};

/// Prices, stability checks and fairness audits for two-type risk pools.
#[derive(Parser, Debug)]
#[command(name = "riskpool", version, about)]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Output format; defaults to the scenario's own setting, else markdown.
    #[arg(long, global = true, value_parser = parse_format)]
    format: Option<OutputFormat>,

    /// Seed for sampled Shapley estimates.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Money a deviating type must save per person before it counts as blocking.
    #[arg(long, global = true, default_value_t = STRICT_SLACK)]
    epsilon: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every analysis listed in a scenario.
    Run {
        /// Scenario file, or one of table1, table2, table3.
        scenario: String,
    },
    /// Regenerate the three worked example tables.
    Tables,
    /// Vary one parameter and report prices and the stability verdict.
    Sweep {
        /// One of r_H, r_L, N_L, N_H, b_p.
        #[arg(long, value_parser = parse_param)]
        param: SweepParam,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long, default_value_t = 11)]
        steps: usize,
        #[arg(default_value = "table2")]
        scenario: String,
    },
    /// Efficiency, independence and incentive-alignment audits.
    Audit { scenario: String },
    /// Core stability and defection cascades.
    Stability { scenario: String },
    /// Exact and sampled Shapley prices.
    Shapley {
        scenario: String,
        #[arg(long, default_value_t = 10_000)]
        permutations: usize,
    },
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_param(s: &str) -> Result<SweepParam, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_with(source: &str, analyses: &[Analysis]) -> riskpool::Result<Scenario> {
    let mut scenario = Scenario::load(source)?;
    scenario.analyses = analyses.to_vec();
    Ok(scenario)
}

fn report(scenario: &Scenario, global: &Global, permutations: usize) -> riskpool::Result<String> {
    let options = RunOptions {
        seed: global.seed,
        epsilon: global.epsilon,
        permutations,
    };
    let report = run_scenario(scenario, &options)?;
    let text = render(&report, global.format.or(scenario.output).unwrap_or_default());
    if let Some(first) = report.invariant_violations.first() {
        print!("{text}");
        return Err(Error::Invariant(first.clone()));
    }
    Ok(text)
}

fn execute(cli: &Cli) -> riskpool::Result<String> {
    let g = &cli.global;
    let default_perms = RunOptions::default().permutations;
    match &cli.command {
        Command::Run { scenario } => report(&Scenario::load(scenario)?, g, default_perms),
        Command::Tables => {
            let t = tables::worked_tables()?;
            Ok(match g.format.unwrap_or_default() {
                OutputFormat::Markdown => tables::render_markdown(&t),
                OutputFormat::Csv => tables::render_csv(&t),
                OutputFormat::JsonReport => render_json(&t),
            })
        }
        Command::Sweep {
            param,
            from,
            to,
            steps,
            scenario,
        } => {
            let scenario = Scenario::load(scenario)?;
            let range = SweepRange {
                from: *from,
                to: *to,
                steps: *steps,
            };
            let rows = sweep::sweep(&scenario, *param, range)?;
            Ok(match g.format.unwrap_or(OutputFormat::Csv) {
                OutputFormat::Markdown => sweep::render_markdown(*param, &scenario.schemes, &rows),
                OutputFormat::Csv => sweep::render_csv(*param, &scenario.schemes, &rows),
                OutputFormat::JsonReport => render_json(&rows),
            })
        }
        Command::Audit { scenario } => report(&load_with(scenario, &[Analysis::Audit])?, g, default_perms),
        Command::Stability { scenario } => report(
            &load_with(scenario, &[Analysis::Stability, Analysis::Cascade])?,
            g,
            default_perms,
        ),
        Command::Shapley {
            scenario,
            permutations,
        } => report(&load_with(scenario, &[Analysis::Shapley])?, g, *permutations),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
