//! `drcontract`: sweeps, verification and Monte Carlo runs for the
//! probability-of-call demand-response contract.
//!
//! Exit codes: 0 success, 1 validation error, 2 verification failure.

mod output;
mod scenario;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dr_contract::oracle::oracle_stage2;
use dr_contract::sweep::{sweep, SweepParam, SweepSpec};
use dr_contract::verify::{continuity_gap, run_suite, VerifyConfig, CONTINUITY_TOL, PAYOFF_TOL};
use dr_contract::{
    run_monte_carlo, stage1_optimal_report, stage2_optimal_r0, stage2_optimal_r1, CallSignal,
    GridSpec, ProfitForm,
};

use crate::scenario::Scenario;

const EXIT_VALIDATION: u8 = 1;
const EXIT_VERIFICATION: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "drcontract", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form strategies over a range of p_r or gamma, as CSV.
    Sweep(SweepArgs),
    /// Closed forms against the exhaustive-search oracle.
    Verify(VerifyArgs),
    /// Monte Carlo events over the scenario portfolio.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file; the bundled reference scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Swept parameter.
    #[arg(long, value_parser = ["p_r", "gamma"])]
    param: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    from: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    to: Option<f64>,
    /// Number of points, both ends included.
    #[arg(long)]
    steps: Option<usize>,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Seed of the random parameter draws.
    #[arg(long)]
    seed: Option<u64>,
    /// Oracle grid step in kWh.
    #[arg(long)]
    grid_step: Option<f64>,
    /// Number of random draws.
    #[arg(long, default_value_t = 500)]
    draws: usize,
    /// Check the expected-profit expression with `-b p_r` in place of
    /// `-b p p_r`.
    #[arg(long)]
    literal_profit_form: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Directory for records.csv, trials.csv and consumers.csv. Without it
    /// the per-consumer statistics go to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(common: &Common) -> Result<Scenario> {
    let s = Scenario::load(common.scenario.as_deref())?;
    let source = match &common.scenario {
        Some(p) => p.display().to_string(),
        None => "<bundled>".into(),
    };
    log::info!(
        "drcontract {} scenario {} sha256 {}",
        env!("CARGO_PKG_VERSION"),
        source,
        s.hash
    );
    Ok(s)
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_sweep(args: SweepArgs) -> Result<bool> {
    let s = load(&args.common)?;
    let spec = match &args.param {
        Some(name) => {
            let param: SweepParam = name.parse()?;
            if param == s.sweep.param {
                s.sweep
            } else {
                SweepSpec::default_for(param)
            }
        }
        None => s.sweep,
    };
    let spec = SweepSpec {
        from: args.from.unwrap_or(spec.from),
        to: args.to.unwrap_or(spec.to),
        steps: args.steps.unwrap_or(spec.steps),
        ..spec
    };
    let lead = s.lead();
    log::info!(
        "sweep {} over [{}, {}] in {} steps for consumer {}",
        spec.param,
        spec.from,
        spec.to,
        spec.steps,
        lead.id
    );
    let rows = sweep(
        &lead.params,
        s.portfolio.prices(),
        lead.call_probability,
        &spec,
    )?;
    output::write_sweep(open_out(args.out.as_deref())?, &rows)?;
    Ok(true)
}

fn cmd_verify(args: VerifyArgs) -> Result<bool> {
    let s = load(&args.common)?;
    let config = VerifyConfig {
        draws: args.draws,
        seed: args.seed.unwrap_or(s.seed),
        grid_step: args.grid_step.unwrap_or(s.grid_step),
        form: if args.literal_profit_form {
            ProfitForm::Literal
        } else {
            ProfitForm::Corrected
        },
    };
    log::info!("seed {}", config.seed);
    let report = run_suite(&config)?;
    let mut passed = report.passed();

    println!(
        "random draws: {} (seed {}, grid step {} kWh, {} expected profit)",
        report.draws,
        config.seed,
        config.grid_step,
        if args.literal_profit_form {
            "literal"
        } else {
            "corrected"
        }
    );
    let line = |name: &str, w: &dr_contract::verify::Worst| match &w.draw {
        Some(d) => println!("  max {name}: {} at {d}", output::g9(w.value)),
        None => println!("  max {name}: n/a"),
    };
    line("stage-2 payoff deviation", &report.max_payoff_deviation);
    line(
        "stage-2 consumption deviation (grid steps)",
        &report.max_consumption_deviation,
    );
    line("case-table deviation", &report.max_case_deviation);
    line("threshold continuity gap", &report.max_continuity_gap);
    for f in report.failures.iter().take(10) {
        println!("  FAIL {f}");
    }
    if report.failures.len() > 10 {
        println!("  ... {} more failures", report.failures.len() - 10);
    }

    let prices = s.portfolio.prices();
    for e in s.portfolio.entries() {
        let grid = GridSpec::covering(&e.params, config.grid_step)?;
        let stage1 = stage1_optimal_report(e.call_probability, &e.params, prices);
        let mut worst = 0.0f64;
        for r in [CallSignal::NotCalled, CallSignal::Called] {
            let closed = match r {
                CallSignal::NotCalled => {
                    stage2_optimal_r0(stage1.report.b_hat(), &e.params, prices)?
                }
                CallSignal::Called => stage2_optimal_r1(&stage1.report, &e.params, prices)?,
            };
            let brute = oracle_stage2(&stage1.report, r, &e.params, prices, &grid)?;
            worst = worst.max((closed.payoff - brute.payoff).abs());
            if closed.payoff < brute.payoff - PAYOFF_TOL {
                passed = false;
                println!(
                    "  FAIL consumer {} (r={r}): closed {} < oracle {}",
                    e.id, closed.payoff, brute.payoff
                );
            }
        }
        let gap = continuity_gap(&e.params, prices, config.form);
        println!(
            "consumer {}: stage-2 payoff deviation {} at the optimal report; threshold continuity gap {}",
            e.id,
            output::g9(worst),
            output::g9(gap)
        );
        if gap.is_nan() || gap > CONTINUITY_TOL {
            passed = false;
            println!(
                "  FAIL consumer {}: expected profit is discontinuous at the threshold (gap {})",
                e.id,
                output::g9(gap)
            );
        }
    }
    println!("{}", if passed { "PASS" } else { "FAIL" });
    Ok(passed)
}

fn cmd_simulate(args: SimulateArgs) -> Result<bool> {
    let s = load(&args.common)?;
    let seed = args.seed.unwrap_or(s.seed);
    let trials = args.trials.unwrap_or(s.trials);
    log::info!("seed {seed}, {trials} trials");
    let mc = run_monte_carlo(&s.portfolio, &s.behaviors, trials, s.reduction_target, seed)?;
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            output::write_records(open_out(Some(&dir.join("records.csv")))?, &mc.trials)?;
            output::write_trials(open_out(Some(&dir.join("trials.csv")))?, &mc.trials)?;
            output::write_consumers(open_out(Some(&dir.join("consumers.csv")))?, &mc.consumers)?;
        }
        None => output::write_consumers(open_out(None)?, &mc.consumers)?,
    }
    eprintln!(
        "seed {seed}; {trials} trials; mean reduction {} kWh; under-provisioned in {} of trials",
        output::g9(mc.mean_reduction),
        output::g9(mc.under_provisioned_fraction)
    );
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VERIFICATION),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}
