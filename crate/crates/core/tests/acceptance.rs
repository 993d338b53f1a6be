//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use dr_contract::strategy::expected_profit_branches;
use dr_contract::sweep::{sweep, SweepParam, SweepRow, SweepSpec};
use dr_contract::verify::{run_suite, VerifyConfig};
use dr_contract::{
    payoff_no_dr, probability_threshold, run_monte_carlo, settle_event, stage2_optimal_r1,
    BehaviorModel, Behaviors, CallProbability, CallSignal, ConsumerParams, GridSpec, Portfolio,
    PortfolioEntry, Prices, ProfitForm, Regime, Report, TwoStageOracle,
};

const B: f64 = 8.0;
const GAMMA: f64 = 0.05;
const Q_MAX: f64 = 16.0;
const P: f64 = 0.26;
const P2: f64 = 0.3;
const GRID_STEP: f64 = 0.01;
const MC_SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Ctx {
    params: ConsumerParams,
    prices: Prices,
    pr_sweep: Vec<SweepRow>,
    oracle: TwoStageOracle,
    oracle_build: Duration,
}

fn inflation(p_r: f64, gamma: f64) -> f64 {
    P2 * p_r / (gamma * (1.0 - p_r))
}

fn threshold() -> Outcome {
    let t = probability_threshold(&Prices::new(P, P2).unwrap());
    outcome((t - 0.46429).abs() <= 1e-5, format!("threshold = {t:.9}"))
}

fn no_dr(ctx: &Ctx) -> Outcome {
    let v = payoff_no_dr(&ctx.params);
    outcome(
        (v - 1.6).abs() <= 1e-9,
        format!("payoff without DR = {v:.12}"),
    )
}

fn report_shape(ctx: &Ctx) -> Outcome {
    let t = probability_threshold(&ctx.prices);
    let mut worst_closed = 0.0f64;
    let mut shape_ok = true;
    for row in &ctx.pr_sweep {
        let expect_b_hat = if row.value <= t {
            B + inflation(row.value, GAMMA)
        } else {
            Q_MAX
        };
        worst_closed = worst_closed.max((row.b_hat_star - expect_b_hat).abs());
        shape_ok &= (row.q_hat_star - 2.0).abs() <= 1e-9 && (row.q_star_r1 - 2.0).abs() <= 1e-9;
    }
    let start = Instant::now();
    let mut worst_oracle = 0.0f64;
    let mut q_hat_ok = true;
    for k in 0..=10 {
        let row = &ctx.pr_sweep[k * 10];
        let s = ctx.oracle.solve(CallProbability::new(row.value).unwrap());
        worst_oracle = worst_oracle.max((s.report.b_hat() - row.b_hat_star).abs());
        q_hat_ok &= (s.report.q_hat() - row.q_hat_star).abs() <= 2.0 * GRID_STEP;
    }
    let runtime = ctx.oracle_build + start.elapsed();
    outcome(
        worst_closed <= 1e-9
            && shape_ok
            && worst_oracle <= 2.0 * GRID_STEP
            && q_hat_ok
            && runtime < Duration::from_secs(60),
        format!(
            "max |b_hat - formula| = {worst_closed:.3e}; q_hat = q_r1 = 2: {shape_ok}; \
             max |b_hat - oracle| over 11 points = {worst_oracle:.4} kWh; \
             oracle q_hat within 2 steps: {q_hat_ok}; oracle time {:.1}s",
            runtime.as_secs_f64()
        ),
    )
}

fn individual_rationality(ctx: &Ctx) -> Outcome {
    let base = 1.6;
    let mut ok = true;
    let mut min_gain_positive = f64::INFINITY;
    for row in &ctx.pr_sweep {
        let gain = row.expected_profit - base;
        if row.value == 0.0 {
            ok &= gain.abs() <= 1e-9;
        } else {
            ok &= gain > 1e-9;
            min_gain_positive = min_gain_positive.min(gain);
        }
    }
    outcome(
        ok,
        format!("equality at p_r = 0; smallest gain for p_r > 0 = {min_gain_positive:.6}"),
    )
}

fn incentive_compatibility(ctx: &Ctx) -> Outcome {
    let mut mismatches = 0;
    for row in &ctx.pr_sweep {
        let report = Report::new(row.b_hat_star, row.q_hat_star, &ctx.params).unwrap();
        let q = stage2_optimal_r1(&report, &ctx.params, &ctx.prices)
            .unwrap()
            .q_star;
        if q != row.q_hat_star {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches} of {} sweep points differ", ctx.pr_sweep.len()),
    )
}

fn asymptotic_truthfulness(ctx: &Ctx) -> Outcome {
    let mut worst = 0.0f64;
    let mut at_zero = f64::NAN;
    for row in ctx
        .pr_sweep
        .iter()
        .filter(|r| r.regime == Regime::BelowThreshold)
    {
        let gap = row.b_hat_star - B;
        worst = worst.max((gap - inflation(row.value, GAMMA)).abs());
        if row.value == 0.0 {
            at_zero = gap;
        }
    }
    let at_tenth = ctx.pr_sweep[10].b_hat_star / B - 1.0;
    outcome(
        worst <= 1e-9 && at_zero.abs() <= 1e-9,
        format!(
            "max |inflation - formula| = {worst:.3e}; inflation at p_r=0 is {at_zero:.3e}; \
             relative inflation at p_r=0.1 = {:.2}%",
            100.0 * at_tenth
        ),
    )
}

fn continuity(ctx: &Ctx) -> Outcome {
    let t = CallProbability::new(probability_threshold(&ctx.prices)).unwrap();
    let (below, above) =
        expected_profit_branches(t, &ctx.params, &ctx.prices, ProfitForm::Corrected);
    let gap = (below - above).abs();
    let mut worst = 0.0f64;
    let mut values = Vec::new();
    for p_r in [0.6, 0.8, 1.0] {
        let p_r = CallProbability::new(p_r).unwrap();
        let (_, closed) =
            expected_profit_branches(p_r, &ctx.params, &ctx.prices, ProfitForm::Corrected);
        let brute = ctx.oracle.solve(p_r).expected_profit;
        worst = worst.max((closed - brute).abs());
        values.push(format!("{:.4}", closed));
    }
    outcome(
        gap <= 1e-9 && (below - 2.38).abs() <= 1e-9 && worst <= 1e-4,
        format!(
            "branches at threshold {below:.9} / {above:.9} (gap {gap:.3e}); \
             above-threshold values {} vs oracle max dev {worst:.3e}",
            values.join(", ")
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let config = VerifyConfig {
        draws: 500,
        seed: 0,
        grid_step: GRID_STEP,
        form: ProfitForm::Corrected,
    };
    let report = run_suite(&config).unwrap();
    let elapsed = start.elapsed();
    let mut detail = format!(
        "{} draws x 2 signals; max payoff dev {:.3e}; max case dev {:.3e}; {} failures; {:.1}s",
        report.draws,
        report.max_payoff_deviation.value,
        report.max_case_deviation.value,
        report.failures.len(),
        elapsed.as_secs_f64()
    );
    if let Some(f) = report.failures.first() {
        detail.push_str(&format!("; first: {f}"));
    }
    outcome(
        report.passed()
            && report.max_payoff_deviation.value <= 1e-6
            && report.max_case_deviation.value <= 1e-9
            && elapsed < Duration::from_secs(120),
        detail,
    )
}

fn portfolio(ctx: &Ctx, ids: &[&str], p_r: f64) -> Portfolio {
    let entries = ids
        .iter()
        .map(|id| PortfolioEntry {
            id: id.to_string(),
            params: ctx.params,
            call_probability: CallProbability::new(p_r).unwrap(),
        })
        .collect();
    Portfolio::new(entries, ctx.prices).unwrap()
}

fn monte_carlo(ctx: &Ctx) -> Outcome {
    let portfolio = portfolio(ctx, &["c0"], 0.1);
    let behaviors: Behaviors = [("c0".to_string(), BehaviorModel::Rational)].into();
    let start = Instant::now();
    let mc = run_monte_carlo(&portfolio, &behaviors, 1000, 0.0, MC_SEED).unwrap();
    let stats = &mc.consumers[0];
    let se = stats.profit_std_error;
    let freq_bound = 4.0 * (0.1f64 * 0.9 / 1000.0).sqrt();
    outcome(
        (stats.mean_profit - 1.7).abs() <= 3.0 * se
            && (stats.call_frequency - 0.1).abs() <= freq_bound,
        format!(
            "seed {MC_SEED}: mean profit {:.5} (se {se:.5}); call frequency {:.3} (bound +-{freq_bound:.4}); {:.2}s",
            stats.mean_profit,
            stats.call_frequency,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn gamma_sweep(ctx: &Ctx) -> Outcome {
    let spec = SweepSpec::default_for(SweepParam::MarginalUtility);
    let rows = sweep(
        &ctx.params,
        &ctx.prices,
        CallProbability::new(0.1).unwrap(),
        &spec,
    )
    .unwrap();
    let strictly_decreasing = rows
        .windows(2)
        .all(|w| w[1].b_hat_star - B < w[0].b_hat_star - B);
    let formula_ok = rows
        .iter()
        .all(|r| ((r.b_hat_star - B) - inflation(0.1, r.value)).abs() <= 1e-9);
    let consistent = rows
        .iter()
        .all(|r| r.b_hat_star == r.q_star_r0 && r.q_hat_star == r.q_star_r1);
    let upper: Vec<&SweepRow> = rows.iter().filter(|r| r.value >= 0.0125).collect();
    let increasing = upper
        .windows(2)
        .all(|w| w[1].expected_profit > w[0].expected_profit);
    outcome(
        strictly_decreasing && formula_ok && consistent && increasing,
        format!(
            "{} points on [{}, {}]: inflation strictly decreasing {strictly_decreasing}, \
             matches formula {formula_ok}; b_hat = q_r0 and q_hat = q_r1 {consistent}; \
             profit increasing for gamma >= 0.0125 {increasing}",
            rows.len(),
            spec.from,
            spec.to
        ),
    )
}

fn gaming_punished(ctx: &Ctx) -> Outcome {
    let portfolio = portfolio(ctx, &["gamer", "truthful"], 0.1);
    let behaviors: Behaviors = [
        ("gamer".to_string(), BehaviorModel::NaiveGamer),
        ("truthful".to_string(), BehaviorModel::Truthful),
    ]
    .into();
    let reports = dr_contract::collect_reports(&portfolio, &behaviors).unwrap();
    let calls: BTreeMap<String, CallSignal> = [
        ("gamer".to_string(), CallSignal::NotCalled),
        ("truthful".to_string(), CallSignal::NotCalled),
    ]
    .into();
    let settled = settle_event(&portfolio, &reports, &calls, &behaviors).unwrap();
    let gamer = settled.records[0].profit;
    let truthful = settled.records[1].profit;
    outcome(
        (gamer + 0.48).abs() <= 1e-9 && (truthful - 1.6).abs() <= 1e-9,
        format!("naive gamer {gamer:.9} vs truthful {truthful:.9} when not called"),
    )
}

fn main() -> ExitCode {
    let params = ConsumerParams::new(B, GAMMA, Q_MAX).unwrap();
    let prices = Prices::new(P, P2).unwrap();
    let pr_sweep = sweep(
        &params,
        &prices,
        CallProbability::new(0.1).unwrap(),
        &SweepSpec::default_for(SweepParam::CallProbability),
    )
    .unwrap();
    let start = Instant::now();
    let oracle = TwoStageOracle::new(
        &params,
        &prices,
        &GridSpec::covering(&params, GRID_STEP).unwrap(),
    )
    .unwrap();
    let ctx = Ctx {
        params,
        prices,
        pr_sweep,
        oracle,
        oracle_build: start.elapsed(),
    };

    let criteria: Vec<(&str, Outcome)> = vec![
        ("threshold reproduction", threshold()),
        ("non-participation payoff", no_dr(&ctx)),
        ("report shape over p_r", report_shape(&ctx)),
        ("individual rationality", individual_rationality(&ctx)),
        (
            "incentive compatibility on q_hat",
            incentive_compatibility(&ctx),
        ),
        ("asymptotic truthfulness", asymptotic_truthfulness(&ctx)),
        ("expected-profit continuity", continuity(&ctx)),
        ("oracle equivalence", oracle_equivalence()),
        ("monte carlo consistency", monte_carlo(&ctx)),
        ("gamma sweep behavior", gamma_sweep(&ctx)),
        ("gaming punishment", gaming_punished(&ctx)),
    ];
    let mut failed = 0;
    for (i, (name, o)) in criteria.iter().enumerate() {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {verdict} {name}: {}", i + 1, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
