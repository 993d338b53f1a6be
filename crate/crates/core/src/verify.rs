//! Randomized consistency checks of the closed forms against the oracle.
//!
//! Each draw picks prices, consumer parameters and a report uniformly from
//! fixed ranges, then checks for both call signals:
//!
//! - the closed-form Stage-2 payoff is at least the oracle payoff minus
//!   [`PAYOFF_TOL`], and the two consumptions are within two grid steps;
//! - the best feasible case of the KKT table equals the oracle payoff within
//!   [`CASE_TOL`];
//! - the closed-form strategy label belongs to a best feasible case.
//!
//! Per draw it also checks that the two expected-profit branches meet at
//! the probability threshold within [`CONTINUITY_TOL`].

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::contract::{CallProbability, CallSignal, ConsumerParams, Prices, Report};
use crate::error::Result;
use crate::oracle::{kkt_case_payoffs, oracle_stage2, GridSpec, DEFAULT_GRID_STEP};
use crate::strategy::{
    expected_profit_branches, probability_threshold, stage2_optimal_r0, stage2_optimal_r1,
    ProfitForm, Stage2Solution,
};

pub const PAYOFF_TOL: f64 = 1e-6;
pub const CASE_TOL: f64 = 1e-9;
pub const CONTINUITY_TOL: f64 = 1e-9;
/// Consumption agreement, in grid steps.
pub const Q_STEPS_TOL: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub draws: usize,
    pub seed: u64,
    pub grid_step: f64,
    pub form: ProfitForm,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            draws: 500,
            seed: 0,
            grid_step: DEFAULT_GRID_STEP,
            form: ProfitForm::Corrected,
        }
    }
}

/// One random instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draw {
    pub index: usize,
    pub prices: Prices,
    pub params: ConsumerParams,
    pub report: Report,
}

impl fmt::Display for Draw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "draw {}: p={} p2={} b={} gamma={} q_max={} b_hat={} q_hat={}",
            self.index,
            self.prices.energy(),
            self.prices.incentive(),
            self.params.baseline(),
            self.params.marginal_utility(),
            self.params.max_consumption(),
            self.report.b_hat(),
            self.report.q_hat()
        )
    }
}

/// Draw `index` of the suite seeded with `seed`. Ranges: `b` in [1, 20],
/// `gamma` in [0.01, 0.2], `p` in [0.05, 0.5], `p2` in [p, 2p],
/// `q_max = b + p/gamma + U[1, 10]`, `b_hat` in [0, q_max], `q_hat` in
/// [0, b_hat].
pub fn draw(seed: u64, index: usize) -> Result<Draw> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let b = rng.gen_range(1.0..=20.0);
    let g = rng.gen_range(0.01..=0.2);
    let p = rng.gen_range(0.05..=0.5);
    let p2 = rng.gen_range(p..=2.0 * p);
    let q_max = b + p / g + rng.gen_range(1.0..=10.0);
    let b_hat = rng.gen_range(0.0..=q_max);
    let q_hat = rng.gen_range(0.0..=b_hat);
    let params = ConsumerParams::new(b, g, q_max)?;
    Ok(Draw {
        index,
        prices: Prices::new(p, p2)?,
        params,
        report: Report::new(b_hat, q_hat, &params)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Stage2Payoff,
    Stage2Consumption,
    CaseTable,
    CaseLabel,
    Continuity,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Check::Stage2Payoff => "stage-2 payoff vs oracle",
            Check::Stage2Consumption => "stage-2 consumption vs oracle",
            Check::CaseTable => "case table vs oracle",
            Check::CaseLabel => "strategy label vs case table",
            Check::Continuity => "expected-profit continuity at threshold",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub check: Check,
    pub draw: Draw,
    pub signal: Option<CallSignal>,
    pub detail: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.signal {
            Some(r) => write!(
                f,
                "{} (r={}): {}; {}",
                self.check, r, self.detail, self.draw
            ),
            None => write!(f, "{}: {}; {}", self.check, self.detail, self.draw),
        }
    }
}

/// Largest observed deviation of one check and the draw that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Worst {
    pub value: f64,
    pub draw: Option<Draw>,
}

impl Worst {
    fn none() -> Self {
        Worst {
            value: 0.0,
            draw: None,
        }
    }

    fn merge(self, other: Worst) -> Worst {
        if self.draw.is_none() || other.value > self.value {
            other
        } else {
            self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub config: VerifyConfig,
    pub draws: usize,
    /// `|closed - oracle|` Stage-2 payoff.
    pub max_payoff_deviation: Worst,
    /// `|q_closed - q_oracle|` in grid steps.
    pub max_consumption_deviation: Worst,
    /// `|best case - oracle|` payoff.
    pub max_case_deviation: Worst,
    /// `|below - above|` at the threshold.
    pub max_continuity_gap: Worst,
    pub failures: Vec<Failure>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

struct DrawOutcome {
    payoff: Worst,
    consumption: Worst,
    case: Worst,
    continuity: Worst,
    failures: Vec<Failure>,
}

/// Checks Stage 2 at one report for one signal.
pub fn check_stage2(
    d: &Draw,
    r: CallSignal,
    grid_step: f64,
) -> Result<(f64, f64, f64, Vec<Failure>)> {
    let Draw {
        params,
        prices,
        report,
        ..
    } = *d;
    let closed: Stage2Solution = match r {
        CallSignal::NotCalled => stage2_optimal_r0(report.b_hat(), &params, &prices)?,
        CallSignal::Called => stage2_optimal_r1(&report, &params, &prices)?,
    };
    let grid = GridSpec::covering(&params, grid_step)?;
    let oracle = oracle_stage2(&report, r, &params, &prices, &grid)?;
    let cases = kkt_case_payoffs(&report, &params, &prices);
    let best_case = cases
        .iter()
        .filter(|c| c.feasible && c.case.signal() == r)
        .map(|c| c.payoff)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut failures = Vec::new();
    let mut fail = |check, detail: String| {
        failures.push(Failure {
            check,
            draw: *d,
            signal: Some(r),
            detail,
        })
    };
    let payoff_dev = (closed.payoff - oracle.payoff).abs();
    if closed.payoff < oracle.payoff - PAYOFF_TOL {
        fail(
            Check::Stage2Payoff,
            format!("closed {} < oracle {}", closed.payoff, oracle.payoff),
        );
    }
    let q_dev = (closed.q_star - oracle.q_star).abs() / grid_step;
    if q_dev > Q_STEPS_TOL {
        fail(
            Check::Stage2Consumption,
            format!(
                "closed q = {} vs oracle q = {}",
                closed.q_star, oracle.q_star
            ),
        );
    }
    let case_dev = (best_case - oracle.payoff).abs();
    if case_dev.is_nan() || case_dev > CASE_TOL {
        fail(
            Check::CaseTable,
            format!("best case {} vs oracle {}", best_case, oracle.payoff),
        );
    }
    let label = closed.label.expect("closed forms are labelled");
    let label_ok = cases.iter().any(|c| {
        c.feasible
            && c.case.signal() == r
            && (c.payoff - best_case).abs() <= CASE_TOL
            && c.case.strategies().contains(&label)
    });
    if !label_ok {
        fail(
            Check::CaseLabel,
            format!("label {label} matches no best feasible case"),
        );
    }
    Ok((payoff_dev, q_dev, case_dev, failures))
}

/// Gap between the two expected-profit branches at the threshold.
pub fn continuity_gap(params: &ConsumerParams, prices: &Prices, form: ProfitForm) -> f64 {
    let threshold =
        CallProbability::new(probability_threshold(prices)).expect("threshold lies in [0, 1]");
    let (below, above) = expected_profit_branches(threshold, params, prices, form);
    (below - above).abs()
}

fn check_draw(d: Draw, config: &VerifyConfig) -> Result<DrawOutcome> {
    let mut out = DrawOutcome {
        payoff: Worst::none(),
        consumption: Worst::none(),
        case: Worst::none(),
        continuity: Worst::none(),
        failures: Vec::new(),
    };
    let at = |value| Worst {
        value,
        draw: Some(d),
    };
    for r in [CallSignal::NotCalled, CallSignal::Called] {
        let (payoff, q, case, failures) = check_stage2(&d, r, config.grid_step)?;
        out.payoff = out.payoff.merge(at(payoff));
        out.consumption = out.consumption.merge(at(q));
        out.case = out.case.merge(at(case));
        out.failures.extend(failures);
    }
    let gap = continuity_gap(&d.params, &d.prices, config.form);
    out.continuity = at(gap);
    if gap.is_nan() || gap > CONTINUITY_TOL {
        out.failures.push(Failure {
            check: Check::Continuity,
            draw: d,
            signal: None,
            detail: format!(
                "branches differ by {gap} at p_r = {}",
                probability_threshold(&d.prices)
            ),
        });
    }
    Ok(out)
}

/// Runs the suite. Draws are independent and may be checked in parallel;
/// results are merged in draw order.
pub fn run_suite(config: &VerifyConfig) -> Result<VerifyReport> {
    GridSpec::new(0.0, 1.0, config.grid_step)?;
    let outcomes: Vec<DrawOutcome> = (0..config.draws)
        .into_par_iter()
        .map(|i| check_draw(draw(config.seed, i)?, config))
        .collect::<Result<_>>()?;
    let mut report = VerifyReport {
        config: *config,
        draws: config.draws,
        max_payoff_deviation: Worst::none(),
        max_consumption_deviation: Worst::none(),
        max_case_deviation: Worst::none(),
        max_continuity_gap: Worst::none(),
        failures: Vec::new(),
    };
    for o in outcomes {
        report.max_payoff_deviation = report.max_payoff_deviation.merge(o.payoff);
        report.max_consumption_deviation = report.max_consumption_deviation.merge(o.consumption);
        report.max_case_deviation = report.max_case_deviation.merge(o.case);
        report.max_continuity_gap = report.max_continuity_gap.merge(o.continuity);
        report.failures.extend(o.failures);
    }
    Ok(report)
}
