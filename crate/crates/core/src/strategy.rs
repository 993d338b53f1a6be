//! Closed-form optimal consumer behaviour under the contract.
//!
//! Stage 2 (after the call signal is known) picks the consumption; Stage 1
//! picks the report `(b_hat, q_hat)` against the call probability. Regions
//! of the piecewise solutions touch at their boundaries; wherever more than
//! one region admits a report, every admissible candidate is scored with
//! [`stage2_profit`] and the best payoff wins, the smaller consumption on
//! exact ties.

use std::fmt;

use crate::contract::{
    payoff_no_dr, stage2_profit_unchecked, CallProbability, CallSignal, ConsumerParams, Prices,
    Report,
};
use crate::error::{ContractError, Result};

/// Stage-2 strategies when the consumer is not called.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyR0 {
    /// `b_hat <= b`: consume the true baseline.
    A,
    /// `b < b_hat <= b + p/gamma`: consume the reported baseline.
    B,
    /// `b_hat > b + p/gamma`: consume up to saturation.
    C,
}

/// Stage-2 strategies when the consumer is called.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyR1 {
    U,
    V,
    W,
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    NotCalled(StrategyR0),
    Called(StrategyR1),
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::NotCalled(s) => write!(f, "{s:?}"),
            Strategy::Called(s) => write!(f, "{s:?}"),
        }
    }
}

/// Optimal Stage-2 consumption. Closed-form solutions always carry a
/// strategy label; brute-force solutions from the oracle do not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage2Solution {
    pub q_star: f64,
    pub label: Option<Strategy>,
    pub payoff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `p_r <= p/(p + p2)`: bounded baseline inflation.
    BelowThreshold,
    /// `p_r > p/(p + p2)`: the report jumps to `q_max`.
    AboveThreshold,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::BelowThreshold => "below_threshold",
            Regime::AboveThreshold => "above_threshold",
        }
    }

    pub fn of(p_r: CallProbability, prices: &Prices) -> Regime {
        if p_r.value() <= probability_threshold(prices) {
            Regime::BelowThreshold
        } else {
            Regime::AboveThreshold
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage1Solution {
    pub report: Report,
    pub expected_profit: f64,
    pub regime: Regime,
}

/// Which reading of the above-threshold expected-profit expression to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProfitForm {
    /// `-b p p_r` term; continuous at the threshold and oracle-consistent.
    #[default]
    Corrected,
    /// `-b p_r` term exactly as printed; kept for comparison only.
    Literal,
}

/// Report baseline at which a called consumer is indifferent between
/// consuming `q_hat` and `b - p2/gamma` (the W/X boundary).
pub fn alpha_boundary(q_hat: f64, params: &ConsumerParams, prices: &Prices) -> f64 {
    let (b, g) = (params.baseline(), params.marginal_utility());
    let p2 = prices.incentive();
    g * b * b / (2.0 * p2) - g * b * q_hat / p2 - b
        + g * q_hat * q_hat / (2.0 * p2)
        + 2.0 * q_hat
        + p2 / (2.0 * g)
}

fn best_candidate(
    candidates: &[(Strategy, f64)],
    report: &Report,
    r: CallSignal,
    params: &ConsumerParams,
    prices: &Prices,
) -> Stage2Solution {
    let mut best: Option<Stage2Solution> = None;
    for &(label, q) in candidates {
        let payoff = stage2_profit_unchecked(q, report, r, params, prices);
        let better = match best {
            None => true,
            Some(cur) => payoff > cur.payoff || (payoff == cur.payoff && q < cur.q_star),
        };
        if better {
            best = Some(Stage2Solution {
                q_star: q,
                label: Some(label),
                payoff,
            });
        }
    }
    best.expect("every report lies in at least one strategy region")
}

/// Optimal consumption when not called, given the reported baseline.
pub fn stage2_optimal_r0(
    b_hat: f64,
    params: &ConsumerParams,
    prices: &Prices,
) -> Result<Stage2Solution> {
    let q_max = params.max_consumption();
    if !(0.0..=q_max).contains(&b_hat) {
        return Err(ContractError::Domain {
            what: "reported baseline b_hat",
            value: b_hat,
            domain: format!("[0, {q_max}]"),
        });
    }
    let b = params.baseline();
    let sat = params.saturation(prices);
    let mut candidates = Vec::with_capacity(3);
    if b_hat <= b {
        candidates.push((Strategy::NotCalled(StrategyR0::A), b));
    }
    if b <= b_hat && b_hat <= sat {
        candidates.push((Strategy::NotCalled(StrategyR0::B), b_hat));
    }
    if b_hat >= sat {
        candidates.push((Strategy::NotCalled(StrategyR0::C), sat.min(q_max)));
    }
    // q_hat plays no role in the not-called payment.
    let report = Report::new_unchecked(b_hat, 0.0);
    Ok(best_candidate(
        &candidates,
        &report,
        CallSignal::NotCalled,
        params,
        prices,
    ))
}

/// Optimal consumption when called, given the full report.
pub fn stage2_optimal_r1(
    report: &Report,
    params: &ConsumerParams,
    prices: &Prices,
) -> Result<Stage2Solution> {
    let (b_hat, q_hat) = (report.b_hat(), report.q_hat());
    // Reports built through `Report::new` already satisfy this; re-check
    // against these particular params.
    Report::new(b_hat, q_hat, params)?;

    let b = params.baseline();
    let g = params.marginal_utility();
    let p2 = prices.incentive();
    let one_step = (b - p2 / g).max(0.0);
    let two_step = (b - 2.0 * p2 / g).max(0.0);
    let crossover = (b - 1.5 * p2 / g).max(0.0);
    let alpha = alpha_boundary(q_hat, params, prices);

    use StrategyR1::*;
    let mut candidates = Vec::with_capacity(6);
    if q_hat >= b {
        candidates.push((Strategy::Called(U), b));
    }
    if two_step <= q_hat && q_hat <= b && b_hat >= one_step {
        candidates.push((Strategy::Called(V), q_hat));
    }
    if two_step <= q_hat && q_hat <= one_step && alpha <= b_hat && b_hat <= one_step {
        candidates.push((Strategy::Called(W), q_hat));
    }
    if two_step <= q_hat && q_hat <= one_step && b_hat <= alpha {
        candidates.push((Strategy::Called(X), one_step));
    }
    if q_hat <= two_step && b_hat <= crossover {
        candidates.push((Strategy::Called(Y), one_step));
    }
    if q_hat <= two_step && b_hat >= crossover {
        candidates.push((Strategy::Called(Z), two_step));
    }
    Ok(best_candidate(
        &candidates,
        report,
        CallSignal::Called,
        params,
        prices,
    ))
}

/// Call probability `p/(p + p2)` above which the best report is `q_max`.
pub fn probability_threshold(prices: &Prices) -> f64 {
    prices.energy() / (prices.energy() + prices.incentive())
}

fn baseline_inflation(p_r: f64, params: &ConsumerParams, prices: &Prices) -> f64 {
    p_r * prices.incentive() / (params.marginal_utility() * (1.0 - p_r))
}

/// Optimal Stage-1 report for a given call probability.
pub fn stage1_optimal_report(
    p_r: CallProbability,
    params: &ConsumerParams,
    prices: &Prices,
) -> Stage1Solution {
    let regime = Regime::of(p_r, prices);
    let q_max = params.max_consumption();
    let b_hat = match regime {
        Regime::BelowThreshold => {
            let raw = params.baseline() + baseline_inflation(p_r.value(), params, prices);
            if raw > q_max {
                log::warn!(
                    "optimal reported baseline {raw} exceeds q_max = {q_max}; clamped (p_r = {})",
                    p_r.value()
                );
                q_max
            } else {
                raw
            }
        }
        Regime::AboveThreshold => q_max,
    };
    let report = Report::new_unchecked(b_hat, params.reduced_consumption(prices));
    Stage1Solution {
        report,
        expected_profit: expected_profit(p_r, params, prices),
        regime,
    }
}

/// Both branches of the closed-form expected profit evaluated at `p_r`,
/// regardless of which one applies. Returned as `(below, above)`.
pub fn expected_profit_branches(
    p_r: CallProbability,
    params: &ConsumerParams,
    prices: &Prices,
    form: ProfitForm,
) -> (f64, f64) {
    let pr = p_r.value();
    let (b, g, q_max) = (
        params.baseline(),
        params.marginal_utility(),
        params.max_consumption(),
    );
    let (p, p2) = (prices.energy(), prices.incentive());
    // When b < p2/gamma the committed consumption is clamped at zero and
    // the called payoff loses gamma/2 (b - p2/gamma)^2.
    let clamp_loss = {
        let short = (b - p2 / g).min(0.0);
        pr * 0.5 * g * short * short
    };
    let below = g * b * b / 2.0 + pr * p2 * p2 / (2.0 * g * (1.0 - pr)) - clamp_loss;
    let above = match form {
        ProfitForm::Corrected => {
            (1.0 - pr) * (p * p / (2.0 * g) + b * p - p * q_max)
                + g * b * b / 2.0
                + pr * (p2 * p2 / (2.0 * g) - b * p2 + p2 * q_max)
        }
        ProfitForm::Literal => {
            p * p / (2.0 * g) + b * p - p * q_max + g * b * b / 2.0 - p * p * pr / (2.0 * g)
                + p2 * p2 * pr / (2.0 * g)
                - b * pr
                - b * p2 * pr
                + p * q_max * pr
                + p2 * q_max * pr
        }
    } - clamp_loss;
    (below, above)
}

/// Stage-1 objective evaluated from the Stage-2 closed forms at a report.
fn expected_profit_at(p_r: f64, report: &Report, params: &ConsumerParams, prices: &Prices) -> f64 {
    let idle = stage2_optimal_r0(report.b_hat(), params, prices)
        .expect("report within [0, q_max]")
        .payoff;
    let called = stage2_optimal_r1(report, params, prices)
        .expect("valid report")
        .payoff;
    p_r * called + (1.0 - p_r) * idle
}

/// Optimal expected profit (corrected form).
pub fn expected_profit(p_r: CallProbability, params: &ConsumerParams, prices: &Prices) -> f64 {
    expected_profit_with(p_r, params, prices, ProfitForm::Corrected)
}

pub fn expected_profit_with(
    p_r: CallProbability,
    params: &ConsumerParams,
    prices: &Prices,
    form: ProfitForm,
) -> f64 {
    let regime = Regime::of(p_r, prices);
    let saturation_ok = params.check_saturation(prices).is_ok();
    let unclamped = params.baseline() + baseline_inflation(p_r.value(), params, prices);
    if !saturation_ok || (regime == Regime::BelowThreshold && unclamped > params.max_consumption())
    {
        // Outside the closed form's assumptions: score the clamped report.
        let b_hat = match regime {
            Regime::BelowThreshold => unclamped.min(params.max_consumption()),
            Regime::AboveThreshold => params.max_consumption(),
        };
        let report = Report::new_unchecked(b_hat, params.reduced_consumption(prices));
        return expected_profit_at(p_r.value(), &report, params, prices);
    }
    let (below, above) = expected_profit_branches(p_r, params, prices, form);
    match regime {
        Regime::BelowThreshold => below,
        Regime::AboveThreshold => above,
    }
}

/// Realised optimal consumption once the best report has been made.
pub fn optimal_consumption(
    p_r: CallProbability,
    r: CallSignal,
    params: &ConsumerParams,
    prices: &Prices,
) -> f64 {
    match r {
        CallSignal::NotCalled => {
            let b_hat = stage1_optimal_report(p_r, params, prices).report.b_hat();
            b_hat.min(params.saturation(prices))
        }
        CallSignal::Called => params.reduced_consumption(prices),
    }
}

/// Individual-rationality margin: expected profit minus the no-DR payoff.
pub fn participation_gain(p_r: CallProbability, params: &ConsumerParams, prices: &Prices) -> f64 {
    expected_profit(p_r, params, prices) - payoff_no_dr(params)
}
