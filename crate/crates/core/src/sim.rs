//! Event simulation for a portfolio of consumers under the contract.
//!
//! One event follows the contract timeline: consumers report, the
//! aggregator draws call signals, consumers pick their consumption and the
//! aggregator settles. Call signals are independent Bernoulli draws at each
//! consumer's contractual probability; a shortfall against the reduction
//! target is flagged, never compensated by raising probabilities.
//!
//! Randomness: an event seeded with `s` uses `ChaCha8Rng::seed_from_u64(s)`
//! and draws one `f64` per consumer in portfolio order. Trial `t` of a Monte
//! Carlo run with master seed `m` uses the event seed
//! [`trial_seed`]`(m, t)`, the first `u64` of ChaCha8 stream `t` under key
//! `seed_from_u64(m)`. Trials therefore never share state and results do not
//! depend on how trials are scheduled across threads.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::contract::{
    ideal_consumption, payment, utility_unchecked, CallProbability, CallSignal, ConsumerParams,
    Prices, Report,
};
use crate::error::{ContractError, Result};
use crate::strategy::{stage1_optimal_report, stage2_optimal_r0, stage2_optimal_r1};

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioEntry {
    pub id: String,
    pub params: ConsumerParams,
    pub call_probability: CallProbability,
}

/// Consumers under contract with one aggregator, all facing the same prices.
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    entries: Vec<PortfolioEntry>,
    prices: Prices,
}

impl Portfolio {
    /// Rejects duplicate ids and consumers whose cap does not exceed their
    /// saturation point.
    pub fn new(entries: Vec<PortfolioEntry>, prices: Prices) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(ContractError::DuplicateConsumer(e.id.clone()));
            }
            e.params.check_saturation(&prices)?;
        }
        Ok(Portfolio { entries, prices })
    }

    pub fn entries(&self) -> &[PortfolioEntry] {
        &self.entries
    }

    pub fn prices(&self) -> &Prices {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BehaviorModel {
    /// Optimal two-stage strategy against the contract.
    Rational,
    /// Reports its true baseline and consumes the ideal amount.
    Truthful,
    /// Reports `q_max` as baseline and consumes `b` unless called; once
    /// called it responds optimally to the realised penalty.
    NaiveGamer,
}

impl BehaviorModel {
    pub fn as_str(self) -> &'static str {
        match self {
            BehaviorModel::Rational => "rational",
            BehaviorModel::Truthful => "truthful",
            BehaviorModel::NaiveGamer => "naive_gamer",
        }
    }
}

impl fmt::Display for BehaviorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BehaviorModel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "rational" => Ok(BehaviorModel::Rational),
            "truthful" => Ok(BehaviorModel::Truthful),
            "naive_gamer" => Ok(BehaviorModel::NaiveGamer),
            other => Err(format!(
                "unknown behavior `{other}` (expected rational, truthful or naive_gamer)"
            )),
        }
    }
}

pub type Behaviors = BTreeMap<String, BehaviorModel>;
pub type Reports = BTreeMap<String, Report>;

#[derive(Debug, Clone, PartialEq)]
pub struct CallAllocation {
    pub calls: BTreeMap<String, CallSignal>,
    /// Sum of `b_hat - q_hat` over called consumers.
    pub committed_reduction: f64,
    pub under_provisioned: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub consumer_id: String,
    pub r: CallSignal,
    pub report: Report,
    pub q_actual: f64,
    pub payment: f64,
    pub profit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventSummary {
    /// Sum of `(b_hat - q_actual)+` over called consumers.
    pub total_reduction: f64,
    /// Net transfer from the aggregator to called consumers (minus the sum
    /// of their payments).
    pub total_payout: f64,
    pub called_count: usize,
    pub under_provisioned: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settlement {
    pub records: Vec<EventRecord>,
    pub summary: EventSummary,
}

fn behavior_of<'a>(behaviors: &'a Behaviors, id: &str) -> Result<&'a BehaviorModel> {
    behaviors
        .get(id)
        .ok_or_else(|| ContractError::MissingBehavior(id.to_string()))
}

/// Stage-1 reports of every consumer according to its behavior.
pub fn collect_reports(portfolio: &Portfolio, behaviors: &Behaviors) -> Result<Reports> {
    let prices = portfolio.prices();
    portfolio
        .entries()
        .iter()
        .map(|e| {
            let committed = e.params.reduced_consumption(prices);
            let report = match behavior_of(behaviors, &e.id)? {
                BehaviorModel::Rational => {
                    stage1_optimal_report(e.call_probability, &e.params, prices).report
                }
                BehaviorModel::Truthful => Report::new(e.params.baseline(), committed, &e.params)?,
                BehaviorModel::NaiveGamer => {
                    Report::new(e.params.max_consumption(), committed, &e.params)?
                }
            };
            Ok((e.id.clone(), report))
        })
        .collect()
}

/// Draws call signals with the seeded generator described in the module
/// docs.
pub fn allocate_calls(
    portfolio: &Portfolio,
    reports: &Reports,
    reduction_target: f64,
    rng_seed: u64,
) -> Result<CallAllocation> {
    if reduction_target.is_nan() || reduction_target < 0.0 {
        return Err(ContractError::Domain {
            what: "reduction target",
            value: reduction_target,
            domain: "[0, inf)".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut calls = BTreeMap::new();
    let mut committed_reduction = 0.0;
    for e in portfolio.entries() {
        let report = reports
            .get(&e.id)
            .ok_or_else(|| ContractError::InconsistentKeys(format!("no report for `{}`", e.id)))?;
        let draw: f64 = rng.gen();
        let r = if draw < e.call_probability.value() {
            CallSignal::Called
        } else {
            CallSignal::NotCalled
        };
        if r.is_called() {
            committed_reduction += report.b_hat() - report.q_hat();
        }
        calls.insert(e.id.clone(), r);
    }
    Ok(CallAllocation {
        calls,
        committed_reduction,
        under_provisioned: committed_reduction < reduction_target,
    })
}

fn consumption(
    behavior: BehaviorModel,
    r: CallSignal,
    report: &Report,
    params: &ConsumerParams,
    prices: &Prices,
) -> Result<f64> {
    Ok(match (behavior, r) {
        (BehaviorModel::Truthful, r) => ideal_consumption(params, prices, r),
        (BehaviorModel::NaiveGamer, CallSignal::NotCalled) => params.baseline(),
        (BehaviorModel::Rational, CallSignal::NotCalled) => {
            stage2_optimal_r0(report.b_hat(), params, prices)?.q_star
        }
        (_, CallSignal::Called) => stage2_optimal_r1(report, params, prices)?.q_star,
    })
}

/// Stage-2 consumption, payments and profits for one event.
pub fn settle_event(
    portfolio: &Portfolio,
    reports: &Reports,
    calls: &BTreeMap<String, CallSignal>,
    behaviors: &Behaviors,
) -> Result<Settlement> {
    let n = portfolio.len();
    if reports.len() != n || calls.len() != n {
        return Err(ContractError::InconsistentKeys(format!(
            "{n} consumers but {} reports and {} call signals",
            reports.len(),
            calls.len()
        )));
    }
    let prices = portfolio.prices();
    let mut records = Vec::with_capacity(n);
    let mut summary = EventSummary {
        total_reduction: 0.0,
        total_payout: 0.0,
        called_count: 0,
        under_provisioned: false,
    };
    for e in portfolio.entries() {
        let missing =
            |what: &str| ContractError::InconsistentKeys(format!("no {what} for `{}`", e.id));
        let report = *reports.get(&e.id).ok_or_else(|| missing("report"))?;
        let r = *calls.get(&e.id).ok_or_else(|| missing("call signal"))?;
        let behavior = *behavior_of(behaviors, &e.id)?;
        let q_actual = consumption(behavior, r, &report, &e.params, prices)?;
        let paid = payment(q_actual, &report, r, prices);
        let profit = utility_unchecked(q_actual, &e.params, prices) - paid;
        if r.is_called() {
            summary.called_count += 1;
            summary.total_reduction += (report.b_hat() - q_actual).max(0.0);
            summary.total_payout -= paid;
        }
        records.push(EventRecord {
            consumer_id: e.id.clone(),
            r,
            report,
            q_actual,
            payment: paid,
            profit,
        });
    }
    Ok(Settlement { records, summary })
}

/// Event seed for trial `trial` of a run seeded with `master_seed`.
pub fn trial_seed(master_seed: u64, trial: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub records: Vec<EventRecord>,
    pub summary: EventSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsumerStats {
    pub consumer_id: String,
    pub behavior: BehaviorModel,
    pub call_probability: f64,
    pub call_frequency: f64,
    pub mean_profit: f64,
    /// Unbiased sample variance; zero for a single trial.
    pub profit_variance: f64,
    pub profit_std_error: f64,
    pub mean_payment: f64,
    pub mean_consumption: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub master_seed: u64,
    pub trials: Vec<TrialOutcome>,
    pub consumers: Vec<ConsumerStats>,
    pub mean_reduction: f64,
    pub under_provisioned_fraction: f64,
}

/// Runs `trials` independent events. Trials may execute in parallel;
/// aggregation walks them in trial order, so the result is bitwise
/// identical for any thread count.
pub fn run_monte_carlo(
    portfolio: &Portfolio,
    behaviors: &Behaviors,
    trials: usize,
    reduction_target: f64,
    master_seed: u64,
) -> Result<MonteCarloResult> {
    if trials == 0 {
        return Err(ContractError::Domain {
            what: "trials",
            value: 0.0,
            domain: "[1, inf)".into(),
        });
    }
    let reports = collect_reports(portfolio, behaviors)?;
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(master_seed, trial as u64);
            let allocation = allocate_calls(portfolio, &reports, reduction_target, seed)?;
            let mut settlement = settle_event(portfolio, &reports, &allocation.calls, behaviors)?;
            settlement.summary.under_provisioned = allocation.under_provisioned;
            Ok(TrialOutcome {
                trial,
                seed,
                records: settlement.records,
                summary: settlement.summary,
            })
        })
        .collect::<Result<_>>()?;

    let n = trials as f64;
    let consumers = portfolio
        .entries()
        .iter()
        .enumerate()
        .map(|(idx, e)| {
            let records = || outcomes.iter().map(move |t| &t.records[idx]);
            let calls = records().filter(|r| r.r.is_called()).count() as f64;
            // Shifted by the first sample so constant profits give zero variance.
            let shift = outcomes[0].records[idx].profit;
            let mean_shifted = records().map(|r| r.profit - shift).sum::<f64>() / n;
            let mean_profit = shift + mean_shifted;
            let profit_variance = if trials > 1 {
                records()
                    .map(|r| (r.profit - shift - mean_shifted).powi(2))
                    .sum::<f64>()
                    / (n - 1.0)
            } else {
                0.0
            };
            ConsumerStats {
                consumer_id: e.id.clone(),
                behavior: behaviors[&e.id],
                call_probability: e.call_probability.value(),
                call_frequency: calls / n,
                mean_profit,
                profit_variance,
                profit_std_error: (profit_variance / n).sqrt(),
                mean_payment: records().map(|r| r.payment).sum::<f64>() / n,
                mean_consumption: records().map(|r| r.q_actual).sum::<f64>() / n,
            }
        })
        .collect();
    let mean_reduction = outcomes
        .iter()
        .map(|t| t.summary.total_reduction)
        .sum::<f64>()
        / n;
    let under = outcomes
        .iter()
        .filter(|t| t.summary.under_provisioned)
        .count() as f64;
    Ok(MonteCarloResult {
        master_seed,
        trials: outcomes,
        consumers,
        mean_reduction,
        under_provisioned_fraction: under / n,
    })
}
