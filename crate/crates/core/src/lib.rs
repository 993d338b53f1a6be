//! Probability-of-call demand-response contract.
//!
//! An aggregator pays consumers for reducing consumption below a reported
//! baseline, and calls each consumer with a fixed probability. Consumers
//! choose a baseline report and a committed consumption, then react to the
//! call signal. This crate provides:
//!
//! - [`contract`]: utility, payments and Stage-2 profit.
//! - [`strategy`]: closed-form optimal consumer strategies for both stages.
//! - [`oracle`]: exhaustive search used to verify the closed forms.
//! - [`sim`]: multi-consumer event simulation with settlement.
//! - [`sweep`] and [`verify`]: drivers for parameter sweeps and randomized
//!   consistency checks.

pub mod contract;
pub mod error;
pub mod oracle;
pub mod sim;
pub mod strategy;
pub mod sweep;
pub mod verify;

pub use contract::{
    ideal_consumption, payment, payment_called, payment_not_called, payoff_no_dr, stage2_profit,
    utility, CallProbability, CallSignal, ConsumerParams, Prices, Report,
};
pub use error::{ContractError, Result};
pub use oracle::{
    best_feasible_case, kkt_case_payoffs, oracle_stage2, oracle_two_stage, CaseId, CasePayoff,
    GridSpec, TwoStageOracle, DEFAULT_GRID_STEP,
};
pub use sim::{
    allocate_calls, collect_reports, run_monte_carlo, settle_event, BehaviorModel, Behaviors,
    EventRecord, EventSummary, MonteCarloResult, Portfolio, PortfolioEntry,
};
pub use strategy::{
    expected_profit, expected_profit_with, optimal_consumption, probability_threshold,
    stage1_optimal_report, stage2_optimal_r0, stage2_optimal_r1, ProfitForm, Regime,
    Stage1Solution, Stage2Solution, Strategy,
};
pub use sweep::{sweep, SweepParam, SweepRow, SweepSpec};
pub use verify::{run_suite, VerifyConfig, VerifyReport};
