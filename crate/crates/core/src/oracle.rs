//! Brute-force verification of the closed forms.
//!
//! Stage 2 is solved by scanning a grid of consumptions. Every breakpoint of
//! the piecewise-quadratic objective and every vertex of its pieces are
//! added to the grid, so the scan is an exact finite search rather than an
//! approximation. The two-stage problem enumerates reports on the same kind
//! of grid and solves both inner problems per report.
//!
//! The case table reproduces the per-case optimal payoffs of the KKT case
//! analysis (four cases when not called, ten when called) so that the
//! region bookkeeping of the closed forms can be checked piece by piece.

use std::fmt;

use rayon::prelude::*;

use crate::contract::{
    stage2_profit_unchecked, CallProbability, CallSignal, ConsumerParams, Prices, Report,
};
use crate::error::{ContractError, Result};
use crate::strategy::{Regime, Stage1Solution, Stage2Solution, Strategy, StrategyR0, StrategyR1};

pub const DEFAULT_GRID_STEP: f64 = 0.01;
const MAX_GRID_POINTS: f64 = 1e7;

/// Uniform grid `lo, lo + step, ..., <= hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    lo: f64,
    hi: f64,
    step: f64,
    inject_breakpoints: bool,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && step.is_finite()) {
            return Err(ContractError::InvalidGrid(
                "bounds and step must be finite".into(),
            ));
        }
        if lo > hi {
            return Err(ContractError::InvalidGrid(format!(
                "lo = {lo} exceeds hi = {hi}"
            )));
        }
        if step <= 0.0 {
            return Err(ContractError::InvalidGrid(format!(
                "step = {step} must be positive"
            )));
        }
        if (hi - lo) / step > MAX_GRID_POINTS {
            return Err(ContractError::InvalidGrid(format!(
                "(hi - lo) / step = {} exceeds the 1e7 point guard",
                (hi - lo) / step
            )));
        }
        Ok(GridSpec {
            lo,
            hi,
            step,
            inject_breakpoints: true,
        })
    }

    /// Grid over `[0, q_max]`.
    pub fn covering(params: &ConsumerParams, step: f64) -> Result<Self> {
        GridSpec::new(0.0, params.max_consumption(), step)
    }

    /// Plain grid scan; only used to measure discretisation error.
    pub fn without_breakpoints(mut self) -> Self {
        self.inject_breakpoints = false;
        self
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Grid points that fall inside `[from, to]`.
    fn points_within(&self, from: f64, to: f64) -> impl Iterator<Item = f64> + '_ {
        let eps = 1e-9;
        let first = ((from - self.lo) / self.step - eps).ceil().max(0.0) as u64;
        let last = ((to.min(self.hi) - self.lo) / self.step + eps).floor();
        let last = if last < 0.0 { None } else { Some(last as u64) };
        let range = match last {
            Some(l) if first <= l => first..l + 1,
            _ => 0..0,
        };
        range.map(move |k| (self.lo + k as f64 * self.step).clamp(from, to))
    }
}

/// Running argmax: larger payoff wins, smaller consumption on exact ties.
/// The merge is associative and commutative, so any partition of a grid
/// reduces to the same answer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArgMax {
    pub q: f64,
    pub payoff: f64,
}

impl ArgMax {
    pub fn merge(a: Option<ArgMax>, b: Option<ArgMax>) -> Option<ArgMax> {
        match (a, b) {
            (None, x) | (x, None) => x,
            (Some(a), Some(b)) => {
                if b.payoff > a.payoff || (b.payoff == a.payoff && b.q < a.q) {
                    Some(b)
                } else {
                    Some(a)
                }
            }
        }
    }
}

fn stage2_breakpoints(report: &Report, params: &ConsumerParams, prices: &Prices) -> [f64; 8] {
    let b = params.baseline();
    let g = params.marginal_utility();
    let p2 = prices.incentive();
    [
        0.0,
        params.max_consumption(),
        report.b_hat(),
        report.q_hat(),
        b,
        params.saturation(prices),
        (b - p2 / g).max(0.0),
        (b - 2.0 * p2 / g).max(0.0),
    ]
}

/// Feasible window of `grid` inside `[0, q_max]`, or an error if the grid
/// contributes no point there.
fn feasible_window(grid: &GridSpec, params: &ConsumerParams) -> Result<(f64, f64)> {
    let q_max = params.max_consumption();
    let from = grid.lo.max(0.0);
    let to = grid.hi.min(q_max);
    if from > to || grid.points_within(from, to).next().is_none() {
        return Err(ContractError::EmptyGrid {
            lo: grid.lo,
            hi: grid.hi,
            q_max,
        });
    }
    Ok((from, to))
}

/// Exhaustive Stage-2 search over `grid` (clipped to `[0, q_max]`).
pub fn oracle_stage2(
    report: &Report,
    r: CallSignal,
    params: &ConsumerParams,
    prices: &Prices,
    grid: &GridSpec,
) -> Result<Stage2Solution> {
    let (from, to) = feasible_window(grid, params)?;
    Ok(scan(report, r, params, prices, grid, from, to))
}

fn scan(
    report: &Report,
    r: CallSignal,
    params: &ConsumerParams,
    prices: &Prices,
    grid: &GridSpec,
    from: f64,
    to: f64,
) -> Stage2Solution {
    let eval = |q: f64| {
        Some(ArgMax {
            q,
            payoff: stage2_profit_unchecked(q, report, r, params, prices),
        })
    };
    let mut best = grid
        .points_within(from, to)
        .fold(None, |acc, q| ArgMax::merge(acc, eval(q)));
    if grid.inject_breakpoints {
        for q in stage2_breakpoints(report, params, prices) {
            if (from..=to).contains(&q) {
                best = ArgMax::merge(best, eval(q));
            }
        }
    }
    let best = best.expect("window holds at least one grid point");
    Stage2Solution {
        q_star: best.q,
        label: None,
        payoff: best.payoff,
    }
}

/// Precomputed inner solutions over a report grid. The inner solutions do
/// not depend on the call probability, so one table serves a whole sweep.
#[derive(Debug, Clone)]
pub struct TwoStageOracle {
    params: ConsumerParams,
    prices: Prices,
    points: Vec<f64>,
    idle: Vec<f64>,
    // Lower-triangular: row i holds q_hat = points[0..=i] for b_hat = points[i].
    called: Vec<f64>,
}

impl TwoStageOracle {
    pub fn new(params: &ConsumerParams, prices: &Prices, grid: &GridSpec) -> Result<Self> {
        let (from, to) = feasible_window(grid, params)?;
        let mut points: Vec<f64> = grid.points_within(from, to).collect();
        if grid.inject_breakpoints {
            let b = params.baseline();
            let g = params.marginal_utility();
            let p2 = prices.incentive();
            let extra = [
                from,
                to,
                b,
                params.saturation(prices),
                (b - p2 / g).max(0.0),
                (b - 2.0 * p2 / g).max(0.0),
            ];
            points.extend(extra.into_iter().filter(|q| (from..=to).contains(q)));
        }
        points.sort_by(f64::total_cmp);
        points.dedup();

        let idle: Vec<f64> = points
            .par_iter()
            .map(|&b_hat| {
                let report = Report::new_unchecked(b_hat, 0.0);
                scan(
                    &report,
                    CallSignal::NotCalled,
                    params,
                    prices,
                    grid,
                    from,
                    to,
                )
                .payoff
            })
            .collect();
        let rows: Vec<Vec<f64>> = (0..points.len())
            .into_par_iter()
            .map(|i| {
                let b_hat = points[i];
                points[..=i]
                    .iter()
                    .map(|&q_hat| {
                        let report = Report::new_unchecked(b_hat, q_hat);
                        scan(&report, CallSignal::Called, params, prices, grid, from, to).payoff
                    })
                    .collect()
            })
            .collect();
        Ok(TwoStageOracle {
            params: *params,
            prices: *prices,
            points,
            idle,
            called: rows.concat(),
        })
    }

    /// Report grid (sorted, deduplicated).
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Best report for `p_r`. Ties in expected profit go to the report with
    /// the larger called payoff, then to the earliest report in grid order,
    /// which keeps the answer comparable with the closed form at `p_r = 0`.
    pub fn solve(&self, p_r: CallProbability) -> Stage1Solution {
        let w = p_r.value();
        let mut best: Option<(f64, f64, usize, usize)> = None;
        let mut offset = 0;
        for (i, &idle) in self.idle.iter().enumerate() {
            for j in 0..=i {
                let called = self.called[offset + j];
                let value = w * called + (1.0 - w) * idle;
                let better = match best {
                    None => true,
                    Some((v, c, _, _)) => value > v || (value == v && called > c),
                };
                if better {
                    best = Some((value, called, i, j));
                }
            }
            offset += i + 1;
        }
        let (value, _, i, j) = best.expect("report grid is non-empty");
        Stage1Solution {
            report: Report::new_unchecked(self.points[i], self.points[j]),
            expected_profit: value,
            regime: Regime::of(p_r, &self.prices),
        }
    }

    pub fn params(&self) -> &ConsumerParams {
        &self.params
    }
}

/// Exhaustive two-stage search: best report against the call probability,
/// with both inner problems solved by [`oracle_stage2`]-style scans.
pub fn oracle_two_stage(
    p_r: CallProbability,
    params: &ConsumerParams,
    prices: &Prices,
    grid: &GridSpec,
) -> Result<Stage1Solution> {
    Ok(TwoStageOracle::new(params, prices, grid)?.solve(p_r))
}

/// Cases of the KKT analysis. `a`-`d` are the not-called cases, `e1`-`l`
/// the called ones; the called cases `i` and `k` violate `q_hat <= b_hat`
/// and have no row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseId {
    A,
    B,
    C,
    D,
    E1,
    E2,
    F1,
    F2,
    F3,
    G,
    H,
    J1,
    J2,
    L,
}

impl CaseId {
    pub const ALL: [CaseId; 14] = [
        CaseId::A,
        CaseId::B,
        CaseId::C,
        CaseId::D,
        CaseId::E1,
        CaseId::E2,
        CaseId::F1,
        CaseId::F2,
        CaseId::F3,
        CaseId::G,
        CaseId::H,
        CaseId::J1,
        CaseId::J2,
        CaseId::L,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseId::A => "a",
            CaseId::B => "b",
            CaseId::C => "c",
            CaseId::D => "d",
            CaseId::E1 => "e1",
            CaseId::E2 => "e2",
            CaseId::F1 => "f1",
            CaseId::F2 => "f2",
            CaseId::F3 => "f3",
            CaseId::G => "g",
            CaseId::H => "h",
            CaseId::J1 => "j1",
            CaseId::J2 => "j2",
            CaseId::L => "l",
        }
    }

    pub fn signal(self) -> CallSignal {
        match self {
            CaseId::A | CaseId::B | CaseId::C | CaseId::D => CallSignal::NotCalled,
            _ => CallSignal::Called,
        }
    }

    /// Closed-form strategies whose consumption this case produces when it
    /// is the global maximiser. Cases that are never strictly optimal map
    /// to nothing.
    pub fn strategies(self) -> &'static [Strategy] {
        use Strategy::{Called, NotCalled};
        match self {
            CaseId::A => &[NotCalled(StrategyR0::B), NotCalled(StrategyR0::C)],
            CaseId::B => &[NotCalled(StrategyR0::C)],
            CaseId::C => &[NotCalled(StrategyR0::A), NotCalled(StrategyR0::B)],
            CaseId::E1 => &[Called(StrategyR1::X), Called(StrategyR1::Y)],
            CaseId::F1 => &[Called(StrategyR1::Z)],
            CaseId::F3 => &[Called(StrategyR1::W), Called(StrategyR1::V)],
            CaseId::J1 => &[Called(StrategyR1::U)],
            CaseId::J2 => &[Called(StrategyR1::V), Called(StrategyR1::W)],
            CaseId::D | CaseId::E2 | CaseId::F2 | CaseId::G | CaseId::H | CaseId::L => &[],
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Optimal payoff of one KKT case and whether the report lies in its
/// feasibility region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CasePayoff {
    pub case: CaseId,
    pub q_star: f64,
    pub payoff: f64,
    pub feasible: bool,
}

/// Evaluates every case's closed-form optimal payoff at `report`.
pub fn kkt_case_payoffs(
    report: &Report,
    params: &ConsumerParams,
    prices: &Prices,
) -> Vec<CasePayoff> {
    let (bh, qh) = (report.b_hat(), report.q_hat());
    let b = params.baseline();
    let g = params.marginal_utility();
    let (p, p2) = (prices.energy(), prices.incentive());
    let sat = b + p / g;
    let one = b - p2 / g;
    let two = b - 2.0 * p2 / g;
    let base = g * b * b / 2.0;

    let row = |case, q_star: f64, payoff: f64, feasible: bool| CasePayoff {
        case,
        q_star,
        payoff,
        feasible,
    };
    let reported_baseline_payoff = -bh * bh * g / 2.0 + b * bh * g;

    vec![
        // Not called.
        if bh <= sat {
            row(CaseId::A, bh, reported_baseline_payoff, true)
        } else {
            row(
                CaseId::A,
                sat,
                p * p / (2.0 * g) + base + p * (b - bh),
                true,
            )
        },
        row(
            CaseId::B,
            sat,
            p * p / (2.0 * g) + base + p * (b - bh),
            bh >= sat,
        ),
        if bh <= b {
            row(CaseId::C, b, base, true)
        } else {
            row(CaseId::C, bh, reported_baseline_payoff, bh <= sat)
        },
        row(CaseId::D, sat, -p * p / (2.0 * g) + base, bh <= sat),
        // Called.
        row(
            CaseId::E1,
            one.max(0.0),
            base - b * p2 + p2 * p2 / (2.0 * g) + qh * p2,
            bh <= one,
        ),
        row(
            CaseId::E2,
            bh,
            p2 * qh - bh * p2 - bh * bh * g / 2.0 + b * bh * g,
            one <= bh && bh <= sat,
        ),
        row(
            CaseId::F1,
            two.max(0.0),
            2.0 * p2 * p2 / g - 2.0 * b * p2 + bh * p2 + p2 * qh + base,
            two <= bh && qh <= two,
        ),
        row(
            CaseId::F2,
            bh,
            p2 * qh - bh * p2 - bh * bh * g / 2.0 + b * bh * g,
            bh <= two,
        ),
        row(
            CaseId::F3,
            qh,
            bh * p2 - p2 * qh - qh * qh * g / 2.0 + b * qh * g,
            two <= qh && qh <= sat,
        ),
        row(
            CaseId::G,
            sat,
            base - p2 * b - p * p / (2.0 * g) - p2 * p / g + p2 * qh,
            bh <= sat && qh <= sat,
        ),
        row(
            CaseId::H,
            sat,
            base - 2.0 * p2 * b - p * p / (2.0 * g) - 2.0 * p2 * p / g + bh * p2 + p2 * qh,
            bh >= sat && qh <= sat,
        ),
        row(CaseId::J1, b, bh * p2 - p2 * qh + base, qh >= b),
        row(
            CaseId::J2,
            qh,
            bh * p2 - p2 * qh - qh * qh * g / 2.0 + b * qh * g,
            qh <= b,
        ),
        row(
            CaseId::L,
            sat,
            base - p * p / (2.0 * g) + bh * p2 - p2 * qh,
            qh >= sat,
        ),
    ]
}

/// Best feasible case for one call signal.
pub fn best_feasible_case(cases: &[CasePayoff], signal: CallSignal) -> Option<CasePayoff> {
    cases
        .iter()
        .filter(|c| c.feasible && c.case.signal() == signal)
        .copied()
        .fold(None, |best: Option<CasePayoff>, c| match best {
            Some(b) if b.payoff >= c.payoff => Some(b),
            _ => Some(c),
        })
}
