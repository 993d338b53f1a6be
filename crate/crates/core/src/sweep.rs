//! One-dimensional parameter sweeps over the closed-form strategies.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::contract::{CallProbability, ConsumerParams, Prices};
use crate::error::{ContractError, Result};
use crate::strategy::{
    expected_profit, stage1_optimal_report, stage2_optimal_r0, stage2_optimal_r1, Regime,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParam {
    CallProbability,
    MarginalUtility,
}

impl SweepParam {
    /// Column label used in CSV output.
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::CallProbability => "p_r",
            SweepParam::MarginalUtility => "gamma",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepParam {
    type Err = ContractError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p_r" => Ok(SweepParam::CallProbability),
            "gamma" => Ok(SweepParam::MarginalUtility),
            other => Err(ContractError::InvalidSweep(format!(
                "unknown parameter `{other}` (expected p_r or gamma)"
            ))),
        }
    }
}

/// `steps` evenly spaced values from `from` to `to`, both included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl SweepSpec {
    pub fn default_for(param: SweepParam) -> Self {
        match param {
            SweepParam::CallProbability => SweepSpec {
                param,
                from: 0.0,
                to: 1.0,
                steps: 101,
            },
            SweepParam::MarginalUtility => SweepSpec {
                param,
                from: 0.01,
                to: 0.2,
                steps: 96,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ContractError::InvalidSweep(msg));
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if !(self.from.is_finite() && self.to.is_finite()) {
            return bad("bounds must be finite".into());
        }
        if self.from > self.to {
            return bad(format!("from = {} exceeds to = {}", self.from, self.to));
        }
        if self.steps == 1 && self.from != self.to {
            return bad("a single step needs from == to".into());
        }
        match self.param {
            SweepParam::CallProbability if self.from < 0.0 || self.to > 1.0 => bad(format!(
                "p_r range [{}, {}] leaves [0, 1]",
                self.from, self.to
            )),
            SweepParam::MarginalUtility if self.from <= 0.0 => bad(format!(
                "gamma range must be positive, got from = {}",
                self.from
            )),
            _ => Ok(()),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.from];
        }
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                if i + 1 == self.steps {
                    self.to
                } else {
                    self.from + (self.to - self.from) * i as f64 / last
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub b_hat_star: f64,
    pub q_hat_star: f64,
    pub q_star_r0: f64,
    pub q_star_r1: f64,
    pub expected_profit: f64,
    /// `b_hat_star / b`.
    pub normalized_baseline: f64,
    pub regime: Regime,
}

/// Evaluates the closed forms at every sweep point. A `gamma` sweep holds
/// the call probability at `p_r`; a `p_r` sweep ignores it.
///
/// The saturation condition `q_max > b + p/gamma` is checked on the base
/// parameters only, so a `gamma` sweep may reach values below `p/(q_max - b)`.
pub fn sweep(
    params: &ConsumerParams,
    prices: &Prices,
    p_r: CallProbability,
    spec: &SweepSpec,
) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    params.check_saturation(prices)?;
    spec.values()
        .par_iter()
        .map(|&value| {
            let (params, p_r) = match spec.param {
                SweepParam::CallProbability => (*params, CallProbability::new(value)?),
                SweepParam::MarginalUtility => (params.with_marginal_utility(value)?, p_r),
            };
            let stage1 = stage1_optimal_report(p_r, &params, prices);
            let report = stage1.report;
            let row = SweepRow {
                param: spec.param,
                value,
                b_hat_star: report.b_hat(),
                q_hat_star: report.q_hat(),
                q_star_r0: stage2_optimal_r0(report.b_hat(), &params, prices)?.q_star,
                q_star_r1: stage2_optimal_r1(&report, &params, prices)?.q_star,
                expected_profit: expected_profit(p_r, &params, prices),
                normalized_baseline: report.b_hat() / params.baseline(),
                regime: stage1.regime,
            };
            Ok(row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sec6() -> (ConsumerParams, Prices, CallProbability) {
        (
            ConsumerParams::new(8.0, 0.05, 16.0).unwrap(),
            Prices::new(0.26, 0.3).unwrap(),
            CallProbability::new(0.1).unwrap(),
        )
    }

    #[test]
    fn spec_validation() {
        let ok = SweepSpec::default_for(SweepParam::CallProbability);
        assert!(ok.validate().is_ok());
        assert_eq!(ok.values().len(), 101);
        assert_eq!(ok.values()[100], 1.0);
        let bad = [
            SweepSpec { steps: 0, ..ok },
            SweepSpec { to: 1.5, ..ok },
            SweepSpec {
                from: 0.8,
                to: 0.2,
                ..ok
            },
            SweepSpec {
                from: f64::NAN,
                ..ok
            },
            SweepSpec { steps: 1, ..ok },
            SweepSpec {
                param: SweepParam::MarginalUtility,
                from: 0.0,
                ..ok
            },
        ];
        for spec in bad {
            assert!(
                matches!(spec.validate(), Err(ContractError::InvalidSweep(_))),
                "{spec:?}"
            );
        }
        let single = SweepSpec {
            from: 0.3,
            to: 0.3,
            steps: 1,
            ..ok
        };
        assert_eq!(single.values(), vec![0.3]);
        assert!("beta".parse::<SweepParam>().is_err());
        assert_eq!(
            "gamma".parse::<SweepParam>().unwrap(),
            SweepParam::MarginalUtility
        );
    }

    #[test]
    fn call_probability_sweep_rows() {
        let (params, prices, p_r) = sec6();
        let rows = sweep(
            &params,
            &prices,
            p_r,
            &SweepSpec::default_for(SweepParam::CallProbability),
        )
        .unwrap();
        assert_eq!(rows.len(), 101);
        let first = rows[0];
        assert_eq!(first.normalized_baseline, 1.0);
        assert!((first.expected_profit - 1.6).abs() < 1e-12);
        assert_eq!(rows[46].regime, Regime::BelowThreshold);
        assert_eq!(rows[47].regime, Regime::AboveThreshold);
        assert_eq!(rows[47].b_hat_star, 16.0);
        assert!(rows[46].b_hat_star < 16.0);
        for r in &rows {
            assert!((r.q_hat_star - 2.0).abs() < 1e-12);
            assert_eq!(r.q_star_r1, r.q_hat_star);
        }
    }

    #[test]
    fn gamma_sweep_approaches_truthful() {
        let (params, prices, p_r) = sec6();
        let rows = sweep(
            &params,
            &prices,
            p_r,
            &SweepSpec::default_for(SweepParam::MarginalUtility),
        )
        .unwrap();
        assert_eq!(rows.len(), 96);
        for w in rows.windows(2) {
            assert!(w[1].b_hat_star < w[0].b_hat_star);
        }
        for r in &rows {
            assert_eq!(r.b_hat_star, r.q_star_r0);
            assert_eq!(r.q_hat_star, r.q_star_r1);
        }
        assert!(rows.last().unwrap().normalized_baseline < 1.03);
    }
}
