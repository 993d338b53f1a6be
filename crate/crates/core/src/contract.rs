//! Domain types of the probability-of-call contract together with the
//! consumer utility and the two-branch payment scheme.
//!
//! Energies are in kWh, money in $, the marginal utility `gamma` in $/kWh².
//! A negative payment means a net transfer from the aggregator to the
//! consumer.

use std::fmt;

use crate::error::{ContractError, Result};

/// Energy price `p` and incentive/penalty price `p2` ($/kWh).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prices {
    energy: f64,
    incentive: f64,
}

impl Prices {
    /// Requires `0 <= p <= p2` and `p2 > 0`.
    pub fn new(energy: f64, incentive: f64) -> Result<Self> {
        if !energy.is_finite() || !incentive.is_finite() {
            return Err(ContractError::InvalidPrices(format!(
                "prices must be finite (p = {energy}, p2 = {incentive})"
            )));
        }
        if energy < 0.0 {
            return Err(ContractError::InvalidPrices(format!(
                "energy price p = {energy} must be non-negative"
            )));
        }
        if incentive < energy {
            return Err(ContractError::InvalidPrices(format!(
                "incentive price p2 = {incentive} must be at least the energy price p = {energy}"
            )));
        }
        if incentive <= 0.0 {
            return Err(ContractError::InvalidPrices(
                "incentive price p2 must be positive".into(),
            ));
        }
        Ok(Prices { energy, incentive })
    }

    /// Energy price `p`.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Incentive (and deviation penalty) price `p2`.
    pub fn incentive(&self) -> f64 {
        self.incentive
    }
}

/// Private type of one consumer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsumerParams {
    baseline: f64,
    marginal_utility: f64,
    max_consumption: f64,
}

impl ConsumerParams {
    pub fn new(baseline: f64, marginal_utility: f64, max_consumption: f64) -> Result<Self> {
        for (name, v) in [
            ("baseline b", baseline),
            ("marginal utility gamma", marginal_utility),
            ("max consumption q_max", max_consumption),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(ContractError::InvalidParams(format!(
                    "{name} = {v} must be finite and positive"
                )));
            }
        }
        Ok(ConsumerParams {
            baseline,
            marginal_utility,
            max_consumption,
        })
    }

    /// True baseline `b`.
    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    /// Marginal utility `gamma`.
    pub fn marginal_utility(&self) -> f64 {
        self.marginal_utility
    }

    /// Consumption cap `q_max`.
    pub fn max_consumption(&self) -> f64 {
        self.max_consumption
    }

    /// Copy with a different marginal utility; used by gamma sweeps.
    pub fn with_marginal_utility(&self, marginal_utility: f64) -> Result<Self> {
        ConsumerParams::new(self.baseline, marginal_utility, self.max_consumption)
    }

    /// Consumption `b + p/gamma` beyond which marginal utility is zero.
    pub fn saturation(&self, prices: &Prices) -> f64 {
        self.baseline + prices.energy / self.marginal_utility
    }

    /// Committed reduced consumption `(b - p2/gamma)+`.
    pub fn reduced_consumption(&self, prices: &Prices) -> f64 {
        (self.baseline - prices.incentive / self.marginal_utility).max(0.0)
    }

    /// Checks `q_max > b + p/gamma`. Kept out of [`ConsumerParams::new`]
    /// because it couples the consumer with the prices.
    pub fn check_saturation(&self, prices: &Prices) -> Result<()> {
        let saturation = self.saturation(prices);
        if self.max_consumption > saturation {
            Ok(())
        } else {
            Err(ContractError::Saturation {
                q_max: self.max_consumption,
                saturation,
            })
        }
    }
}

/// Stage-1 announcement: reported baseline `b_hat` and reduced consumption
/// `q_hat` the consumer commits to if called.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Report {
    b_hat: f64,
    q_hat: f64,
}

impl Report {
    /// Requires `0 <= q_hat <= b_hat <= q_max`.
    pub fn new(b_hat: f64, q_hat: f64, params: &ConsumerParams) -> Result<Self> {
        if !b_hat.is_finite() || !q_hat.is_finite() {
            return Err(ContractError::InvalidReport(format!(
                "non-finite report ({b_hat}, {q_hat})"
            )));
        }
        if q_hat < 0.0 || q_hat > b_hat || b_hat > params.max_consumption {
            return Err(ContractError::InvalidReport(format!(
                "need 0 <= q_hat <= b_hat <= q_max, got q_hat = {q_hat}, b_hat = {b_hat}, q_max = {}",
                params.max_consumption
            )));
        }
        Ok(Report { b_hat, q_hat })
    }

    pub(crate) fn new_unchecked(b_hat: f64, q_hat: f64) -> Self {
        Report { b_hat, q_hat }
    }

    pub fn b_hat(&self) -> f64 {
        self.b_hat
    }

    pub fn q_hat(&self) -> f64 {
        self.q_hat
    }
}

/// Aggregator decision `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CallSignal {
    NotCalled,
    Called,
}

impl CallSignal {
    pub fn from_bit(bit: u8) -> Result<Self> {
        match bit {
            0 => Ok(CallSignal::NotCalled),
            1 => Ok(CallSignal::Called),
            other => Err(ContractError::InvalidSignal(other)),
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            CallSignal::NotCalled => 0,
            CallSignal::Called => 1,
        }
    }

    pub fn is_called(self) -> bool {
        self == CallSignal::Called
    }
}

impl fmt::Display for CallSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bit())
    }
}

/// Contractual probability `p_r` that a consumer is called.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct CallProbability(f64);

impl CallProbability {
    pub fn new(p: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&p) {
            Ok(CallProbability(p))
        } else {
            Err(ContractError::InvalidProbability(p))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn quadratic_utility(q: f64, params: &ConsumerParams, prices: &Prices) -> f64 {
    let g = params.marginal_utility;
    -0.5 * g * q * q + (g * params.baseline + prices.energy) * q
}

fn saturated_utility(params: &ConsumerParams, prices: &Prices) -> f64 {
    let (b, g, p) = (params.baseline, params.marginal_utility, prices.energy);
    p * p / (2.0 * g) + g * b * b / 2.0 + p * b
}

/// Utility without the domain check; hot path for the oracle.
#[inline]
pub(crate) fn utility_unchecked(q: f64, params: &ConsumerParams, prices: &Prices) -> f64 {
    // The saturated constant is used from the breakpoint on, so flat
    // stretches of the objective compare exactly equal.
    if q < params.saturation(prices) {
        quadratic_utility(q, params, prices)
    } else {
        saturated_utility(params, prices)
    }
}

/// Quadratic utility `G(q)`, capped at its value at the saturation point.
pub fn utility(q: f64, params: &ConsumerParams, prices: &Prices) -> Result<f64> {
    if q < 0.0 || !q.is_finite() {
        return Err(ContractError::Domain {
            what: "consumption q",
            value: q,
            domain: "[0, inf)".into(),
        });
    }
    Ok(utility_unchecked(q, params, prices))
}

fn no_dr_value(baseline: f64, marginal_utility: f64) -> f64 {
    marginal_utility * baseline * baseline / 2.0
}

/// Best payoff `gamma b^2 / 2` of a consumer outside the programme.
pub fn payoff_no_dr(params: &ConsumerParams) -> f64 {
    no_dr_value(params.baseline, params.marginal_utility)
}

/// Consumption of a truthful consumer: `b` when not called,
/// `(b - p2/gamma)+` when called.
pub fn ideal_consumption(params: &ConsumerParams, prices: &Prices, r: CallSignal) -> f64 {
    match r {
        CallSignal::NotCalled => params.baseline,
        CallSignal::Called => params.reduced_consumption(prices),
    }
}

/// Payment when not called: the consumer buys `max(b_hat, q)`.
pub fn payment_not_called(q: f64, b_hat: f64, prices: &Prices) -> f64 {
    prices.energy * b_hat.max(q)
}

/// Payment when called: energy cost, minus the rebate on `(b_hat - q)+`,
/// plus the penalty on `|q - q_hat|`.
pub fn payment_called(q: f64, report: &Report, prices: &Prices) -> f64 {
    prices.energy * q - prices.incentive * (report.b_hat - q).max(0.0)
        + prices.incentive * (q - report.q_hat).abs()
}

pub fn payment(q: f64, report: &Report, r: CallSignal, prices: &Prices) -> f64 {
    match r {
        CallSignal::NotCalled => payment_not_called(q, report.b_hat, prices),
        CallSignal::Called => payment_called(q, report, prices),
    }
}

#[inline]
pub(crate) fn stage2_profit_unchecked(
    q: f64,
    report: &Report,
    r: CallSignal,
    params: &ConsumerParams,
    prices: &Prices,
) -> f64 {
    utility_unchecked(q, params, prices) - payment(q, report, r, prices)
}

/// Realised profit `G(q) - payment` for consumption `q` in `[0, q_max]`.
pub fn stage2_profit(
    q: f64,
    report: &Report,
    r: CallSignal,
    params: &ConsumerParams,
    prices: &Prices,
) -> Result<f64> {
    if !(0.0..=params.max_consumption).contains(&q) {
        return Err(ContractError::Domain {
            what: "consumption q",
            value: q,
            domain: format!("[0, {}]", params.max_consumption),
        });
    }
    Ok(stage2_profit_unchecked(q, report, r, params, prices))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sec6() -> (ConsumerParams, Prices) {
        (
            ConsumerParams::new(8.0, 0.05, 16.0).unwrap(),
            Prices::new(0.26, 0.3).unwrap(),
        )
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn price_validation() {
        assert!(Prices::new(0.26, 0.3).is_ok());
        assert!(Prices::new(0.3, 0.3).is_ok());
        assert!(Prices::new(0.0, 0.3).is_ok());
        assert!(Prices::new(-0.1, 0.3).is_err());
        assert!(Prices::new(0.3, 0.26).is_err());
        assert!(Prices::new(0.0, 0.0).is_err());
        assert!(Prices::new(f64::NAN, 0.3).is_err());
    }

    #[test]
    fn param_and_report_validation() {
        assert!(ConsumerParams::new(0.0, 0.05, 16.0).is_err());
        assert!(ConsumerParams::new(8.0, -0.05, 16.0).is_err());
        assert!(ConsumerParams::new(8.0, 0.05, f64::INFINITY).is_err());
        let (params, prices) = sec6();
        assert!(params.check_saturation(&prices).is_ok());
        let tight = ConsumerParams::new(8.0, 0.05, 13.2).unwrap();
        assert!(matches!(
            tight.check_saturation(&prices),
            Err(ContractError::Saturation { .. })
        ));
        assert!(Report::new(8.0, 2.0, &params).is_ok());
        assert!(Report::new(2.0, 8.0, &params).is_err());
        assert!(Report::new(17.0, 2.0, &params).is_err());
        assert!(Report::new(8.0, -1.0, &params).is_err());
    }

    #[test]
    fn signal_and_probability() {
        assert_eq!(CallSignal::from_bit(0).unwrap(), CallSignal::NotCalled);
        assert_eq!(CallSignal::from_bit(1).unwrap().bit(), 1);
        assert!(CallSignal::from_bit(2).is_err());
        assert!(CallProbability::new(0.0).is_ok());
        assert!(CallProbability::new(1.0).is_ok());
        assert!(CallProbability::new(1.01).is_err());
        assert!(CallProbability::new(f64::NAN).is_err());
    }

    #[test]
    fn utility_examples() {
        let (params, prices) = sec6();
        assert_eq!(utility(0.0, &params, &prices).unwrap(), 0.0);
        assert!(close(utility(8.0, &params, &prices).unwrap(), 3.68));
        let s = params.saturation(&prices);
        assert!(close(s, 13.2));
        assert!(close(quadratic_utility(s, &params, &prices), 4.356));
        assert!(close(saturated_utility(&params, &prices), 4.356));
        assert!(close(utility(s, &params, &prices).unwrap(), 4.356));
        assert!(close(utility(15.0, &params, &prices).unwrap(), 4.356));
        assert!(matches!(
            utility(-1.0, &params, &prices),
            Err(ContractError::Domain { .. })
        ));
    }

    #[test]
    fn utility_continuous_and_flat_at_saturation() {
        let (params, prices) = sec6();
        let s = params.saturation(&prices);
        let left = quadratic_utility(s, &params, &prices);
        let right = saturated_utility(&params, &prices);
        assert!((left - right).abs() < 1e-12);
        let h = 1e-6;
        let slope = (utility(s + h, &params, &prices).unwrap()
            - utility(s - h, &params, &prices).unwrap())
            / (2.0 * h);
        assert!(slope.abs() < 1e-6, "slope {slope}");
    }

    #[test]
    fn utility_nondecreasing_and_concave_on_grid() {
        let (params, prices) = sec6();
        let n = 16_000;
        let h = params.max_consumption() / n as f64;
        let g: Vec<f64> = (0..=n)
            .map(|i| utility(i as f64 * h, &params, &prices).unwrap())
            .collect();
        let diffs: Vec<f64> = g.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(diffs.iter().all(|d| *d >= -1e-12));
        assert!(diffs.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn no_dr_payoff() {
        let (params, _) = sec6();
        assert!(close(payoff_no_dr(&params), 1.6));
        assert_eq!(no_dr_value(0.0, 0.05), 0.0);
        let other = ConsumerParams::new(4.0, 0.1, 10.0).unwrap();
        assert!(close(payoff_no_dr(&other), 0.8));
    }

    #[test]
    fn ideal_consumption_examples() {
        let (params, prices) = sec6();
        assert_eq!(
            ideal_consumption(&params, &prices, CallSignal::NotCalled),
            8.0
        );
        assert!(close(
            ideal_consumption(&params, &prices, CallSignal::Called),
            2.0
        ));
        let small = ConsumerParams::new(1.0, 0.05, 16.0).unwrap();
        assert_eq!(ideal_consumption(&small, &prices, CallSignal::Called), 0.0);
    }

    #[test]
    fn payment_examples() {
        let (params, prices) = sec6();
        assert!(close(payment_not_called(8.0, 10.0, &prices), 2.6));
        assert!(close(payment_not_called(8.0, 8.0, &prices), 2.08));
        assert!(close(payment_not_called(9.0, 6.0, &prices), 2.34));
        let report = Report::new(8.0, 2.0, &params).unwrap();
        assert!(close(payment_called(2.0, &report, &prices), -1.28));
        assert!(close(payment_called(4.0, &report, &prices), 0.44));
        assert!(close(payment_called(8.0, &report, &prices), 3.88));
    }

    #[test]
    fn payment_reductions() {
        let (params, prices) = sec6();
        for (q, b_hat) in [(3.0, 7.0), (7.0, 3.0), (5.5, 5.5)] {
            assert_eq!(
                payment_not_called(q, b_hat, &prices),
                payment_not_called(b_hat, q, &prices)
            );
        }
        let report = Report::new(6.0, 6.0, &params).unwrap();
        assert!(close(payment_called(6.0, &report, &prices), 0.26 * 6.0));
    }

    #[test]
    fn stage2_profit_examples() {
        let (params, prices) = sec6();
        let report = Report::new(8.0, 2.0, &params).unwrap();
        let called = stage2_profit(2.0, &report, CallSignal::Called, &params, &prices).unwrap();
        assert!(close(called, 2.5));
        let idle = stage2_profit(8.0, &report, CallSignal::NotCalled, &params, &prices).unwrap();
        assert!(close(idle, 1.6));
        let zero = stage2_profit(0.0, &report, CallSignal::NotCalled, &params, &prices).unwrap();
        assert!(close(zero, -2.08));
        assert!(stage2_profit(16.5, &report, CallSignal::Called, &params, &prices).is_err());
        assert!(stage2_profit(-0.1, &report, CallSignal::Called, &params, &prices).is_err());
    }

    #[test]
    fn payoffs_finite_on_square() {
        let (params, prices) = sec6();
        let report = Report::new(16.0, 0.0, &params).unwrap();
        for i in 0..=160 {
            let q = i as f64 * 0.1;
            for r in [CallSignal::NotCalled, CallSignal::Called] {
                assert!(stage2_profit(q, &report, r, &params, &prices)
                    .unwrap()
                    .is_finite());
            }
        }
    }
}
