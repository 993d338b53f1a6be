//! CSV emission. Numbers use nine significant digits in the style of C's
//! `%.9g`; rows end with `\n`.

use std::io::Write;

use anyhow::Result;
use dr_contract::sim::{ConsumerStats, TrialOutcome};
use dr_contract::SweepRow;

pub const SWEEP_HEADER: [&str; 9] = [
    "swept_param",
    "value",
    "b_hat_star",
    "q_hat_star",
    "q_star_r0",
    "q_star_r1",
    "expected_profit",
    "normalized_baseline",
    "regime",
];

pub const RECORDS_HEADER: [&str; 8] = [
    "trial",
    "consumer_id",
    "r",
    "b_hat",
    "q_hat",
    "q_actual",
    "payment",
    "profit",
];

pub const TRIALS_HEADER: [&str; 6] = [
    "trial",
    "seed",
    "called_count",
    "total_reduction",
    "total_payout",
    "under_provisioned",
];

pub const CONSUMERS_HEADER: [&str; 9] = [
    "consumer_id",
    "behavior",
    "call_probability",
    "call_frequency",
    "mean_profit",
    "profit_variance",
    "profit_std_error",
    "mean_payment",
    "mean_consumption",
];

const SIG: usize = 9;

/// `%.9g`: nine significant digits, trailing zeros dropped, exponent form
/// outside `1e-4 <= |x| < 1e9`. Negative zero prints as `0`.
pub fn g9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", SIG - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= SIG as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (SIG as i32 - 1 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

pub fn write_sweep<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.param.as_str().to_string(),
            g9(r.value),
            g9(r.b_hat_star),
            g9(r.q_hat_star),
            g9(r.q_star_r0),
            g9(r.q_star_r1),
            g9(r.expected_profit),
            g9(r.normalized_baseline),
            r.regime.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records<W: Write>(out: W, trials: &[TrialOutcome]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(RECORDS_HEADER)?;
    for t in trials {
        for rec in &t.records {
            w.write_record([
                t.trial.to_string(),
                rec.consumer_id.clone(),
                rec.r.bit().to_string(),
                g9(rec.report.b_hat()),
                g9(rec.report.q_hat()),
                g9(rec.q_actual),
                g9(rec.payment),
                g9(rec.profit),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_trials<W: Write>(out: W, trials: &[TrialOutcome]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(TRIALS_HEADER)?;
    for t in trials {
        let s = &t.summary;
        w.write_record([
            t.trial.to_string(),
            t.seed.to_string(),
            s.called_count.to_string(),
            g9(s.total_reduction),
            g9(s.total_payout),
            u8::from(s.under_provisioned).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_consumers<W: Write>(out: W, stats: &[ConsumerStats]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(CONSUMERS_HEADER)?;
    for s in stats {
        w.write_record([
            s.consumer_id.clone(),
            s.behavior.as_str().to_string(),
            g9(s.call_probability),
            g9(s.call_frequency),
            g9(s.mean_profit),
            g9(s.profit_variance),
            g9(s.profit_std_error),
            g9(s.mean_payment),
            g9(s.mean_consumption),
        ])?;
    }
    w.flush()?;
    Ok(())
}
