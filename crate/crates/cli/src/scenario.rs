//! Scenario files.
//!
//! A scenario is a TOML document with unit-suffixed keys. Consumers are
//! listed inline as `[[consumers]]` tables or loaded from a separate file
//! named by `consumers_file` (resolved relative to the scenario), which
//! holds the same `[[consumers]]` tables. The two forms are exclusive.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dr_contract::sweep::{SweepParam, SweepSpec};
use dr_contract::{
    BehaviorModel, Behaviors, CallProbability, ConsumerParams, Portfolio, PortfolioEntry, Prices,
    DEFAULT_GRID_STEP,
};
use serde::Deserialize;
use sha2::{Digest, Sha256};

pub const BUNDLED: &str = include_str!("../scenarios/default.toml");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    energy_price_usd_per_kwh: f64,
    incentive_price_usd_per_kwh: f64,
    #[serde(default)]
    consumers: Vec<RawConsumer>,
    consumers_file: Option<PathBuf>,
    sweep: Option<RawSweep>,
    trials: Option<usize>,
    seed: Option<u64>,
    grid_step_kwh: Option<f64>,
    reduction_target_kwh: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConsumerFile {
    consumers: Vec<RawConsumer>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConsumer {
    id: String,
    baseline_kwh: f64,
    marginal_utility_usd_per_kwh2: f64,
    max_consumption_kwh: f64,
    call_probability: f64,
    behavior: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    param: String,
    from: Option<f64>,
    to: Option<f64>,
    steps: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub portfolio: Portfolio,
    pub behaviors: Behaviors,
    pub sweep: SweepSpec,
    pub trials: usize,
    pub seed: u64,
    pub grid_step: f64,
    pub reduction_target: f64,
    /// Hex SHA-256 of the scenario bytes (and the consumers file, if any).
    pub hash: String,
}

impl Scenario {
    pub fn load(path: Option<&Path>) -> Result<Scenario> {
        match path {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading scenario {}", path.display()))?;
                Scenario::parse(&text, path.parent())
                    .with_context(|| format!("invalid scenario {}", path.display()))
            }
            None => Scenario::parse(BUNDLED, None).context("invalid bundled scenario"),
        }
    }

    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Scenario> {
        let raw: RawScenario = toml::from_str(text)?;
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());

        let consumers = match (&raw.consumers_file, raw.consumers.is_empty()) {
            (Some(_), false) => bail!("give consumers inline or via consumers_file, not both"),
            (Some(file), true) => {
                let path = base_dir.unwrap_or(Path::new(".")).join(file);
                let body = fs::read_to_string(&path)
                    .with_context(|| format!("reading consumers file {}", path.display()))?;
                hasher.update(body.as_bytes());
                let parsed: RawConsumerFile = toml::from_str(&body)
                    .with_context(|| format!("invalid consumers file {}", path.display()))?;
                parsed.consumers
            }
            (None, _) => raw.consumers,
        };
        if consumers.is_empty() {
            bail!("scenario has no consumers");
        }

        let prices = Prices::new(
            raw.energy_price_usd_per_kwh,
            raw.incentive_price_usd_per_kwh,
        )?;
        let mut entries = Vec::with_capacity(consumers.len());
        let mut behaviors = Behaviors::new();
        for c in consumers {
            let params = ConsumerParams::new(
                c.baseline_kwh,
                c.marginal_utility_usd_per_kwh2,
                c.max_consumption_kwh,
            )
            .with_context(|| format!("consumer `{}`", c.id))?;
            let call_probability = CallProbability::new(c.call_probability)
                .with_context(|| format!("consumer `{}`", c.id))?;
            let behavior = match &c.behavior {
                Some(b) => b
                    .parse::<BehaviorModel>()
                    .map_err(anyhow::Error::msg)
                    .with_context(|| format!("consumer `{}`", c.id))?,
                None => BehaviorModel::Rational,
            };
            behaviors.insert(c.id.clone(), behavior);
            entries.push(PortfolioEntry {
                id: c.id,
                params,
                call_probability,
            });
        }
        let portfolio = Portfolio::new(entries, prices)?;

        let sweep = match raw.sweep {
            Some(s) => {
                let param: SweepParam = s.param.parse()?;
                let d = SweepSpec::default_for(param);
                SweepSpec {
                    param,
                    from: s.from.unwrap_or(d.from),
                    to: s.to.unwrap_or(d.to),
                    steps: s.steps.unwrap_or(d.steps),
                }
            }
            None => SweepSpec::default_for(SweepParam::CallProbability),
        };
        sweep.validate()?;

        let trials = raw.trials.unwrap_or(1000);
        if trials == 0 {
            bail!("trials must be at least 1");
        }
        let grid_step = raw.grid_step_kwh.unwrap_or(DEFAULT_GRID_STEP);
        if !(grid_step.is_finite() && grid_step > 0.0) {
            bail!("grid_step_kwh must be positive, got {grid_step}");
        }
        let reduction_target = raw.reduction_target_kwh.unwrap_or(0.0);
        if !(reduction_target.is_finite() && reduction_target >= 0.0) {
            bail!("reduction_target_kwh must be non-negative, got {reduction_target}");
        }

        Ok(Scenario {
            portfolio,
            behaviors,
            sweep,
            trials,
            seed: raw.seed.unwrap_or(0),
            grid_step,
            reduction_target,
            hash: hex::encode(hasher.finalize()),
        })
    }

    /// First consumer; sweeps are evaluated for it.
    pub fn lead(&self) -> &PortfolioEntry {
        &self.portfolio.entries()[0]
    }
}
