//! Scenario files: a single JSON document describing the market, the
//! sellers, detector overrides and the traffic scenario. Unknown keys are
//! rejected so typos fail loudly, and validation errors name the field.

use serde::Deserialize;
use shopbot_core::engine::{DetectorParams, EngineConfig, SellerSpec, Type1Drift};
use shopbot_core::market::{MarketConfig, Money, ValuationModel};
use shopbot_core::strategy::StrategyKind;
use shopbot_core::traffic::{CrawlerAgent, MetasiteConfig, TrafficSimConfig};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub market: Option<MarketSection>,
    #[serde(default)]
    pub sellers: Vec<SellerSection>,
    pub ticks: u64,
    pub seed: u64,
    #[serde(default)]
    pub detectors: DetectorSection,
    #[serde(default)]
    pub type1_drift: Option<DriftSection>,
    #[serde(default)]
    pub sampled_profits: bool,
    #[serde(default)]
    pub traffic: Option<TrafficSection>,
    #[serde(default)]
    pub policy_file: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    pub buyers_per_tick: u32,
    pub type1_fraction: f64,
    pub valuation: ValuationModel,
    pub price_tick: Money,
    pub price_max: Money,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellerSection {
    pub cost: Money,
    pub strategy: StrategyKind,
    #[serde(default)]
    pub initial_price: Option<Money>,
    #[serde(default = "default_weight")]
    pub update_weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub min_drop_run: Option<usize>,
    pub min_reset: Option<Money>,
    pub window: Option<usize>,
    pub margin: Option<Money>,
    pub cv_max: Option<f64>,
    pub competitive_margin: Option<Money>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSection {
    pub final_fraction: f64,
    pub over_ticks: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSection {
    #[serde(default)]
    pub agents: Vec<AgentSection>,
    pub threshold: u32,
    pub window: u64,
    #[serde(default = "default_capacity")]
    pub capacity_threshold: f64,
    #[serde(default)]
    pub humans_per_tick: u32,
    #[serde(default = "default_human_addresses")]
    pub human_addresses: u32,
    /// Window for the emitted load report; defaults to the whole run.
    #[serde(default)]
    pub load_window: Option<u64>,
    #[serde(default = "default_aggregate_counts")]
    pub aggregate_robot_counts: Vec<u32>,
    #[serde(default)]
    pub metasite: Option<MetasiteSection>,
}

fn default_capacity() -> f64 {
    0.25
}

fn default_human_addresses() -> u32 {
    100
}

fn default_aggregate_counts() -> Vec<u32> {
    vec![1, 5, 10, 20, 50]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub token: String,
    pub origin: String,
    #[serde(default)]
    pub proxy: Option<String>,
    pub rate: u32,
    pub compliant: bool,
    #[serde(default = "default_purpose")]
    pub purpose: String,
    #[serde(default)]
    pub paths: Vec<String>,
}

fn default_purpose() -> String {
    "unspecified".to_string()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetasiteSection {
    pub sellers: u32,
    #[serde(default)]
    pub refresh_period: Option<u64>,
    #[serde(default)]
    pub vendor_robot: bool,
}

impl ScenarioConfig {
    pub fn load(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("config: {e}"))
    }

    /// Assemble the engine config for `simulate`; errors name the field.
    pub fn engine_config(&self) -> Result<EngineConfig, String> {
        let market_section = self
            .market
            .as_ref()
            .ok_or_else(|| "market: section required for simulation".to_string())?;
        if self.sellers.is_empty() {
            return Err("sellers: at least one seller required".to_string());
        }
        let market = MarketConfig {
            num_sellers: self.sellers.len(),
            buyers_per_tick: market_section.buyers_per_tick,
            type1_fraction: market_section.type1_fraction,
            valuation: market_section.valuation,
            price_tick: market_section.price_tick,
            price_max: market_section.price_max,
        };
        let sellers = self
            .sellers
            .iter()
            .map(|s| SellerSpec {
                marginal_cost: s.cost,
                strategy: s.strategy,
                initial_price: s.initial_price,
                update_weight: s.update_weight,
            })
            .collect();
        let mut config = EngineConfig::new(market, sellers);
        let d = &self.detectors;
        let defaults = config.detectors;
        config.detectors = DetectorParams {
            min_drop_run: d.min_drop_run.unwrap_or(defaults.min_drop_run),
            min_reset: d.min_reset.unwrap_or(defaults.min_reset),
            window: d.window.unwrap_or(defaults.window),
            margin: d.margin.unwrap_or(defaults.margin),
            cv_max: d.cv_max.unwrap_or(defaults.cv_max),
            competitive_margin: d.competitive_margin.unwrap_or(defaults.competitive_margin),
        };
        config.type1_drift = self.type1_drift.as_ref().map(|d| Type1Drift {
            final_fraction: d.final_fraction,
            over_ticks: d.over_ticks,
        });
        config.sampled_profits = self.sampled_profits;
        config.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }

    /// Assemble the traffic scenario for `traffic`.
    pub fn traffic_config(
        &self,
        policy: Option<shopbot_core::exclusion::ExclusionPolicy>,
    ) -> Result<TrafficSimConfig, String> {
        let section = self
            .traffic
            .as_ref()
            .ok_or_else(|| "traffic: section required for traffic scenarios".to_string())?;
        let agents = section
            .agents
            .iter()
            .enumerate()
            .map(|(id, a)| CrawlerAgent {
                id,
                agent_token: a.token.clone(),
                origin_address: a.origin.clone(),
                proxy_address: a.proxy.clone(),
                rate: a.rate,
                compliant: a.compliant,
                declared_purpose: a.purpose.clone(),
                paths: a.paths.clone(),
            })
            .collect();
        Ok(TrafficSimConfig {
            agents,
            threshold: section.threshold,
            window: section.window,
            capacity_threshold: section.capacity_threshold,
            humans_per_tick: section.humans_per_tick,
            human_addresses: section.human_addresses,
            ticks: self.ticks,
            policy,
        })
    }

    pub fn metasite_config(&self) -> Option<MetasiteConfig> {
        self.traffic
            .as_ref()
            .and_then(|t| t.metasite.as_ref())
            .map(|m| MetasiteConfig {
                sellers: m.sellers,
                refresh_period: m.refresh_period,
                vendor_robot: m.vendor_robot,
            })
    }
}
