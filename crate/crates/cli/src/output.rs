//! Deterministic artifact writers. No timestamps, no map iteration order:
//! rerunning a scenario with the same inputs produces byte-identical files.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use shopbot_core::engine::{RunOutcome, TickRecord};
use shopbot_core::market::MarketConfig;
use shopbot_core::traffic::{LoadReport, MetasiteReport, TrafficLedger};

/// Decimal places needed to print grid prices exactly (e.g. 2 for a 0.01
/// tick).
pub fn tick_decimals(tick: f64) -> usize {
    for d in 0..=9usize {
        let scaled = tick * 10f64.powi(d as i32);
        if (scaled - scaled.round()).abs() < 1e-6 * scaled.max(1.0) && scaled >= 0.999 {
            return d;
        }
    }
    6
}

pub fn write_prices_csv(
    path: &Path,
    series: &[TickRecord],
    market: &MarketConfig,
) -> std::io::Result<()> {
    let mut out = String::from("tick,seller_id,price,profit\n");
    let decimals = tick_decimals(market.price_tick);
    for (tick, record) in series.iter().enumerate() {
        for (seller, (&price, &profit)) in record.prices.iter().zip(&record.profits).enumerate() {
            out.push_str(&format!(
                "{tick},{seller},{:.dp$},{profit:.6}\n",
                market.money(price),
                dp = decimals
            ));
        }
    }
    fs::write(path, out)
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    seed: u64,
    ticks: u64,
    regime: &'a shopbot_core::engine::RegimeReport,
    dispersion: Option<&'a shopbot_core::market::PriceDispersion>,
    consumer_surplus: f64,
    per_seller_mean_profit: &'a [f64],
}

pub fn write_summary_json(path: &Path, outcome: &RunOutcome) -> std::io::Result<()> {
    let doc = SummaryDoc {
        seed: outcome.summary.seed,
        ticks: outcome.summary.ticks,
        regime: &outcome.regime,
        dispersion: outcome.summary.dispersion.as_ref(),
        consumer_surplus: outcome.summary.consumer_surplus,
        per_seller_mean_profit: &outcome.summary.per_seller_mean_profit,
    };
    write_json(path, &doc)
}

pub fn write_events_csv(path: &Path, ledger: &TrafficLedger) -> std::io::Result<()> {
    let mut out = String::from("tick,address,agent,path,outcome\n");
    for event in &ledger.events {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            event.tick,
            event.address,
            event.agent,
            event.path,
            event.outcome.as_str()
        ));
    }
    fs::write(path, out)
}

#[derive(Serialize)]
pub struct AggregateRow {
    pub robot_count: u32,
    pub per_robot_fraction: f64,
    pub robot_fraction: f64,
    pub harm_flag: bool,
}

#[derive(Serialize)]
pub struct LoadDoc {
    pub load: LoadReport,
    pub aggregate: Vec<AggregateRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metasite: Option<MetasiteReport>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut file = fs::File::create(path)?;
    let text = serde_json::to_string_pretty(value).expect("serializable document");
    file.write_all(text.as_bytes())?;
    file.write_all(b"\n")
}
