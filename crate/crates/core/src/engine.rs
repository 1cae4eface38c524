//! Deterministic discrete-time market loop with regime detection.
//!
//! Each tick exactly one seller, picked by a seeded weighted draw, applies
//! its pricing strategy; every seller's expected profit at the resulting
//! price vector is then recorded. The emitted price series is classified
//! into price-war, collusive or competitive regimes by the detectors at the
//! bottom of this module.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::market::{
    price_dispersion, GridPrice, MarketConfig, MarketError, Money, PriceDispersion, Seller,
};
use crate::strategy::{derivative_follower_step, myopic_best_response, StrategyKind};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("invalid config: {field}: {message}")]
    InvalidConfig { field: &'static str, message: String },
    #[error("price series of length {len} is shorter than the detector window {window}")]
    SeriesTooShort { len: usize, window: usize },
}

fn config_err(field: &'static str, message: impl Into<String>) -> EngineError {
    EngineError::InvalidConfig {
        field,
        message: message.into(),
    }
}

/// Static description of one seller fed into the engine.
#[derive(Debug, Clone, PartialEq)]
pub struct SellerSpec {
    pub marginal_cost: Money,
    pub strategy: StrategyKind,
    /// Starting quote; defaults to `price_max`, the monopoly anchor.
    pub initial_price: Option<Money>,
    /// Relative chance of being the seller that updates on a given tick.
    pub update_weight: f64,
}

impl SellerSpec {
    pub fn new(marginal_cost: Money, strategy: StrategyKind) -> Self {
        SellerSpec {
            marginal_cost,
            strategy,
            initial_price: None,
            update_weight: 1.0,
        }
    }
}

/// Optional linear shift of the captive-buyer fraction over a run, for
/// studying a gradual migration of buyers onto comparison shopping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Type1Drift {
    pub final_fraction: f64,
    pub over_ticks: u64,
}

/// Thresholds for the regime detectors. Defaults are derived from the
/// price grid; see [`DetectorParams::defaults_for`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    /// Minimum nonincreasing run (in ticks) before a reset counts.
    pub min_drop_run: usize,
    /// Minimum upward jump of the market-minimum price to count as a reset.
    pub min_reset: Money,
    /// Trailing window for the collusion and competitive checks.
    pub window: usize,
    /// Collusion needs the window mean at least this far above cost.
    pub margin: Money,
    /// Collusion needs the window coefficient of variation at or below this.
    pub cv_max: f64,
    /// Competitive collapse allows prices at most this far above cost.
    pub competitive_margin: Money,
}

impl DetectorParams {
    pub fn defaults_for(market: &MarketConfig) -> Self {
        DetectorParams {
            min_drop_run: 3,
            min_reset: 10.0 * market.price_tick,
            window: 500,
            margin: 5.0 * market.price_tick,
            cv_max: 0.02,
            competitive_margin: 2.0 * market.price_tick,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub market: MarketConfig,
    pub sellers: Vec<SellerSpec>,
    pub detectors: DetectorParams,
    pub type1_drift: Option<Type1Drift>,
    /// Record sampled finite-buyer profits instead of expectations; the
    /// derivative follower then steers on noisy observations.
    pub sampled_profits: bool,
}

impl EngineConfig {
    pub fn new(market: MarketConfig, sellers: Vec<SellerSpec>) -> Self {
        let detectors = DetectorParams::defaults_for(&market);
        EngineConfig {
            market,
            sellers,
            detectors,
            type1_drift: None,
            sampled_profits: false,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        self.market.validate()?;
        if self.sellers.len() != self.market.num_sellers {
            return Err(config_err(
                "sellers",
                format!(
                    "num_sellers is {} but {} seller specs were given",
                    self.market.num_sellers,
                    self.sellers.len()
                ),
            ));
        }
        let mut total_weight = 0.0;
        for (i, spec) in self.sellers.iter().enumerate() {
            self.market
                .to_ticks(spec.marginal_cost)
                .map_err(|e| config_err("sellers.cost", format!("seller {i}: {e}")))?;
            if spec.update_weight < 0.0 || !spec.update_weight.is_finite() {
                return Err(config_err(
                    "sellers.update_weight",
                    format!("seller {i}: weight must be nonnegative, got {}", spec.update_weight),
                ));
            }
            total_weight += spec.update_weight;
            if let Some(p) = spec.initial_price {
                self.market
                    .to_ticks(p)
                    .map_err(|e| config_err("sellers.initial_price", format!("seller {i}: {e}")))?;
            }
            match spec.strategy {
                StrategyKind::Fixed { price } => {
                    self.market
                        .to_ticks(price)
                        .map_err(|e| config_err("sellers.strategy.price", format!("seller {i}: {e}")))?;
                }
                StrategyKind::DerivativeFollower { step, .. } => {
                    let ticks = self
                        .market
                        .to_ticks(step)
                        .map_err(|e| config_err("sellers.strategy.step", format!("seller {i}: {e}")))?;
                    if ticks == 0 {
                        return Err(config_err(
                            "sellers.strategy.step",
                            format!("seller {i}: step must be at least one price tick"),
                        ));
                    }
                }
                StrategyKind::MyopicOptimal => {}
            }
        }
        if total_weight <= 0.0 {
            return Err(config_err(
                "sellers.update_weight",
                "at least one seller needs a positive update weight",
            ));
        }
        if let Some(drift) = self.type1_drift {
            if !(0.0..=1.0).contains(&drift.final_fraction) {
                return Err(config_err(
                    "type1_drift.final_fraction",
                    format!("must lie in [0, 1], got {}", drift.final_fraction),
                ));
            }
            if drift.over_ticks == 0 {
                return Err(config_err("type1_drift.over_ticks", "must be positive"));
            }
        }
        Ok(())
    }

    /// Captive-buyer fraction in force at a given tick.
    fn type1_fraction_at(&self, tick: u64) -> f64 {
        match self.type1_drift {
            None => self.market.type1_fraction,
            Some(drift) => {
                let progress = (tick as f64 / drift.over_ticks as f64).min(1.0);
                self.market.type1_fraction
                    + (drift.final_fraction - self.market.type1_fraction) * progress
            }
        }
    }

    fn market_at(&self, tick: u64) -> MarketConfig {
        let mut market = self.market.clone();
        market.type1_fraction = self.type1_fraction_at(tick);
        market
    }
}

/// What the engine records for a single tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub prices: Vec<GridPrice>,
    pub profits: Vec<Money>,
    /// Price-discovery queries issued by the updating seller this tick
    /// (one when a myopic seller polls the metasite, zero otherwise).
    pub queries: u32,
}

/// Evolving state of a simulation run.
#[derive(Debug, Clone)]
pub struct MarketState {
    pub tick: u64,
    pub sellers: Vec<Seller>,
    pub cumulative_profit: Vec<Money>,
    pub series: Vec<TickRecord>,
    last_tick_profits: Vec<Money>,
    rng: ChaCha8Rng,
}

impl MarketState {
    pub fn new(
        config: &EngineConfig,
        seed: u64,
        initial_prices: Option<&[Money]>,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        let market = &config.market;
        let prices: Vec<GridPrice> = match initial_prices {
            Some(given) => {
                if given.len() != market.num_sellers {
                    return Err(config_err(
                        "initial_prices",
                        format!("expected {} prices, got {}", market.num_sellers, given.len()),
                    ));
                }
                market.to_ticks_vec(given)?
            }
            None => config
                .sellers
                .iter()
                .map(|spec| match spec.initial_price {
                    Some(p) => market.to_ticks(p),
                    None => Ok(market.max_ticks()),
                })
                .collect::<Result<_, _>>()?,
        };
        let initial_market = config.market_at(0);
        let mut profits = Vec::with_capacity(market.num_sellers);
        for s in 0..market.num_sellers {
            profits.push(initial_market.profit(s, &prices, config.sellers[s].marginal_cost)?);
        }
        let sellers = config
            .sellers
            .iter()
            .enumerate()
            .map(|(id, spec)| Seller {
                id,
                marginal_cost: spec.marginal_cost,
                strategy: spec.strategy,
                current_price: prices[id],
                last_profit: profits[id],
            })
            .collect();
        Ok(MarketState {
            tick: 0,
            sellers,
            cumulative_profit: vec![0.0; market.num_sellers],
            series: Vec::new(),
            last_tick_profits: profits,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn prices(&self) -> Vec<GridPrice> {
        self.sellers.iter().map(|s| s.current_price).collect()
    }
}

/// Sample realized per-seller demand by simulating each buyer individually.
fn sample_demand(market: &MarketConfig, prices: &[GridPrice], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut units = vec![0.0; market.num_sellers];
    let min = *prices.iter().min().expect("non-empty prices");
    let at_min: Vec<usize> = (0..prices.len()).filter(|&s| prices[s] == min).collect();
    for _ in 0..market.buyers_per_tick {
        let valuation = market.valuation.sample(rng);
        if rng.gen::<f64>() < market.type1_fraction {
            let s = rng.gen_range(0..market.num_sellers);
            if market.money(prices[s]) <= valuation {
                units[s] += 1.0;
            }
        } else if market.money(min) <= valuation {
            let s = at_min[rng.gen_range(0..at_min.len())];
            units[s] += 1.0;
        }
    }
    units
}

/// Advance the state by one tick: one weighted-randomly chosen seller
/// applies its strategy, then every seller's profit at the new price
/// vector is recorded. Deterministic given the state (which owns the
/// seeded generator).
pub fn step(state: &mut MarketState, config: &EngineConfig) -> Result<(), EngineError> {
    let market = config.market_at(state.tick);

    let total_weight: f64 = config.sellers.iter().map(|s| s.update_weight).sum();
    let draw = state.rng.gen::<f64>() * total_weight;
    let mut acc = 0.0;
    let mut updating = config.sellers.len() - 1;
    for (i, spec) in config.sellers.iter().enumerate() {
        acc += spec.update_weight;
        if draw < acc {
            updating = i;
            break;
        }
    }

    let mut queries = 0;
    let prices = state.prices();
    match state.sellers[updating].strategy {
        StrategyKind::Fixed { price } => {
            state.sellers[updating].current_price = market.to_ticks(price)?;
        }
        StrategyKind::MyopicOptimal => {
            // A myopic seller polls the metasite for rival quotes first.
            queries = 1;
            let cost = state.sellers[updating].marginal_cost;
            state.sellers[updating].current_price =
                myopic_best_response(updating, &prices, cost, &market)?;
        }
        StrategyKind::DerivativeFollower { step, direction } => {
            let step_ticks = market.to_ticks(step)?;
            let lower = market.to_ticks(state.sellers[updating].marginal_cost)?;
            let profit_now = state.last_tick_profits[updating];
            let (new_price, new_direction) = derivative_follower_step(
                state.sellers[updating].current_price,
                direction,
                step_ticks,
                profit_now,
                state.sellers[updating].last_profit,
                lower,
                market.max_ticks(),
            );
            state.sellers[updating].current_price = new_price;
            state.sellers[updating].strategy = StrategyKind::DerivativeFollower {
                step,
                direction: new_direction,
            };
            state.sellers[updating].last_profit = profit_now;
        }
    }

    let prices = state.prices();
    let profits: Vec<Money> = if config.sampled_profits {
        let units = sample_demand(&market, &prices, &mut state.rng);
        (0..market.num_sellers)
            .map(|s| (market.money(prices[s]) - state.sellers[s].marginal_cost) * units[s])
            .collect()
    } else {
        (0..market.num_sellers)
            .map(|s| market.profit(s, &prices, state.sellers[s].marginal_cost))
            .collect::<Result<_, _>>()?
    };
    for (total, profit) in state.cumulative_profit.iter_mut().zip(&profits) {
        *total += profit;
    }
    state.last_tick_profits = profits.clone();
    state.series.push(TickRecord {
        prices,
        profits,
        queries,
    });
    state.tick += 1;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    PriceWar,
    Collusive,
    Competitive,
    Indeterminate,
}

/// Classification of a simulated price series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub classification: Regime,
    /// Completed undercut-and-reset cycles; positive exactly when the
    /// classification is `PriceWar`.
    pub cycle_count: usize,
    pub mean_trough: Money,
    pub mean_peak: Money,
    pub window_mean_price: Money,
    pub window_cv: f64,
}

fn mean_and_cv(values: &[Money]) -> (Money, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let cv = if mean != 0.0 { variance.sqrt() / mean } else { 0.0 };
    (mean, cv)
}

/// Detect a cyclical price war on the market-minimum price track: count
/// upward jumps of at least `min_reset` that immediately follow a
/// nonincreasing run of at least `min_drop_run` ticks. Two or more such
/// resets classify the series as a price war.
pub fn detect_price_war(min_prices: &[Money], min_drop_run: usize, min_reset: Money) -> RegimeReport {
    let mut troughs = Vec::new();
    let mut peaks = Vec::new();
    let mut run = 1usize;
    for i in 1..min_prices.len() {
        let jump = min_prices[i] - min_prices[i - 1];
        if jump >= min_reset && run >= min_drop_run {
            troughs.push(min_prices[i - 1]);
            peaks.push(min_prices[i]);
            run = 1;
        } else if min_prices[i] <= min_prices[i - 1] {
            run += 1;
        } else {
            run = 1;
        }
    }
    let war = troughs.len() >= 2;
    let (window_mean_price, window_cv) = if min_prices.is_empty() {
        (0.0, 0.0)
    } else {
        mean_and_cv(min_prices)
    };
    RegimeReport {
        classification: if war { Regime::PriceWar } else { Regime::Indeterminate },
        cycle_count: if war { troughs.len() } else { 0 },
        mean_trough: if war { troughs.iter().sum::<f64>() / troughs.len() as f64 } else { 0.0 },
        mean_peak: if war { peaks.iter().sum::<f64>() / peaks.len() as f64 } else { 0.0 },
        window_mean_price,
        window_cv,
    }
}

/// Detect collusive pricing: over the trailing `window` ticks the mean
/// market price must sit at least `margin` above cost with coefficient of
/// variation at most `cv_max`.
pub fn detect_collusion(
    mean_prices: &[Money],
    cost: Money,
    window: usize,
    margin: Money,
    cv_max: f64,
) -> Result<RegimeReport, EngineError> {
    if mean_prices.len() < window || window == 0 {
        return Err(EngineError::SeriesTooShort {
            len: mean_prices.len(),
            window,
        });
    }
    let tail = &mean_prices[mean_prices.len() - window..];
    let (mean, cv) = mean_and_cv(tail);
    let collusive = mean >= cost + margin && cv <= cv_max;
    Ok(RegimeReport {
        classification: if collusive { Regime::Collusive } else { Regime::Indeterminate },
        cycle_count: 0,
        mean_trough: 0.0,
        mean_peak: 0.0,
        window_mean_price: mean,
        window_cv: cv,
    })
}

/// Per-run aggregates reported alongside the regime classification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub ticks: u64,
    pub per_seller_mean_profit: Vec<Money>,
    /// Mean per-tick expected consumer surplus over the final window.
    pub consumer_surplus: Money,
    /// Dispersion of all quotes in the final window; absent when a zero
    /// price makes the range ratio undefined.
    pub dispersion: Option<PriceDispersion>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub series: Vec<TickRecord>,
    pub regime: RegimeReport,
    pub summary: RunSummary,
}

/// Run the market for `ticks` steps from the given initial prices
/// (defaulting to each seller's configured start, then to `price_max`).
/// Output is a pure function of `(config, ticks, seed, initial_prices)`.
pub fn run(
    config: &EngineConfig,
    ticks: u64,
    seed: u64,
    initial_prices: Option<&[Money]>,
) -> Result<RunOutcome, EngineError> {
    if ticks == 0 {
        return Err(config_err("ticks", "must run for at least one tick"));
    }
    let mut state = MarketState::new(config, seed, initial_prices)?;
    for _ in 0..ticks {
        step(&mut state, config)?;
    }

    let market = &config.market;
    let min_track: Vec<Money> = state
        .series
        .iter()
        .map(|r| market.money(*r.prices.iter().min().expect("non-empty prices")))
        .collect();
    let mean_track: Vec<Money> = state
        .series
        .iter()
        .map(|r| r.prices.iter().map(|&p| market.money(p)).sum::<f64>() / r.prices.len() as f64)
        .collect();
    let mean_cost: Money = config.sellers.iter().map(|s| s.marginal_cost).sum::<f64>()
        / config.sellers.len() as f64;

    let det = &config.detectors;
    let window = det.window.min(state.series.len());
    let window_start = state.series.len() - window;
    let (window_mean_price, window_cv) = mean_and_cv(&mean_track[window_start..]);

    let war = detect_price_war(&min_track, det.min_drop_run, det.min_reset);
    let window_max = state.series[window_start..]
        .iter()
        .flat_map(|r| r.prices.iter())
        .map(|&p| market.money(p))
        .fold(f64::NEG_INFINITY, f64::max);

    let classification = if war.classification == Regime::PriceWar {
        Regime::PriceWar
    } else if window_max <= mean_cost + det.competitive_margin {
        Regime::Competitive
    } else if window_mean_price >= mean_cost + det.margin && window_cv <= det.cv_max {
        Regime::Collusive
    } else {
        Regime::Indeterminate
    };
    let is_war = classification == Regime::PriceWar;
    let regime = RegimeReport {
        classification,
        cycle_count: if is_war { war.cycle_count } else { 0 },
        mean_trough: if is_war { war.mean_trough } else { 0.0 },
        mean_peak: if is_war { war.mean_peak } else { 0.0 },
        window_mean_price,
        window_cv,
    };

    let mut surplus = 0.0;
    for (offset, record) in state.series[window_start..].iter().enumerate() {
        let tick_market = config.market_at((window_start + offset) as u64);
        surplus += tick_market.expected_consumer_surplus(&record.prices)?;
    }
    let window_prices: Vec<Money> = state.series[window_start..]
        .iter()
        .flat_map(|r| r.prices.iter().map(|&p| market.money(p)))
        .collect();
    let dispersion = price_dispersion(&window_prices).ok();

    let summary = RunSummary {
        seed,
        ticks,
        per_seller_mean_profit: state
            .cumulative_profit
            .iter()
            .map(|&p| p / ticks as f64)
            .collect(),
        consumer_surplus: surplus / window as f64,
        dispersion,
    };

    Ok(RunOutcome {
        series: state.series,
        regime,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::ValuationModel;
    use crate::strategy::Direction;

    fn duopoly_market(type1_fraction: f64) -> MarketConfig {
        MarketConfig {
            num_sellers: 2,
            buyers_per_tick: 100,
            type1_fraction,
            valuation: ValuationModel::Constant { value: 1.0 },
            price_tick: 0.01,
            price_max: 1.0,
        }
    }

    #[test]
    fn fixed_strategies_leave_prices_unchanged() {
        let market = duopoly_market(0.5);
        let config = EngineConfig::new(
            market,
            vec![
                SellerSpec::new(0.0, StrategyKind::Fixed { price: 0.8 }),
                SellerSpec::new(0.0, StrategyKind::Fixed { price: 0.9 }),
            ],
        );
        let mut state = MarketState::new(&config, 1, Some(&[0.8, 0.9])).unwrap();
        step(&mut state, &config).unwrap();
        step(&mut state, &config).unwrap();
        assert_eq!(state.tick, 2);
        assert_eq!(state.prices(), vec![80, 90]);
        assert_eq!(state.series.len(), 2);
    }

    #[test]
    fn monopolist_moves_to_valuation_on_first_update() {
        let market = MarketConfig {
            num_sellers: 1,
            buyers_per_tick: 100,
            type1_fraction: 0.5,
            valuation: ValuationModel::Constant { value: 1.0 },
            price_tick: 0.01,
            price_max: 1.0,
        };
        let config = EngineConfig::new(market, vec![SellerSpec::new(0.0, StrategyKind::MyopicOptimal)]);
        let mut state = MarketState::new(&config, 5, Some(&[0.3])).unwrap();
        step(&mut state, &config).unwrap();
        assert_eq!(state.prices(), vec![100]);
    }

    #[test]
    fn stepping_identical_states_gives_identical_successors() {
        let market = duopoly_market(0.75);
        let config = EngineConfig::new(
            market,
            vec![
                SellerSpec::new(0.0, StrategyKind::MyopicOptimal),
                SellerSpec::new(0.0, StrategyKind::MyopicOptimal),
            ],
        );
        let mut a = MarketState::new(&config, 99, None).unwrap();
        let mut b = a.clone();
        step(&mut a, &config).unwrap();
        step(&mut b, &config).unwrap();
        assert_eq!(a.prices(), b.prices());
        assert_eq!(a.series, b.series);
    }

    #[test]
    fn run_is_deterministic_per_seed() {
        let market = duopoly_market(0.75);
        let config = EngineConfig::new(
            market,
            vec![
                SellerSpec::new(0.0, StrategyKind::MyopicOptimal),
                SellerSpec::new(0.0, StrategyKind::MyopicOptimal),
            ],
        );
        let a = run(&config, 300, 7, None).unwrap();
        let b = run(&config, 300, 7, None).unwrap();
        assert_eq!(a.series, b.series);
        assert_eq!(a.regime, b.regime);
        assert_eq!(a.summary, b.summary);
    }

    #[test]
    fn sawtooth_series_counts_its_resets() {
        // Three descents from 1.0 to 0.4 in 0.05 steps, each followed by a
        // reset to 1.0, so three upward jumps qualify.
        let mut series = Vec::new();
        for _ in 0..3 {
            let mut p = 100i64;
            while p >= 40 {
                series.push(p as f64 / 100.0);
                p -= 5;
            }
        }
        series.push(1.0);
        let report = detect_price_war(&series, 3, 0.3);
        assert_eq!(report.classification, Regime::PriceWar);
        assert_eq!(report.cycle_count, 3);
        assert!((report.mean_trough - 0.4).abs() < 1e-12);
        assert!((report.mean_peak - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_and_monotone_series_are_not_wars() {
        let constant = vec![0.7; 50];
        let report = detect_price_war(&constant, 3, 0.1);
        assert_ne!(report.classification, Regime::PriceWar);
        assert_eq!(report.cycle_count, 0);

        let decline: Vec<f64> = (0..50).map(|i| 1.0 - i as f64 * 0.01).collect();
        let report = detect_price_war(&decline, 3, 0.1);
        assert_ne!(report.classification, Regime::PriceWar);
        assert_eq!(report.cycle_count, 0);
    }

    #[test]
    fn collusion_needs_margin_and_low_variation() {
        let high = vec![0.5; 600];
        let report = detect_collusion(&high, 0.0, 500, 0.1, 0.05).unwrap();
        assert_eq!(report.classification, Regime::Collusive);

        let at_cost = vec![0.0; 600];
        let report = detect_collusion(&at_cost, 0.0, 500, 0.1, 0.05).unwrap();
        assert_ne!(report.classification, Regime::Collusive);

        let sawtooth: Vec<f64> = (0..600).map(|i| 0.4 + 0.3 * ((i % 20) as f64 / 20.0)).collect();
        let report = detect_collusion(&sawtooth, 0.0, 500, 0.1, 0.05).unwrap();
        assert_ne!(report.classification, Regime::Collusive, "cv was {}", report.window_cv);

        assert!(matches!(
            detect_collusion(&[1.0; 10], 0.0, 500, 0.1, 0.05),
            Err(EngineError::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn bertrand_market_classifies_competitive() {
        let config = EngineConfig::new(
            duopoly_market(0.0),
            vec![
                SellerSpec::new(0.0, StrategyKind::MyopicOptimal),
                SellerSpec::new(0.0, StrategyKind::MyopicOptimal),
            ],
        );
        let outcome = run(&config, 1500, 12, Some(&[1.0, 1.0])).unwrap();
        assert_eq!(outcome.regime.classification, Regime::Competitive);
        assert_eq!(outcome.regime.cycle_count, 0);
    }

    #[test]
    fn captive_buyers_produce_a_price_war() {
        let config = EngineConfig::new(
            duopoly_market(0.75),
            vec![
                SellerSpec::new(0.0, StrategyKind::MyopicOptimal),
                SellerSpec::new(0.0, StrategyKind::MyopicOptimal),
            ],
        );
        let outcome = run(&config, 3000, 42, None).unwrap();
        assert_eq!(outcome.regime.classification, Regime::PriceWar);
        assert!(outcome.regime.cycle_count >= 3);
    }

    #[test]
    fn derivative_followers_hold_prices_high() {
        let follower = StrategyKind::DerivativeFollower {
            step: 0.01,
            direction: Direction::Down,
        };
        let config = EngineConfig::new(
            duopoly_market(0.75),
            vec![SellerSpec::new(0.0, follower), SellerSpec::new(0.0, follower)],
        );
        let outcome = run(&config, 3000, 42, None).unwrap();
        assert_eq!(outcome.regime.classification, Regime::Collusive);
        assert!(outcome.regime.window_mean_price > 0.1);
    }

    #[test]
    fn minimum_price_never_rises_without_captive_buyers() {
        let config = EngineConfig::new(
            duopoly_market(0.0),
            vec![
                SellerSpec::new(0.0, StrategyKind::MyopicOptimal),
                SellerSpec::new(0.0, StrategyKind::MyopicOptimal),
            ],
        );
        let outcome = run(&config, 1000, 3, Some(&[1.0, 1.0])).unwrap();
        let mins: Vec<GridPrice> = outcome
            .series
            .iter()
            .map(|r| *r.prices.iter().min().unwrap())
            .collect();
        assert!(mins.windows(2).all(|w| w[1] <= w[0]), "minimum price rose");
    }

    #[test]
    fn drift_moves_the_buyer_mix() {
        let mut config = EngineConfig::new(
            duopoly_market(1.0),
            vec![
                SellerSpec::new(0.0, StrategyKind::Fixed { price: 0.5 }),
                SellerSpec::new(0.0, StrategyKind::Fixed { price: 0.5 }),
            ],
        );
        config.type1_drift = Some(Type1Drift {
            final_fraction: 0.0,
            over_ticks: 100,
        });
        assert_eq!(config.type1_fraction_at(0), 1.0);
        assert!((config.type1_fraction_at(50) - 0.5).abs() < 1e-12);
        assert_eq!(config.type1_fraction_at(100), 0.0);
        assert_eq!(config.type1_fraction_at(500), 0.0);
    }

    #[test]
    fn sampled_profits_are_noisy_but_deterministic() {
        let follower = StrategyKind::DerivativeFollower {
            step: 0.01,
            direction: Direction::Down,
        };
        let mut config = EngineConfig::new(
            duopoly_market(0.75),
            vec![SellerSpec::new(0.0, follower), SellerSpec::new(0.0, follower)],
        );
        config.sampled_profits = true;
        let a = run(&config, 300, 5, None).unwrap();
        let b = run(&config, 300, 5, None).unwrap();
        assert_eq!(a.series, b.series);

        config.sampled_profits = false;
        let expected = run(&config, 300, 5, None).unwrap();
        let sampled_differs = a
            .series
            .iter()
            .zip(&expected.series)
            .any(|(x, y)| x.profits != y.profits);
        assert!(sampled_differs, "sampling produced no observation noise");
        // Realized demand cannot exceed the buyer population.
        for record in &a.series {
            for (s, &profit) in record.profits.iter().enumerate() {
                let price = config.market.money(record.prices[s]);
                if price > 0.0 {
                    assert!(profit / price <= config.market.buyers_per_tick as f64 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn run_rejects_zero_ticks_and_bad_configs() {
        let config = EngineConfig::new(
            duopoly_market(0.5),
            vec![
                SellerSpec::new(0.0, StrategyKind::MyopicOptimal),
                SellerSpec::new(0.0, StrategyKind::MyopicOptimal),
            ],
        );
        assert!(run(&config, 0, 1, None).is_err());

        let mut bad = config.clone();
        bad.sellers.pop();
        let err = run(&bad, 10, 1, None).unwrap_err();
        assert!(err.to_string().contains("sellers"), "{err}");
    }
}
