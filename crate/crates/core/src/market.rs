//! Domain types and closed-form demand, profit, efficiency and dispersion
//! computations for a single-good market served by competing sellers.
//!
//! Buyers come in two kinds: captive buyers that pick one seller at random
//! and buy if the price is at or below their valuation, and comparison
//! buyers that query every seller (through a metasite) and buy from the
//! cheapest one, splitting ties evenly.
//!
//! Prices live on a fixed grid of `price_tick` increments and are handled
//! internally as integer tick counts. Keeping the argmax arithmetic in tick
//! space makes price comparisons and profit ties exact, which the
//! best-response logic in [`crate::strategy`] relies on.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::strategy::StrategyKind;

/// Monetary amount. Grid-constrained prices are carried as [`GridPrice`]
/// instead wherever exact comparison matters.
pub type Money = f64;

/// A price expressed as an integer number of grid ticks.
pub type GridPrice = u32;

/// Relative slack allowed when snapping a monetary value onto the grid.
const GRID_SNAP_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum MarketError {
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("seller index {index} out of range for {count} sellers")]
    SellerIndex { index: usize, count: usize },
    #[error("expected {expected} prices, got {got}")]
    PriceCount { expected: usize, got: usize },
    #[error("price {price} does not lie on the {tick} grid within [0, {max}]")]
    OffGrid { price: Money, tick: Money, max: Money },
    #[error("prices must be strictly positive, got {0}")]
    NonpositivePrice(Money),
    #[error("transaction price {price} exceeds valuation {valuation}")]
    SurplusViolation { valuation: Money, price: Money },
    #[error("negative tolerance {0}")]
    NegativeTolerance(f64),
    #[error("invalid config: {field}: {message}")]
    InvalidConfig { field: &'static str, message: String },
}

fn config_err(field: &'static str, message: impl Into<String>) -> MarketError {
    MarketError::InvalidConfig {
        field,
        message: message.into(),
    }
}

/// Distribution of buyer valuations for the traded good.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValuationModel {
    /// Every buyer values the good at exactly `value`.
    Constant { value: Money },
    /// Valuations drawn uniformly from `[lo, hi)`.
    Uniform { lo: Money, hi: Money },
}

impl ValuationModel {
    pub fn validate(&self) -> Result<(), MarketError> {
        match *self {
            ValuationModel::Constant { value } => {
                if value > 0.0 && value.is_finite() {
                    Ok(())
                } else {
                    Err(config_err("valuation", format!("constant value must be positive, got {value}")))
                }
            }
            ValuationModel::Uniform { lo, hi } => {
                if lo >= 0.0 && lo < hi && hi.is_finite() {
                    Ok(())
                } else {
                    Err(config_err("valuation", format!("uniform bounds need 0 <= lo < hi, got [{lo}, {hi})")))
                }
            }
        }
    }

    /// Probability that a buyer's valuation is at least `p`.
    pub fn survival_probability(&self, p: Money) -> f64 {
        debug_assert!(p >= 0.0);
        match *self {
            ValuationModel::Constant { value } => {
                if p <= value {
                    1.0
                } else {
                    0.0
                }
            }
            ValuationModel::Uniform { lo, hi } => {
                if p <= lo {
                    1.0
                } else if p >= hi {
                    0.0
                } else {
                    (hi - p) / (hi - lo)
                }
            }
        }
    }

    /// Expected surplus `E[v - p | v >= p]`, or 0 when no buyer clears `p`.
    pub fn mean_excess(&self, p: Money) -> Money {
        match *self {
            ValuationModel::Constant { value } => {
                if p <= value {
                    value - p
                } else {
                    0.0
                }
            }
            ValuationModel::Uniform { lo, hi } => {
                if p <= lo {
                    (lo + hi) / 2.0 - p
                } else if p >= hi {
                    0.0
                } else {
                    (hi - p) / 2.0
                }
            }
        }
    }

    /// Largest valuation any buyer can hold.
    pub fn max_value(&self) -> Money {
        match *self {
            ValuationModel::Constant { value } => value,
            ValuationModel::Uniform { hi, .. } => hi,
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Money {
        match *self {
            ValuationModel::Constant { value } => value,
            ValuationModel::Uniform { lo, hi } => rng.gen_range(lo..hi),
        }
    }
}

/// Standalone form of [`ValuationModel::survival_probability`].
pub fn survival_probability(p: Money, vm: &ValuationModel) -> f64 {
    vm.survival_probability(p)
}

/// Static parameters of the market: seller count, buyer mix, valuations
/// and the price grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub num_sellers: usize,
    /// Buyers arriving per simulation tick.
    pub buyers_per_tick: u32,
    /// Fraction of buyers that are captive (pick one seller at random).
    /// The remainder compare all sellers and buy from the cheapest.
    pub type1_fraction: f64,
    pub valuation: ValuationModel,
    /// Grid increment; every quoted price is an integer multiple of it.
    pub price_tick: Money,
    pub price_max: Money,
}

impl MarketConfig {
    pub fn validate(&self) -> Result<(), MarketError> {
        if self.num_sellers == 0 {
            return Err(config_err("num_sellers", "need at least one seller"));
        }
        if !(0.0..=1.0).contains(&self.type1_fraction) {
            return Err(config_err(
                "type1_fraction",
                format!("must lie in [0, 1], got {}", self.type1_fraction),
            ));
        }
        self.valuation.validate()?;
        if !self.price_tick.is_finite() || self.price_tick <= 0.0 {
            return Err(config_err("price_tick", format!("must be positive, got {}", self.price_tick)));
        }
        if self.price_tick >= self.price_max {
            return Err(config_err(
                "price_tick",
                format!("tick {} must be smaller than price_max {}", self.price_tick, self.price_max),
            ));
        }
        if self.price_max < self.valuation.max_value() {
            return Err(config_err(
                "price_max",
                format!(
                    "must cover the largest valuation {} but is {}",
                    self.valuation.max_value(),
                    self.price_max
                ),
            ));
        }
        let ratio = self.price_max / self.price_tick;
        if (ratio - ratio.round()).abs() > GRID_SNAP_TOL {
            return Err(config_err(
                "price_max",
                format!("{} is not a multiple of price_tick {}", self.price_max, self.price_tick),
            ));
        }
        Ok(())
    }

    pub fn type2_fraction(&self) -> f64 {
        1.0 - self.type1_fraction
    }

    /// Highest grid tick, corresponding to `price_max`.
    pub fn max_ticks(&self) -> GridPrice {
        (self.price_max / self.price_tick).round() as GridPrice
    }

    /// Monetary value of a grid price.
    pub fn money(&self, ticks: GridPrice) -> Money {
        ticks as f64 * self.price_tick
    }

    /// Snap a monetary price onto the grid, rejecting values off-grid or
    /// outside `[0, price_max]`.
    pub fn to_ticks(&self, p: Money) -> Result<GridPrice, MarketError> {
        let off = || MarketError::OffGrid {
            price: p,
            tick: self.price_tick,
            max: self.price_max,
        };
        if !p.is_finite() || p < 0.0 {
            return Err(off());
        }
        let ratio = p / self.price_tick;
        let ticks = ratio.round();
        if (ratio - ticks).abs() > GRID_SNAP_TOL {
            return Err(off());
        }
        let ticks = ticks as GridPrice;
        if ticks > self.max_ticks() {
            return Err(off());
        }
        Ok(ticks)
    }

    pub fn to_ticks_vec(&self, prices: &[Money]) -> Result<Vec<GridPrice>, MarketError> {
        prices.iter().map(|&p| self.to_ticks(p)).collect()
    }

    /// Survival probability evaluated at a grid price. For constant
    /// valuations the comparison happens in tick space so that a valuation
    /// sitting exactly on the grid is never missed to rounding.
    pub fn survival_ticks(&self, p: GridPrice) -> f64 {
        match self.valuation {
            ValuationModel::Constant { value } => {
                let threshold = (value / self.price_tick + 1e-9).floor() as i64;
                if i64::from(p) <= threshold {
                    1.0
                } else {
                    0.0
                }
            }
            ValuationModel::Uniform { .. } => self.valuation.survival_probability(self.money(p)),
        }
    }

    fn check_prices(&self, seller: usize, prices: &[GridPrice]) -> Result<(), MarketError> {
        if prices.len() != self.num_sellers {
            return Err(MarketError::PriceCount {
                expected: self.num_sellers,
                got: prices.len(),
            });
        }
        if seller >= self.num_sellers {
            return Err(MarketError::SellerIndex {
                index: seller,
                count: self.num_sellers,
            });
        }
        Ok(())
    }

    /// Expected per-tick demand for one seller given the full price vector.
    ///
    /// Captive buyers contribute `B * w1 * Q(p_s) / S`; comparison buyers
    /// contribute `B * w2 * Q(p_s) / m` when the seller shares the market
    /// minimum with `m - 1` others, and nothing otherwise.
    pub fn expected_demand(&self, seller: usize, prices: &[GridPrice]) -> Result<DemandResult, MarketError> {
        self.check_prices(seller, prices)?;
        let p = prices[seller];
        let q = self.survival_ticks(p);
        let buyers = self.buyers_per_tick as f64;
        let type1 = buyers * self.type1_fraction * q / self.num_sellers as f64;
        let min = *prices.iter().min().expect("non-empty price vector");
        let type2 = if p == min {
            let m = prices.iter().filter(|&&x| x == min).count() as f64;
            buyers * self.type2_fraction() * q / m
        } else {
            0.0
        };
        Ok(DemandResult {
            expected_units: type1 + type2,
            type1_units: type1,
            type2_units: type2,
        })
    }

    /// Profit scaled by `1 / (price_tick * buyers_per_tick)`.
    ///
    /// All quantities entering the product are integer tick counts and
    /// buyer-mix weights, so for dyadic mixes the result is exact and
    /// profit ties can be detected with plain `==`. Price-setting code
    /// must rank candidates with this, not with [`Self::profit`].
    pub(crate) fn profit_scaled(
        &self,
        seller: usize,
        prices: &[GridPrice],
        cost_ticks: GridPrice,
    ) -> Result<f64, MarketError> {
        self.check_prices(seller, prices)?;
        let p = prices[seller];
        let q = self.survival_ticks(p);
        let margin = f64::from(p) - f64::from(cost_ticks);
        let type1 = self.type1_fraction * q / self.num_sellers as f64;
        let min = *prices.iter().min().expect("non-empty price vector");
        let type2 = if p == min {
            let m = prices.iter().filter(|&&x| x == min).count() as f64;
            self.type2_fraction() * q / m
        } else {
            0.0
        };
        Ok(margin * (type1 + type2))
    }

    /// Expected per-tick profit: `(p_s - cost) * expected_units`. Negative
    /// when the seller prices below cost.
    pub fn profit(&self, seller: usize, prices: &[GridPrice], cost: Money) -> Result<Money, MarketError> {
        let demand = self.expected_demand(seller, prices)?;
        Ok((self.money(prices[seller]) - cost) * demand.expected_units)
    }

    /// Expected per-tick consumer surplus summed over all sellers.
    pub fn expected_consumer_surplus(&self, prices: &[GridPrice]) -> Result<Money, MarketError> {
        let mut total = 0.0;
        for s in 0..self.num_sellers {
            let demand = self.expected_demand(s, prices)?;
            total += demand.expected_units * self.valuation.mean_excess(self.money(prices[s]));
        }
        Ok(total)
    }
}

/// Expected demand split into its captive and comparison components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DemandResult {
    pub expected_units: f64,
    pub type1_units: f64,
    pub type2_units: f64,
}

/// One competing seller and its mutable pricing state.
#[derive(Debug, Clone, PartialEq)]
pub struct Seller {
    pub id: usize,
    pub marginal_cost: Money,
    pub strategy: StrategyKind,
    /// Current quote, always on the grid.
    pub current_price: GridPrice,
    /// Profit observed at this seller's previous strategy update; the
    /// derivative follower steers by comparing against it.
    pub last_profit: Money,
}

/// Number of valuations at or above the asked price.
pub fn quantity_demanded(valuations: &[Money], p: Money) -> usize {
    valuations.iter().filter(|&&v| v >= p).count()
}

/// Best single posted price against a known valuation list: returns the
/// valuation maximizing `(p - cost) * quantity_demanded`, lowest price
/// winning ties, along with the profit it earns. The optimum always sits at
/// one of the valuations, so only those are scanned.
pub fn optimal_uniform_price(valuations: &[Money], cost: Money) -> Result<(Money, Money), MarketError> {
    if valuations.is_empty() {
        return Err(MarketError::EmptyInput("valuations"));
    }
    let mut candidates = valuations.to_vec();
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite valuations"));
    candidates.dedup();
    let mut best = (candidates[0], (candidates[0] - cost) * quantity_demanded(valuations, candidates[0]) as f64);
    for &p in &candidates[1..] {
        let profit = (p - cost) * quantity_demanded(valuations, p) as f64;
        if profit > best.1 {
            best = (p, profit);
        }
    }
    Ok(best)
}

/// Profit under perfect price discrimination: every buyer with `v >= cost`
/// is charged exactly `v`.
pub fn perfect_discrimination_profit(valuations: &[Money], cost: Money) -> Money {
    valuations.iter().map(|&v| (v - cost).max(0.0)).sum()
}

/// Whether a set of marginal rates of substitution is equalized to within
/// `tol`; unequal rates mean a mutually advantageous trade still exists.
pub fn distribution_efficient(mrs_values: &[f64], tol: f64) -> Result<bool, MarketError> {
    if mrs_values.is_empty() {
        return Err(MarketError::EmptyInput("mrs_values"));
    }
    if tol < 0.0 {
        return Err(MarketError::NegativeTolerance(tol));
    }
    let max = mrs_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = mrs_values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(max - min <= tol)
}

/// Spread of simultaneously quoted prices for the same good.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriceDispersion {
    /// `(max - min) / min`.
    pub range_ratio: f64,
    /// Population standard deviation over the mean.
    pub coeff_variation: f64,
}

pub fn price_dispersion(prices: &[Money]) -> Result<PriceDispersion, MarketError> {
    if prices.is_empty() {
        return Err(MarketError::EmptyInput("prices"));
    }
    if let Some(&bad) = prices.iter().find(|&&p| !p.is_finite() || p <= 0.0) {
        return Err(MarketError::NonpositivePrice(bad));
    }
    let max = prices.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = prices.iter().cloned().fold(f64::INFINITY, f64::min);
    let n = prices.len() as f64;
    let mean = prices.iter().sum::<f64>() / n;
    let variance = prices.iter().map(|&p| (p - mean) * (p - mean)).sum::<f64>() / n;
    Ok(PriceDispersion {
        range_ratio: (max - min) / min,
        coeff_variation: variance.sqrt() / mean,
    })
}

/// Total buyer surplus over completed transactions, each `(valuation, price)`.
/// A price above its valuation signals an upstream bug and is rejected.
pub fn consumer_surplus(transactions: &[(Money, Money)]) -> Result<Money, MarketError> {
    let mut total = 0.0;
    for &(valuation, price) in transactions {
        if price > valuation {
            return Err(MarketError::SurplusViolation { valuation, price });
        }
        total += valuation - price;
    }
    Ok(total)
}
