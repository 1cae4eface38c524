//! Seller price-setting behaviors and equilibrium checks.
//!
//! Three behaviors are supported: a fixed quote, a derivative follower
//! that keeps stepping its price in one direction until profit drops, and
//! a myopic optimizer that grid-searches the best response assuming rivals
//! hold still. `verify_epsilon_nash` checks a (possibly mixed) profile for
//! profitable unilateral deviations, and `fictitious_play` searches for an
//! empirical mixed equilibrium by repeated best response against observed
//! price frequencies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::market::{GridPrice, MarketConfig, MarketError, Money};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    #[default]
    Down,
}

impl Direction {
    pub fn flip(self) -> Direction {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        }
    }

    pub fn sign(self) -> i64 {
        match self {
            Direction::Up => 1,
            Direction::Down => -1,
        }
    }
}

/// How a seller sets its price when given the chance to update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyKind {
    /// Always quote the same price.
    Fixed { price: Money },
    /// Step the price by `step` in the current direction, reversing when
    /// profit fell since the previous update.
    DerivativeFollower {
        step: Money,
        #[serde(default)]
        direction: Direction,
    },
    /// Grid-search the profit-maximizing price treating rival quotes as
    /// fixed.
    MyopicOptimal,
}

/// A probability distribution over grid prices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixedStrategy {
    support: Vec<(GridPrice, f64)>,
}

impl MixedStrategy {
    /// Build from `(price, weight)` pairs; prices must be distinct and the
    /// weights must sum to one within 1e-9.
    pub fn new(mut support: Vec<(GridPrice, f64)>) -> Result<Self, MarketError> {
        if support.is_empty() {
            return Err(MarketError::EmptyInput("mixed strategy support"));
        }
        support.sort_by_key(|&(p, _)| p);
        if support.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(MarketError::InvalidConfig {
                field: "support",
                message: "duplicate support price".into(),
            });
        }
        let total: f64 = support.iter().map(|&(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-9 || support.iter().any(|&(_, w)| w < 0.0) {
            return Err(MarketError::InvalidConfig {
                field: "support",
                message: format!("weights must be nonnegative and sum to 1, got {total}"),
            });
        }
        Ok(MixedStrategy { support })
    }

    pub fn pure(price: GridPrice) -> Self {
        MixedStrategy {
            support: vec![(price, 1.0)],
        }
    }

    pub fn support(&self) -> &[(GridPrice, f64)] {
        &self.support
    }

    /// Total probability mass on prices at or below `p`.
    pub fn mass_at_or_below(&self, p: GridPrice) -> f64 {
        self.support
            .iter()
            .filter(|&&(price, _)| price <= p)
            .map(|&(_, w)| w)
            .sum()
    }

    pub fn mean_price(&self, cfg: &MarketConfig) -> Money {
        self.support
            .iter()
            .map(|&(p, w)| cfg.money(p) * w)
            .sum()
    }
}

/// One seller's entry in a strategy profile.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileStrategy {
    Pure(GridPrice),
    Mixed(MixedStrategy),
}

impl ProfileStrategy {
    fn support(&self) -> Vec<(GridPrice, f64)> {
        match self {
            ProfileStrategy::Pure(p) => vec![(*p, 1.0)],
            ProfileStrategy::Mixed(m) => m.support.clone(),
        }
    }
}

/// Outcome of an approximate-equilibrium check.
#[derive(Debug, Clone, PartialEq)]
pub struct NashCheck {
    pub is_nash: bool,
    /// Largest expected gain any seller can reach by a unilateral grid
    /// deviation; never negative since staying put is always available.
    pub worst_gain: Money,
    /// Seller and deviation price realizing `worst_gain`, when positive.
    pub witness: Option<(usize, GridPrice)>,
}

/// Best response of one seller to fixed rival prices: the grid price in
/// `[0, price_max]` maximizing expected profit, higher price winning ties
/// so that retreating to the monopoly quote beats an equally profitable
/// undercut.
pub fn myopic_best_response(
    seller: usize,
    prices: &[GridPrice],
    cost: Money,
    cfg: &MarketConfig,
) -> Result<GridPrice, MarketError> {
    let cost_ticks = cfg.to_ticks(cost)?;
    let mut scratch = prices.to_vec();
    let mut best_price = 0;
    let mut best_profit = f64::NEG_INFINITY;
    for p in 0..=cfg.max_ticks() {
        scratch[seller] = p;
        let profit = cfg.profit_scaled(seller, &scratch, cost_ticks)?;
        if profit >= best_profit {
            best_profit = profit;
            best_price = p;
        }
    }
    Ok(best_price)
}

/// One derivative-follower update: reverse direction iff profit strictly
/// decreased since the previous update, then step and clamp to
/// `[lower, upper]`.
pub fn derivative_follower_step(
    current_price: GridPrice,
    direction: Direction,
    step: GridPrice,
    profit_now: Money,
    profit_prev: Money,
    lower: GridPrice,
    upper: GridPrice,
) -> (GridPrice, Direction) {
    let new_direction = if profit_now < profit_prev {
        direction.flip()
    } else {
        direction
    };
    let moved = i64::from(current_price) + new_direction.sign() * i64::from(step);
    let clamped = moved.clamp(i64::from(lower), i64::from(upper)) as GridPrice;
    (clamped, new_direction)
}

/// Cumulative-mass view of one rival's strategy, dense over the grid.
struct RivalDist {
    /// below[p] = mass strictly below p
    below: Vec<f64>,
    /// at[p] = mass exactly at p
    at: Vec<f64>,
}

impl RivalDist {
    fn from_support(support: &[(GridPrice, f64)], max_ticks: GridPrice) -> Self {
        let n = max_ticks as usize + 1;
        let mut at = vec![0.0; n];
        for &(p, w) in support {
            at[p as usize] += w;
        }
        let mut below = vec![0.0; n];
        let mut acc = 0.0;
        for p in 0..n {
            below[p] = acc;
            acc += at[p];
        }
        RivalDist { below, at }
    }

    fn from_weights(weights: &[f64]) -> Self {
        let total: f64 = weights.iter().sum();
        let n = weights.len();
        let mut at = vec![0.0; n];
        let mut below = vec![0.0; n];
        let mut acc = 0.0;
        for p in 0..n {
            below[p] = acc;
            let w = weights[p] / total;
            at[p] = w;
            acc += w;
        }
        RivalDist { below, at }
    }
}

/// Expected scaled profit for playing `p` against independent rival mixes.
///
/// The comparison-buyer share requires no rival strictly below `p`; the tie
/// count among rivals exactly at `p` follows a product distribution that is
/// folded in with a small polynomial convolution.
fn expected_profit_vs_mixes(
    cfg: &MarketConfig,
    cost_ticks: GridPrice,
    p: GridPrice,
    rivals: &[&RivalDist],
) -> f64 {
    let q = cfg.survival_ticks(p);
    if q == 0.0 {
        return 0.0;
    }
    let margin = f64::from(p) - f64::from(cost_ticks);
    let type1 = cfg.type1_fraction * q / cfg.num_sellers as f64;

    // poly[j] = Pr(no rival below p, exactly j rivals tied at p)
    let mut poly = vec![1.0];
    for r in rivals {
        let at = r.at[p as usize];
        let above = 1.0 - r.below[p as usize] - at;
        let mut next = vec![0.0; poly.len() + 1];
        for (j, &w) in poly.iter().enumerate() {
            next[j] += w * above;
            next[j + 1] += w * at;
        }
        poly = next;
    }
    let share: f64 = poly
        .iter()
        .enumerate()
        .map(|(j, &w)| w / (j as f64 + 1.0))
        .sum();
    let type2 = cfg.type2_fraction() * q * share;

    margin * (type1 + type2)
}

/// Check a strategy profile for profitable unilateral deviations: the
/// profile is an equilibrium at tolerance `eps` iff no seller can improve
/// its expected profit by more than `eps` with any single grid price.
pub fn verify_epsilon_nash(
    profile: &[ProfileStrategy],
    costs: &[Money],
    cfg: &MarketConfig,
    eps: Money,
) -> Result<NashCheck, MarketError> {
    if profile.len() != cfg.num_sellers || costs.len() != cfg.num_sellers {
        return Err(MarketError::PriceCount {
            expected: cfg.num_sellers,
            got: profile.len(),
        });
    }
    let dists: Vec<RivalDist> = profile
        .iter()
        .map(|s| RivalDist::from_support(&s.support(), cfg.max_ticks()))
        .collect();
    let money_scale = cfg.price_tick * cfg.buyers_per_tick as f64;

    let mut worst_gain = 0.0;
    let mut witness = None;
    for s in 0..cfg.num_sellers {
        let cost_ticks = cfg.to_ticks(costs[s])?;
        let rivals: Vec<&RivalDist> = dists
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != s)
            .map(|(_, d)| d)
            .collect();
        let current: f64 = profile[s]
            .support()
            .iter()
            .map(|&(p, w)| w * expected_profit_vs_mixes(cfg, cost_ticks, p, &rivals))
            .sum();
        for d in 0..=cfg.max_ticks() {
            let gain = (expected_profit_vs_mixes(cfg, cost_ticks, d, &rivals) - current) * money_scale;
            if gain > worst_gain {
                worst_gain = gain;
                witness = Some((s, d));
            }
        }
    }
    Ok(NashCheck {
        is_nash: worst_gain <= eps,
        worst_gain,
        witness,
    })
}

/// Default belief discount for [`fictitious_play`].
pub const DEFAULT_BELIEF_DISCOUNT: f64 = 0.95;

/// Belief weights below this share of the total are dropped, so a decayed
/// transient reaches exactly zero instead of lingering forever.
const BELIEF_PRUNE: f64 = 1e-12;

/// Search for an empirical mixed equilibrium: every round, each seller best
/// responds to its rivals' observed price frequencies, and the visit
/// frequencies of those responses are returned as mixed strategies.
///
/// Beliefs weight recent observations more, with older plays discounted by
/// `DEFAULT_BELIEF_DISCOUNT` per round; a pure undiscounted average never
/// sheds its opening transient, which props the matching price up one tick
/// above the competitive floor indefinitely. Initial prices are drawn
/// uniformly from the grid with a private seeded generator, so results are
/// reproducible per seed. Ties in the best response break toward the lower
/// price.
pub fn fictitious_play(
    cfg: &MarketConfig,
    costs: &[Money],
    iterations: usize,
    seed: u64,
) -> Result<Vec<MixedStrategy>, MarketError> {
    fictitious_play_discounted(cfg, costs, iterations, seed, DEFAULT_BELIEF_DISCOUNT)
}

/// [`fictitious_play`] with an explicit belief discount in (0, 1]; 1 gives
/// the classic all-history average.
pub fn fictitious_play_discounted(
    cfg: &MarketConfig,
    costs: &[Money],
    iterations: usize,
    seed: u64,
    discount: f64,
) -> Result<Vec<MixedStrategy>, MarketError> {
    cfg.validate()?;
    if costs.len() != cfg.num_sellers {
        return Err(MarketError::PriceCount {
            expected: cfg.num_sellers,
            got: costs.len(),
        });
    }
    if iterations == 0 {
        return Err(MarketError::InvalidConfig {
            field: "iterations",
            message: "need at least one round".into(),
        });
    }
    if !(discount > 0.0 && discount <= 1.0) {
        return Err(MarketError::InvalidConfig {
            field: "discount",
            message: format!("must lie in (0, 1], got {discount}"),
        });
    }
    let cost_ticks: Vec<GridPrice> = costs
        .iter()
        .map(|&c| cfg.to_ticks(c))
        .collect::<Result<_, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = cfg.max_ticks() as usize + 1;
    let mut beliefs: Vec<Vec<f64>> = (0..cfg.num_sellers)
        .map(|_| {
            let mut w = vec![0.0; grid];
            w[rng.gen_range(0..grid)] = 1.0;
            w
        })
        .collect();
    let mut counts: Vec<Vec<u64>> = vec![vec![0; grid]; cfg.num_sellers];

    for _ in 0..iterations {
        let dists: Vec<RivalDist> = beliefs.iter().map(|w| RivalDist::from_weights(w)).collect();
        let mut responses = Vec::with_capacity(cfg.num_sellers);
        for (s, &cost) in cost_ticks.iter().enumerate() {
            let rivals: Vec<&RivalDist> = dists
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != s)
                .map(|(_, d)| d)
                .collect();
            let mut best = 0;
            let mut best_value = f64::NEG_INFINITY;
            for p in 0..grid {
                let value = expected_profit_vs_mixes(cfg, cost, p as GridPrice, &rivals);
                if value > best_value {
                    best_value = value;
                    best = p as GridPrice;
                }
            }
            responses.push(best);
        }
        for s in 0..cfg.num_sellers {
            counts[s][responses[s] as usize] += 1;
            let weights = &mut beliefs[s];
            let mut total = 0.0;
            for w in weights.iter_mut() {
                *w *= discount;
                total += *w;
            }
            weights[responses[s] as usize] += 1.0;
            total += 1.0;
            let floor = total * BELIEF_PRUNE;
            for w in weights.iter_mut() {
                if *w < floor {
                    *w = 0.0;
                }
            }
        }
    }

    let total = iterations as f64;
    counts
        .into_iter()
        .map(|c| {
            MixedStrategy::new(
                c.iter()
                    .enumerate()
                    .filter(|&(_, &n)| n > 0)
                    .map(|(p, &n)| (p as GridPrice, n as f64 / total))
                    .collect(),
            )
        })
        .collect()
}
