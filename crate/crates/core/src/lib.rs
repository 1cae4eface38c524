//! Market dynamics of automated price comparison, and the governance
//! machinery sites use to keep the robots doing it in check.
//!
//! The crate has two halves. The economic half models a single-good
//! market where some buyers comparison-shop through a metasite while the
//! rest stay captive to a random seller: [`market`] holds the closed-form
//! demand and profit arithmetic, [`strategy`] the seller pricing
//! behaviors and equilibrium checks, and [`engine`] the deterministic
//! tick loop with price-war/collusion/competitive regime detection. The
//! governance half deals with the robots themselves: [`exclusion`] parses
//! and evaluates robot-exclusion policies extended with crawl limits,
//! purpose and amount conditions, and [`traffic`] models query load,
//! per-address rate blocking and proxy collateral damage.
//!
//! Everything is deterministic given a seed; simulation output never
//! depends on wall-clock time or map iteration order.

pub mod engine;
pub mod exclusion;
pub mod market;
pub mod strategy;
pub mod traffic;

pub use market::{GridPrice, Money};
