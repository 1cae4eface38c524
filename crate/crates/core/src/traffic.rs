//! Query traffic against a site and the defenses it mounts: per-address
//! rate detection with a permanent blocklist, load accounting against the
//! human background, and the metasite refresh scenario.
//!
//! Addresses are observed at the transport level, so agents sharing a
//! proxy share fate: once the proxy address trips the rate threshold,
//! every agent behind it is refused, compliant or not.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::exclusion::{
    evaluate_access, AccessDecision, AccessRequest, AssentLedger, DenyReason, ExclusionPolicy,
};

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("invalid traffic config: {field}: {message}")]
    InvalidConfig { field: &'static str, message: String },
}

/// A robot issuing queries at a fixed per-tick rate. Compliant agents
/// fetch the policy first, skip disallowed paths and self-throttle to the
/// advertised crawl limit; noncompliant agents just fire.
#[derive(Debug, Clone, PartialEq)]
pub struct CrawlerAgent {
    pub id: usize,
    pub agent_token: String,
    pub origin_address: String,
    /// When set, queries are routed through this address and the site
    /// only ever sees the proxy.
    pub proxy_address: Option<String>,
    /// Queries attempted per tick.
    pub rate: u32,
    pub compliant: bool,
    pub declared_purpose: String,
    /// Candidate request paths; a compliant agent uses the first one its
    /// matched record does not disallow.
    pub paths: Vec<String>,
}

impl CrawlerAgent {
    pub fn observed_address(&self) -> &str {
        self.proxy_address.as_deref().unwrap_or(&self.origin_address)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryOutcome {
    Accepted,
    /// Refused at the transport level because the address is blocklisted.
    Refused,
    DeniedPath,
    DeniedPurpose,
    DeniedAmount,
    DeniedUnassented,
    Throttled,
}

impl QueryOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryOutcome::Accepted => "accepted",
            QueryOutcome::Refused => "refused",
            QueryOutcome::DeniedPath => "denied_path",
            QueryOutcome::DeniedPurpose => "denied_purpose",
            QueryOutcome::DeniedAmount => "denied_amount",
            QueryOutcome::DeniedUnassented => "denied_unassented",
            QueryOutcome::Throttled => "throttled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrafficEvent {
    pub tick: u64,
    /// Address the site observed (the proxy when one is in play).
    pub address: String,
    pub agent: String,
    pub path: String,
    pub outcome: QueryOutcome,
    pub robot: bool,
}

/// Transport-level view of all query traffic: the event log, per-address
/// sliding windows and the blocklist, which only ever grows within a run.
#[derive(Debug, Clone, Default)]
pub struct TrafficLedger {
    pub events: Vec<TrafficEvent>,
    windows: BTreeMap<String, VecDeque<u64>>,
    pub blocklist: BTreeSet<String>,
}

impl TrafficLedger {
    pub fn new() -> Self {
        Self::default()
    }
}

/// A query as observed at the transport level.
#[derive(Debug, Clone)]
pub struct ObservedQuery {
    pub tick: u64,
    pub address: String,
    pub agent: String,
    pub path: String,
    pub robot: bool,
}

/// Record one query and apply rate blocking: a blocklisted address is
/// refused outright; otherwise, if accepting this query would exceed
/// `threshold` accepted queries from its address within the trailing
/// `window` ticks, the address is blocklisted and the query refused.
/// Returns whether the query was blocked. Ticks must be nondecreasing.
pub fn observe_query(
    ledger: &mut TrafficLedger,
    query: &ObservedQuery,
    threshold: u32,
    window: u64,
) -> bool {
    debug_assert!(threshold >= 1 && window >= 1);
    let blocked = if ledger.blocklist.contains(&query.address) {
        true
    } else {
        let times = ledger.windows.entry(query.address.clone()).or_default();
        while times.front().is_some_and(|&t| t + window <= query.tick) {
            times.pop_front();
        }
        if times.len() as u64 + 1 > u64::from(threshold) {
            ledger.blocklist.insert(query.address.clone());
            true
        } else {
            times.push_back(query.tick);
            false
        }
    };
    ledger.events.push(TrafficEvent {
        tick: query.tick,
        address: query.address.clone(),
        agent: query.agent.clone(),
        path: query.path.clone(),
        outcome: if blocked { QueryOutcome::Refused } else { QueryOutcome::Accepted },
        robot: query.robot,
    });
    blocked
}

/// Share of system queries attributable to robots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoadReport {
    pub robot_queries: u64,
    pub total_queries: u64,
    pub robot_fraction: f64,
    pub harm_flag: bool,
}

/// Robot load fraction over the trailing `window` ticks of the ledger,
/// flagged as harmful when it exceeds `capacity_threshold`.
pub fn load_fraction(ledger: &TrafficLedger, window: u64, capacity_threshold: f64) -> LoadReport {
    let latest = ledger.events.last().map(|e| e.tick).unwrap_or(0);
    let cutoff = latest.saturating_sub(window.saturating_sub(1));
    let mut robot_queries = 0;
    let mut total_queries = 0;
    for event in ledger.events.iter().rev() {
        if event.tick < cutoff {
            break;
        }
        total_queries += 1;
        if event.robot {
            robot_queries += 1;
        }
    }
    let robot_fraction = if total_queries > 0 {
        robot_queries as f64 / total_queries as f64
    } else {
        0.0
    };
    LoadReport {
        robot_queries,
        total_queries,
        robot_fraction,
        harm_flag: robot_fraction > capacity_threshold,
    }
}

/// Project the combined load of `robot_count` robots each contributing
/// `per_robot_fraction` of system queries, capped at 1. The query counters
/// are zero here: this report is a projection, not a measurement.
pub fn aggregate_load(per_robot_fraction: f64, robot_count: u32, capacity_threshold: f64) -> LoadReport {
    let combined = (per_robot_fraction * f64::from(robot_count)).min(1.0);
    LoadReport {
        robot_queries: 0,
        total_queries: 0,
        robot_fraction: combined,
        harm_flag: combined > capacity_threshold,
    }
}

/// Metasite refresh scenario parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetasiteConfig {
    /// Seller sites the metasite indexes.
    pub sellers: u32,
    /// Refresh every this many ticks (`None` disables the metasite).
    pub refresh_period: Option<u64>,
    /// Whether each per-tick seller price update is preceded by one query
    /// from that seller back to the metasite.
    pub vendor_robot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetasiteReport {
    pub total_queries: u64,
    /// Queries the metasite sent to sellers (one per seller per refresh).
    pub metasite_queries: u64,
    /// Queries each seller's own robot sent to the metasite.
    pub vendor_queries: Vec<u64>,
    pub per_tick_total: Vec<u32>,
}

/// Count the queries a metasite scheme generates over `ticks` ticks. The
/// metasite polls every seller each `refresh_period`; with vendor robots
/// on, the (seeded, uniformly chosen) seller updating its price each tick
/// first queries the metasite.
pub fn metasite_scenario(config: &MetasiteConfig, ticks: u64, seed: u64) -> MetasiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut metasite_queries = 0u64;
    let mut vendor_queries = vec![0u64; config.sellers as usize];
    let mut per_tick_total = Vec::with_capacity(ticks as usize);
    for tick in 0..ticks {
        let mut this_tick = 0u32;
        if let Some(period) = config.refresh_period {
            if tick % period == 0 {
                metasite_queries += u64::from(config.sellers);
                this_tick += config.sellers;
            }
        }
        if config.vendor_robot && config.sellers > 0 {
            let seller = rng.gen_range(0..config.sellers as usize);
            vendor_queries[seller] += 1;
            this_tick += 1;
        }
        per_tick_total.push(this_tick);
    }
    MetasiteReport {
        total_queries: metasite_queries + vendor_queries.iter().sum::<u64>(),
        metasite_queries,
        vendor_queries,
        per_tick_total,
    }
}

/// Full traffic scenario: robot agents plus a constant human background,
/// run against the rate blocker and (optionally) an exclusion policy.
#[derive(Debug, Clone)]
pub struct TrafficSimConfig {
    pub agents: Vec<CrawlerAgent>,
    /// Rate-blocking threshold T (accepted queries per address per window).
    pub threshold: u32,
    /// Rate-blocking window W in ticks. One tick corresponds to one second
    /// of policy time.
    pub window: u64,
    pub capacity_threshold: f64,
    pub humans_per_tick: u32,
    /// Human queries rotate round-robin over this many distinct addresses.
    pub human_addresses: u32,
    pub ticks: u64,
    pub policy: Option<ExclusionPolicy>,
}

#[derive(Debug)]
pub struct TrafficSimOutcome {
    pub ledger: TrafficLedger,
    pub exclusion: AssentLedger,
    pub load: LoadReport,
}

struct AgentState {
    assented: bool,
    /// Times of protocol-allowed queries, for self-throttling.
    allowed_times: VecDeque<u64>,
}

/// Run the traffic scenario tick by tick. Humans query first each tick,
/// then agents in id order; each query passes the transport blocker and
/// then, when a policy is configured, the exclusion evaluator.
pub fn run_traffic(config: &TrafficSimConfig) -> Result<TrafficSimOutcome, TrafficError> {
    if config.threshold == 0 {
        return Err(TrafficError::InvalidConfig {
            field: "threshold",
            message: "must be at least 1".into(),
        });
    }
    if config.window == 0 {
        return Err(TrafficError::InvalidConfig {
            field: "window",
            message: "must be at least 1".into(),
        });
    }
    if config.humans_per_tick > 0 && config.human_addresses == 0 {
        return Err(TrafficError::InvalidConfig {
            field: "human_addresses",
            message: "need at least one address for human traffic".into(),
        });
    }

    let mut ledger = TrafficLedger::new();
    let mut exclusion = AssentLedger::new();
    let mut states: Vec<AgentState> = config
        .agents
        .iter()
        .map(|_| AgentState {
            assented: false,
            allowed_times: VecDeque::new(),
        })
        .collect();
    let mut human_cursor = 0u32;

    for tick in 0..config.ticks {
        for _ in 0..config.humans_per_tick {
            let address = format!("human-{human_cursor}");
            human_cursor = (human_cursor + 1) % config.human_addresses;
            observe_query(
                &mut ledger,
                &ObservedQuery {
                    tick,
                    address,
                    agent: "human".to_string(),
                    path: "/".to_string(),
                    robot: false,
                },
                config.threshold,
                config.window,
            );
        }

        for (agent, state) in config.agents.iter().zip(states.iter_mut()) {
            let mut remaining = agent.rate;
            if remaining == 0 {
                continue;
            }
            if agent.compliant && config.policy.is_some() && !state.assented {
                send(config, &mut ledger, &mut exclusion, agent, tick, "/robots.txt");
                state.assented = true;
                remaining -= 1;
            }
            let path = match agent_path(config, agent, state.assented) {
                Some(p) => p,
                None => continue, // every candidate path is disallowed
            };
            let crawl_limit = config.policy.as_ref().and_then(|p| {
                crate::exclusion::match_record(p, &agent.agent_token).and_then(|r| r.crawl_limit)
            });
            for _ in 0..remaining {
                if agent.compliant {
                    if let Some(limit) = crawl_limit {
                        while state
                            .allowed_times
                            .front()
                            .is_some_and(|&t| t + limit.window <= tick)
                        {
                            state.allowed_times.pop_front();
                        }
                        if state.allowed_times.len() as u64 >= u64::from(limit.max_queries) {
                            break; // self-throttle: stay inside the advertised budget
                        }
                    }
                }
                let outcome = send(config, &mut ledger, &mut exclusion, agent, tick, path);
                if agent.compliant && outcome == QueryOutcome::Accepted {
                    state.allowed_times.push_back(tick);
                }
            }
        }
    }

    let load = load_fraction(&ledger, config.ticks.max(1), config.capacity_threshold);
    Ok(TrafficSimOutcome {
        ledger,
        exclusion,
        load,
    })
}

/// First candidate path the agent may request. Compliant agents skip
/// prefixes their matched record disallows.
fn agent_path<'a>(config: &'a TrafficSimConfig, agent: &'a CrawlerAgent, assented: bool) -> Option<&'a str> {
    static DEFAULT_PATH: &str = "/";
    let candidates: Vec<&str> = if agent.paths.is_empty() {
        vec![DEFAULT_PATH]
    } else {
        agent.paths.iter().map(String::as_str).collect()
    };
    if !agent.compliant || !assented {
        return candidates.first().copied();
    }
    match &config.policy {
        None => candidates.first().copied(),
        Some(policy) => match crate::exclusion::match_record(policy, &agent.agent_token) {
            None => candidates.first().copied(),
            Some(record) => candidates
                .into_iter()
                .find(|path| !record.disallow.iter().any(|d| path.starts_with(d.as_str()))),
        },
    }
}

fn send(
    config: &TrafficSimConfig,
    ledger: &mut TrafficLedger,
    exclusion: &mut AssentLedger,
    agent: &CrawlerAgent,
    tick: u64,
    path: &str,
) -> QueryOutcome {
    let blocked = observe_query(
        ledger,
        &ObservedQuery {
            tick,
            address: agent.observed_address().to_string(),
            agent: agent.agent_token.clone(),
            path: path.to_string(),
            robot: true,
        },
        config.threshold,
        config.window,
    );
    if blocked {
        return QueryOutcome::Refused;
    }
    let outcome = match &config.policy {
        None => QueryOutcome::Accepted,
        Some(policy) => {
            let request = AccessRequest {
                agent_token: agent.agent_token.clone(),
                origin_address: agent.origin_address.clone(),
                proxy_address: agent.proxy_address.clone(),
                path: path.to_string(),
                declared_purpose: agent.declared_purpose.clone(),
                time: tick,
                catalog_fraction_fetched: 0.0,
            };
            match evaluate_access(policy, &request, exclusion) {
                AccessDecision::Allow => QueryOutcome::Accepted,
                AccessDecision::Deny { reason } => match reason {
                    DenyReason::Path => QueryOutcome::DeniedPath,
                    DenyReason::Purpose => QueryOutcome::DeniedPurpose,
                    DenyReason::Amount => QueryOutcome::DeniedAmount,
                    DenyReason::Unassented => QueryOutcome::DeniedUnassented,
                },
                AccessDecision::Throttle { .. } => QueryOutcome::Throttled,
            }
        }
    };
    if outcome != QueryOutcome::Accepted {
        // Refine the transport-level "accepted" record with the protocol verdict.
        ledger
            .events
            .last_mut()
            .expect("observe_query just pushed an event")
            .outcome = outcome;
    }
    outcome
}
