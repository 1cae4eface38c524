//! Robot-exclusion policy files and their evaluation.
//!
//! The base file format names the robots a record applies to and the URL
//! prefixes they must not visit. On top of that sit crawl-governance
//! directives: `Crawl-limit` (maximum queries per trailing window),
//! `Purpose-allow` (accepted use-purpose tokens), `Amount-limit` (cap on
//! the catalog fraction an agent may fetch) and `Terms` (opaque pointer to
//! the access terms). Access is granted only to agents that fetched
//! `/robots.txt` first — the assent step — and the [`AssentLedger`]
//! records every decision for later compliance reporting.
//!
//! Grammar: one `Field: value` per line, field names ASCII
//! case-insensitive, `#` starts a comment, records are separated by blank
//! lines, LF and CRLF are both accepted. The serializer emits the
//! canonical form: fixed field order, single space after the colon, LF
//! endings, one blank line between records.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolicyParseError {
    #[error("line {line}: invalid UTF-8 byte sequence")]
    InvalidUtf8 { line: usize },
    #[error("line {line}: missing ':' separator")]
    MissingSeparator { line: usize },
    #[error("line {line}: invalid Crawl-limit '{value}', expected <queries>/<seconds>")]
    InvalidCrawlLimit { line: usize, value: String },
    #[error("line {line}: invalid Amount-limit '{value}', expected a decimal in (0, 1]")]
    InvalidAmountLimit { line: usize, value: String },
}

/// Query budget: at most `max_queries` allowed per trailing `window` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CrawlLimit {
    pub max_queries: u32,
    pub window: u64,
}

/// One policy record: the agents it addresses and the conditions it sets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolicyRecord {
    /// User-agent tokens as written; `*` makes the record the fallback.
    pub agents: Vec<String>,
    /// Path prefixes the agents must not request. Empty means allow-all.
    pub disallow: Vec<String>,
    pub crawl_limit: Option<CrawlLimit>,
    /// Accepted purpose tokens (stored lowercase); `None` accepts any.
    pub purpose_allow: Option<BTreeSet<String>>,
    /// Largest catalog fraction an agent may have fetched, in (0, 1].
    pub amount_limit: Option<f64>,
    pub terms: Option<String>,
}

impl PolicyRecord {
    pub fn is_wildcard(&self) -> bool {
        self.agents.iter().any(|a| a == "*")
    }

    fn names_agent(&self, token: &str) -> bool {
        self.agents
            .iter()
            .any(|a| a != "*" && a.eq_ignore_ascii_case(token))
    }
}

/// A parsed policy file: its records in file order plus any warnings
/// (unknown directives, discarded fragments) gathered while parsing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExclusionPolicy {
    pub records: Vec<PolicyRecord>,
    pub warnings: Vec<String>,
}

#[derive(Default)]
struct RecordBuilder {
    record: PolicyRecord,
    saw_known_field: bool,
}

impl RecordBuilder {
    fn flush(self, records: &mut Vec<PolicyRecord>, warnings: &mut Vec<String>) {
        if self.record.agents.is_empty() {
            if self.saw_known_field {
                warnings.push("record without a User-agent line discarded".to_string());
            }
        } else {
            records.push(self.record);
        }
    }
}

/// Parse policy bytes. Unknown directives become warnings, never errors;
/// structurally broken lines and bad directive values abort with a
/// positioned error.
pub fn parse_policy(bytes: &[u8]) -> Result<ExclusionPolicy, PolicyParseError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        PolicyParseError::InvalidUtf8 { line }
    })?;

    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut current: Option<RecordBuilder> = None;

    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let line = match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        };
        let line = line.trim();
        if line.is_empty() {
            if let Some(builder) = current.take() {
                builder.flush(&mut records, &mut warnings);
            }
            continue;
        }
        let (field, value) = line
            .split_once(':')
            .ok_or(PolicyParseError::MissingSeparator { line: line_no })?;
        let field = field.trim().to_ascii_lowercase();
        let value = value.trim();
        let builder = current.get_or_insert_with(RecordBuilder::default);
        match field.as_str() {
            "user-agent" => {
                if value.is_empty() {
                    warnings.push(format!("line {line_no}: empty User-agent ignored"));
                } else {
                    builder.record.agents.push(value.to_string());
                }
            }
            "disallow" => {
                builder.saw_known_field = true;
                // An empty Disallow means no restriction.
                if !value.is_empty() {
                    builder.record.disallow.push(value.to_string());
                }
            }
            "crawl-limit" => {
                builder.saw_known_field = true;
                let invalid = || PolicyParseError::InvalidCrawlLimit {
                    line: line_no,
                    value: value.to_string(),
                };
                let (n, secs) = value.split_once('/').ok_or_else(invalid)?;
                let max_queries: u32 = n.trim().parse().map_err(|_| invalid())?;
                let window: u64 = secs.trim().parse().map_err(|_| invalid())?;
                if max_queries == 0 || window == 0 {
                    return Err(invalid());
                }
                if builder.record.crawl_limit.is_some() {
                    warnings.push(format!("line {line_no}: duplicate Crawl-limit overrides earlier value"));
                }
                builder.record.crawl_limit = Some(CrawlLimit { max_queries, window });
            }
            "purpose-allow" => {
                builder.saw_known_field = true;
                let tokens: BTreeSet<String> = value
                    .split(',')
                    .map(|t| t.trim().to_ascii_lowercase())
                    .filter(|t| !t.is_empty())
                    .collect();
                if tokens.is_empty() {
                    warnings.push(format!("line {line_no}: empty Purpose-allow ignored"));
                } else {
                    if builder.record.purpose_allow.is_some() {
                        warnings.push(format!("line {line_no}: duplicate Purpose-allow overrides earlier value"));
                    }
                    builder.record.purpose_allow = Some(tokens);
                }
            }
            "amount-limit" => {
                builder.saw_known_field = true;
                let parsed: f64 = value.parse().map_err(|_| PolicyParseError::InvalidAmountLimit {
                    line: line_no,
                    value: value.to_string(),
                })?;
                if !(parsed > 0.0 && parsed <= 1.0) {
                    return Err(PolicyParseError::InvalidAmountLimit {
                        line: line_no,
                        value: value.to_string(),
                    });
                }
                builder.record.amount_limit = Some(parsed);
            }
            "terms" => {
                builder.saw_known_field = true;
                builder.record.terms = Some(value.to_string());
            }
            other => {
                warnings.push(format!("line {line_no}: unknown directive '{other}'"));
            }
        }
    }
    if let Some(builder) = current.take() {
        builder.flush(&mut records, &mut warnings);
    }
    Ok(ExclusionPolicy { records, warnings })
}

/// Emit the canonical text form: `parse(serialize(p))` reproduces `p`'s
/// records exactly, and serializing a freshly parsed file normalizes it.
pub fn serialize_policy(policy: &ExclusionPolicy) -> String {
    let mut blocks = Vec::with_capacity(policy.records.len());
    for record in &policy.records {
        let mut out = String::new();
        for agent in &record.agents {
            out.push_str("User-agent: ");
            out.push_str(agent);
            out.push('\n');
        }
        if record.disallow.is_empty() {
            out.push_str("Disallow:\n");
        } else {
            for path in &record.disallow {
                out.push_str("Disallow: ");
                out.push_str(path);
                out.push('\n');
            }
        }
        if let Some(limit) = &record.crawl_limit {
            out.push_str(&format!("Crawl-limit: {}/{}\n", limit.max_queries, limit.window));
        }
        if let Some(purposes) = &record.purpose_allow {
            let joined: Vec<&str> = purposes.iter().map(String::as_str).collect();
            out.push_str(&format!("Purpose-allow: {}\n", joined.join(",")));
        }
        if let Some(limit) = record.amount_limit {
            out.push_str(&format!("Amount-limit: {limit}\n"));
        }
        if let Some(terms) = &record.terms {
            out.push_str(&format!("Terms: {terms}\n"));
        }
        blocks.push(out);
    }
    blocks.join("\n")
}

/// First record naming the agent exactly (ASCII case-insensitive), falling
/// back to the first wildcard record; `None` means the policy is silent
/// about this agent and access is unrestricted.
pub fn match_record<'a>(policy: &'a ExclusionPolicy, agent_token: &str) -> Option<&'a PolicyRecord> {
    match_record_index(policy, agent_token).map(|(_, r)| r)
}

fn match_record_index<'a>(
    policy: &'a ExclusionPolicy,
    agent_token: &str,
) -> Option<(usize, &'a PolicyRecord)> {
    policy
        .records
        .iter()
        .enumerate()
        .find(|(_, r)| r.names_agent(agent_token))
        .or_else(|| policy.records.iter().enumerate().find(|(_, r)| r.is_wildcard()))
}

/// One attempted access, as seen by the policy evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessRequest {
    pub agent_token: String,
    #[serde(default)]
    pub origin_address: String,
    #[serde(default)]
    pub proxy_address: Option<String>,
    pub path: String,
    #[serde(default)]
    pub declared_purpose: String,
    /// Seconds; requests must be fed to the evaluator in nondecreasing
    /// time order.
    #[serde(default)]
    pub time: u64,
    #[serde(default)]
    pub catalog_fraction_fetched: f64,
}

impl AccessRequest {
    pub fn validate(&self) -> Result<(), String> {
        if !self.path.starts_with('/') {
            return Err(format!("path '{}' must begin with '/'", self.path));
        }
        if !(0.0..=1.0).contains(&self.catalog_fraction_fetched) {
            return Err(format!(
                "catalog_fraction_fetched {} must lie in [0, 1]",
                self.catalog_fraction_fetched
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DenyReason {
    Path,
    Purpose,
    Amount,
    Unassented,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict")]
pub enum AccessDecision {
    #[serde(rename = "ALLOW")]
    Allow,
    #[serde(rename = "DENY")]
    Deny { reason: DenyReason },
    #[serde(rename = "THROTTLE")]
    Throttle { retry_after: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventClass {
    Compliant,
    Breach,
    Unassented,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccessEvent {
    pub time: u64,
    pub agent: String,
    pub path: String,
    pub class: EventClass,
}

/// Decision history for one policy: which agents assented, their recent
/// query times per record, and the classified event log. Throttled
/// attempts are tallied separately — being told to retry later is neither
/// a compliant access nor a breach of terms.
#[derive(Debug, Clone, Default)]
pub struct AssentLedger {
    assents: BTreeMap<String, u64>,
    query_log: BTreeMap<(String, usize), VecDeque<u64>>,
    pub events: Vec<AccessEvent>,
    throttled: BTreeMap<String, u64>,
}

impl AssentLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn has_assented(&self, agent_token: &str) -> bool {
        self.assents.contains_key(&agent_token.to_ascii_lowercase())
    }

    pub fn assent_time(&self, agent_token: &str) -> Option<u64> {
        self.assents.get(&agent_token.to_ascii_lowercase()).copied()
    }

    fn push_event(&mut self, request: &AccessRequest, class: EventClass) {
        self.events.push(AccessEvent {
            time: request.time,
            agent: request.agent_token.to_ascii_lowercase(),
            path: request.path.clone(),
            class,
        });
    }
}

/// Evaluate one request against the policy and record it in the ledger.
///
/// Checks run in a fixed order so deny reasons are deterministic: assent,
/// path, purpose, amount, then query frequency. A request for exactly
/// `/robots.txt` always succeeds and marks the agent as assented; it does
/// not consume query budget.
pub fn evaluate_access(
    policy: &ExclusionPolicy,
    request: &AccessRequest,
    ledger: &mut AssentLedger,
) -> AccessDecision {
    let agent_key = request.agent_token.to_ascii_lowercase();
    if request.path == "/robots.txt" {
        ledger.assents.entry(agent_key).or_insert(request.time);
        ledger.push_event(request, EventClass::Compliant);
        return AccessDecision::Allow;
    }
    if !ledger.assents.contains_key(&agent_key) {
        ledger.push_event(request, EventClass::Unassented);
        return AccessDecision::Deny {
            reason: DenyReason::Unassented,
        };
    }
    if let Some((idx, record)) = match_record_index(policy, &request.agent_token) {
        if record.disallow.iter().any(|d| request.path.starts_with(d.as_str())) {
            ledger.push_event(request, EventClass::Breach);
            return AccessDecision::Deny {
                reason: DenyReason::Path,
            };
        }
        if let Some(allowed) = &record.purpose_allow {
            if !allowed.contains(&request.declared_purpose.to_ascii_lowercase()) {
                ledger.push_event(request, EventClass::Breach);
                return AccessDecision::Deny {
                    reason: DenyReason::Purpose,
                };
            }
        }
        if let Some(limit) = record.amount_limit {
            if request.catalog_fraction_fetched > limit {
                ledger.push_event(request, EventClass::Breach);
                return AccessDecision::Deny {
                    reason: DenyReason::Amount,
                };
            }
        }
        if let Some(crawl) = &record.crawl_limit {
            let log = ledger.query_log.entry((agent_key.clone(), idx)).or_default();
            while log.front().is_some_and(|&t| t + crawl.window <= request.time) {
                log.pop_front();
            }
            if log.len() as u64 >= u64::from(crawl.max_queries) {
                let oldest = *log.front().expect("log holds at least max_queries entries");
                let retry_after = oldest + crawl.window - request.time;
                *ledger.throttled.entry(agent_key).or_insert(0) += 1;
                return AccessDecision::Throttle { retry_after };
            }
            log.push_back(request.time);
        }
    }
    ledger.push_event(request, EventClass::Compliant);
    AccessDecision::Allow
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct AgentCounts {
    pub compliant: u64,
    pub breach: u64,
    pub unassented: u64,
    pub throttled: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct LedgerReport {
    pub compliant: u64,
    pub breach: u64,
    pub unassented: u64,
    pub throttled: u64,
    pub per_agent: BTreeMap<String, AgentCounts>,
}

/// Tally the ledger's events per class and per agent.
pub fn ledger_report(ledger: &AssentLedger) -> LedgerReport {
    let mut report = LedgerReport::default();
    for event in &ledger.events {
        let agent = report.per_agent.entry(event.agent.clone()).or_default();
        match event.class {
            EventClass::Compliant => {
                report.compliant += 1;
                agent.compliant += 1;
            }
            EventClass::Breach => {
                report.breach += 1;
                agent.breach += 1;
            }
            EventClass::Unassented => {
                report.unassented += 1;
                agent.unassented += 1;
            }
        }
    }
    for (agent, &count) in &ledger.throttled {
        report.throttled += count;
        report.per_agent.entry(agent.clone()).or_default().throttled = count;
    }
    report
}
