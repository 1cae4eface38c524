//! Scenario-driven command line for the market simulator and the
//! robot-exclusion toolkit.
//!
//! Exit codes: 0 success (or ALLOW), 2 invalid config or policy, 3 I/O
//! failure, 4 DENY, 5 THROTTLE.

mod config;
mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shopbot_core::engine;
use shopbot_core::exclusion::{
    evaluate_access, parse_policy, serialize_policy, AccessDecision, AccessRequest, AssentLedger,
    ExclusionPolicy,
};
use shopbot_core::traffic::{aggregate_load, load_fraction, metasite_scenario, run_traffic};

use config::ScenarioConfig;
use output::{
    write_events_csv, write_json, write_prices_csv, write_summary_json, AggregateRow, LoadDoc,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_DENY: u8 = 4;
const EXIT_THROTTLE: u8 = 5;

#[derive(Parser)]
#[command(name = "shopbot", version, about = "Price-competition simulator and robot-exclusion toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a market scenario and emit prices.csv + summary.json
    Simulate {
        /// Scenario file, or a directory of scenarios with --sweep
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing)
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario tick count
        #[arg(long)]
        ticks: Option<u64>,
        /// Run every *.json under --config in parallel, each into its own
        /// subdirectory of --out
        #[arg(long)]
        sweep: bool,
    },
    /// Inspect and evaluate robot-exclusion policies
    Robots {
        #[command(subcommand)]
        action: RobotsAction,
    },
    /// Run a traffic/defense scenario and emit events.csv + load.json
    Traffic {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed (metasite scheduling)
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Subcommand)]
enum RobotsAction {
    /// Parse a policy file and print its canonical form
    Parse { file: PathBuf },
    /// Evaluate a single access request; exit 0 ALLOW, 4 DENY, 5 THROTTLE
    Check {
        file: PathBuf,
        #[arg(long)]
        agent: String,
        #[arg(long)]
        path: String,
        #[arg(long, default_value = "unspecified")]
        purpose: String,
        /// Catalog fraction already fetched by this agent
        #[arg(long, default_value_t = 0.0)]
        fraction: f64,
        /// Request time in seconds; defaults to just after the history
        #[arg(long)]
        time: Option<u64>,
        #[arg(long, default_value = "unknown")]
        origin: String,
        /// JSON-lines file of prior requests replayed into the ledger
        #[arg(long)]
        history: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            ticks,
            sweep,
        } => {
            if sweep {
                cmd_sweep(&config, &out, seed, ticks)
            } else {
                cmd_simulate(&config, &out, seed, ticks)
            }
        }
        Command::Robots { action } => match action {
            RobotsAction::Parse { file } => cmd_robots_parse(&file),
            RobotsAction::Check {
                file,
                agent,
                path,
                purpose,
                fraction,
                time,
                origin,
                history,
            } => cmd_robots_check(&file, &agent, &path, &purpose, fraction, time, &origin, history.as_deref()),
        },
        Command::Traffic { config, out, seed } => cmd_traffic(&config, &out, seed),
    };
    ExitCode::from(code)
}

fn fail_config(message: impl std::fmt::Display) -> u8 {
    eprintln!("error: {message}");
    EXIT_CONFIG
}

fn fail_io(message: impl std::fmt::Display) -> u8 {
    eprintln!("error: {message}");
    EXIT_IO
}

fn load_scenario(path: &Path) -> Result<ScenarioConfig, u8> {
    let text = fs::read_to_string(path)
        .map_err(|e| fail_io(format_args!("reading {}: {e}", path.display())))?;
    ScenarioConfig::load(&text).map_err(fail_config)
}

fn cmd_simulate(config_path: &Path, out_dir: &Path, seed: Option<u64>, ticks: Option<u64>) -> u8 {
    let scenario = match load_scenario(config_path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let engine_config = match scenario.engine_config() {
        Ok(c) => c,
        Err(e) => return fail_config(e),
    };
    let seed = seed.unwrap_or(scenario.seed);
    let ticks = ticks.unwrap_or(scenario.ticks);
    let outcome = match engine::run(&engine_config, ticks, seed, None) {
        Ok(o) => o,
        Err(e) => return fail_config(e),
    };
    if let Err(e) = fs::create_dir_all(out_dir) {
        return fail_io(format_args!("creating {}: {e}", out_dir.display()));
    }
    if let Err(e) = write_prices_csv(&out_dir.join("prices.csv"), &outcome.series, &engine_config.market) {
        return fail_io(e);
    }
    if let Err(e) = write_summary_json(&out_dir.join("summary.json"), &outcome) {
        return fail_io(e);
    }
    println!(
        "{} ticks, regime {:?}, outputs in {}",
        ticks,
        outcome.regime.classification,
        out_dir.display()
    );
    0
}

fn cmd_sweep(config_dir: &Path, out_dir: &Path, seed: Option<u64>, ticks: Option<u64>) -> u8 {
    let entries = match fs::read_dir(config_dir) {
        Ok(entries) => entries,
        Err(e) => return fail_io(format_args!("reading {}: {e}", config_dir.display())),
    };
    let mut configs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    configs.sort();
    if configs.is_empty() {
        return fail_config(format_args!("no *.json scenarios under {}", config_dir.display()));
    }
    let codes: Vec<u8> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|path| {
                let stem = path.file_stem().expect("json file has a stem").to_owned();
                let sub_out = out_dir.join(stem);
                scope.spawn(move || cmd_simulate(path, &sub_out, seed, ticks))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("runner thread")).collect()
    });
    codes.into_iter().max().unwrap_or(0)
}

fn load_policy(path: &Path) -> Result<ExclusionPolicy, u8> {
    let bytes = fs::read(path).map_err(|e| fail_io(format_args!("reading {}: {e}", path.display())))?;
    parse_policy(&bytes).map_err(|e| fail_config(format_args!("{}: {e}", path.display())))
}

fn cmd_robots_parse(file: &Path) -> u8 {
    let policy = match load_policy(file) {
        Ok(p) => p,
        Err(code) => return code,
    };
    for warning in &policy.warnings {
        eprintln!("warning: {warning}");
    }
    print!("{}", serialize_policy(&policy));
    0
}

#[allow(clippy::too_many_arguments)]
fn cmd_robots_check(
    file: &Path,
    agent: &str,
    path: &str,
    purpose: &str,
    fraction: f64,
    time: Option<u64>,
    origin: &str,
    history: Option<&Path>,
) -> u8 {
    let policy = match load_policy(file) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let mut ledger = AssentLedger::new();
    let mut last_time = None;
    if let Some(history_path) = history {
        let text = match fs::read_to_string(history_path) {
            Ok(t) => t,
            Err(e) => return fail_io(format_args!("reading {}: {e}", history_path.display())),
        };
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let request: AccessRequest = match serde_json::from_str(line) {
                Ok(r) => r,
                Err(e) => return fail_config(format_args!("{}:{}: {e}", history_path.display(), i + 1)),
            };
            last_time = Some(request.time.max(last_time.unwrap_or(0)));
            evaluate_access(&policy, &request, &mut ledger);
        }
    }
    let request = AccessRequest {
        agent_token: agent.to_string(),
        origin_address: origin.to_string(),
        proxy_address: None,
        path: path.to_string(),
        declared_purpose: purpose.to_string(),
        time: time.unwrap_or_else(|| last_time.map_or(0, |t| t + 1)),
        catalog_fraction_fetched: fraction,
    };
    if let Err(e) = request.validate() {
        return fail_config(e);
    }
    let decision = evaluate_access(&policy, &request, &mut ledger);
    println!("{}", serde_json::to_string(&decision).expect("decision serializes"));
    match decision {
        AccessDecision::Allow => 0,
        AccessDecision::Deny { .. } => EXIT_DENY,
        AccessDecision::Throttle { .. } => EXIT_THROTTLE,
    }
}

fn cmd_traffic(config_path: &Path, out_dir: &Path, seed: Option<u64>) -> u8 {
    let scenario = match load_scenario(config_path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let policy = match &scenario.policy_file {
        None => None,
        Some(rel) => {
            // Policy paths resolve relative to the scenario file.
            let path = config_path.parent().unwrap_or(Path::new(".")).join(rel);
            match load_policy(&path) {
                Ok(p) => Some(p),
                Err(code) => return code,
            }
        }
    };
    let traffic_config = match scenario.traffic_config(policy) {
        Ok(c) => c,
        Err(e) => return fail_config(e),
    };
    let outcome = match run_traffic(&traffic_config) {
        Ok(o) => o,
        Err(e) => return fail_config(e),
    };
    let seed = seed.unwrap_or(scenario.seed);
    let traffic_section = scenario.traffic.as_ref().expect("traffic section checked above");
    let load_window = traffic_section.load_window.unwrap_or(scenario.ticks.max(1));
    let load = load_fraction(&outcome.ledger, load_window, traffic_section.capacity_threshold);
    let aggregate = traffic_section
        .aggregate_robot_counts
        .iter()
        .map(|&k| {
            let projected = aggregate_load(load.robot_fraction, k, traffic_section.capacity_threshold);
            AggregateRow {
                robot_count: k,
                per_robot_fraction: load.robot_fraction,
                robot_fraction: projected.robot_fraction,
                harm_flag: projected.harm_flag,
            }
        })
        .collect();
    let metasite = scenario
        .metasite_config()
        .map(|m| metasite_scenario(&m, scenario.ticks, seed));

    if let Err(e) = fs::create_dir_all(out_dir) {
        return fail_io(format_args!("creating {}: {e}", out_dir.display()));
    }
    if let Err(e) = write_events_csv(&out_dir.join("events.csv"), &outcome.ledger) {
        return fail_io(e);
    }
    let doc = LoadDoc {
        load,
        aggregate,
        metasite,
    };
    if let Err(e) = write_json(&out_dir.join("load.json"), &doc) {
        return fail_io(e);
    }
    println!(
        "{} events, robot fraction {:.4}, outputs in {}",
        outcome.ledger.events.len(),
        doc.load.robot_fraction,
        out_dir.display()
    );
    0
}
