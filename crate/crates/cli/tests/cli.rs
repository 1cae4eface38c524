//! End-to-end checks of the `shopbot` binary: exit codes, output files and
//! the canonical policy echo.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn shopbot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shopbot"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

#[test]
fn invalid_buyer_mix_is_rejected_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    write(
        &config,
        r#"{
  "market": {"buyers_per_tick": 100, "type1_fraction": 1.7,
             "valuation": {"kind": "constant", "value": 1.0},
             "price_tick": 0.01, "price_max": 1.0},
  "sellers": [{"cost": 0.0, "strategy": {"kind": "myopic_optimal"}}],
  "ticks": 10, "seed": 1
}"#,
    );
    let out = shopbot(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("type1_fraction"), "stderr: {stderr}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    write(&config, r#"{"ticks": 10, "seed": 1, "typo_field": true}"#);
    let out = shopbot(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("typo_field"));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = shopbot(&[
        "simulate",
        "--config",
        dir.path().join("nope.json").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn robots_parse_echoes_the_canonical_form() {
    let dir = tempfile::tempdir().unwrap();
    let policy = dir.path().join("robots.txt");
    write(&policy, "# note\nuser-agent: *\ndisallow: /prices\n");
    let out = shopbot(&["robots", "parse", policy.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        String::from_utf8_lossy(&out.stdout),
        "User-agent: *\nDisallow: /prices\n"
    );
}

#[test]
fn robots_parse_reports_positioned_errors() {
    let dir = tempfile::tempdir().unwrap();
    let policy = dir.path().join("robots.txt");
    write(&policy, "User-agent: *\nDisallow /broken\n");
    let out = shopbot(&["robots", "parse", policy.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn robots_check_walks_the_decision_space() {
    let dir = tempfile::tempdir().unwrap();
    let policy = dir.path().join("robots.txt");
    write(
        &policy,
        "User-agent: fairbot\nDisallow: /private\nCrawl-limit: 60/3600\nPurpose-allow: research\n",
    );
    let history = dir.path().join("history.jsonl");
    write(
        &history,
        r#"{"agent_token":"fairbot","path":"/robots.txt","declared_purpose":"research","time":0}"#,
    );
    let base = [
        "robots",
        "check",
        policy.to_str().unwrap(),
        "--agent",
        "fairbot",
        "--purpose",
        "research",
        "--history",
        history.to_str().unwrap(),
    ];

    let allow = shopbot(&[&base[..], &["--path", "/catalog"]].concat());
    assert_eq!(allow.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&allow.stdout).contains(r#""verdict":"ALLOW""#));

    let deny = shopbot(&[&base[..], &["--path", "/private/x"]].concat());
    assert_eq!(deny.status.code(), Some(4));
    let stdout = String::from_utf8_lossy(&deny.stdout);
    assert!(stdout.contains(r#""verdict":"DENY""#) && stdout.contains(r#""reason":"path""#));

    // Unassented agents are denied outright.
    let cold = shopbot(&[
        "robots",
        "check",
        policy.to_str().unwrap(),
        "--agent",
        "fairbot",
        "--path",
        "/catalog",
    ]);
    assert_eq!(cold.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&cold.stdout).contains("unassented"));
}

#[test]
fn robots_check_throttles_the_sixty_first_request() {
    let dir = tempfile::tempdir().unwrap();
    let policy = dir.path().join("robots.txt");
    write(&policy, "User-agent: *\nDisallow:\nCrawl-limit: 60/3600\n");
    let mut history = String::from(
        r#"{"agent_token":"fairbot","path":"/robots.txt","time":0}"#,
    );
    history.push('\n');
    for t in 1..=60 {
        history.push_str(&format!(
            r#"{{"agent_token":"fairbot","path":"/catalog","time":{t}}}"#
        ));
        history.push('\n');
    }
    let history_path = dir.path().join("history.jsonl");
    write(&history_path, &history);
    let out = shopbot(&[
        "robots",
        "check",
        policy.to_str().unwrap(),
        "--agent",
        "fairbot",
        "--path",
        "/catalog",
        "--history",
        history_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(5));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains(r#""verdict":"THROTTLE""#), "stdout: {stdout}");
    assert!(stdout.contains(r#""retry_after":3540"#), "stdout: {stdout}");
}

#[test]
fn traffic_scenario_emits_expected_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = scenarios().join("traffic_proxy_collateral.json");
    let out_dir = dir.path().join("out");
    let out = shopbot(&[
        "traffic",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let events = fs::read_to_string(out_dir.join("events.csv")).unwrap();
    assert!(events.starts_with("tick,address,agent,path,outcome\n"));
    let fairbot_refused = events
        .lines()
        .any(|l| l.contains("fairbot") && l.ends_with("refused"));
    assert!(fairbot_refused, "events:\n{events}");
    let load: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("load.json")).unwrap()).unwrap();
    assert!(load["load"]["robot_fraction"].as_f64().is_some());
}

#[test]
fn traffic_with_no_agents_produces_empty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("empty.json");
    write(
        &config,
        r#"{"ticks": 5, "seed": 1,
            "traffic": {"agents": [], "threshold": 10, "window": 10, "humans_per_tick": 0}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = shopbot(&[
        "traffic",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let events = fs::read_to_string(out_dir.join("events.csv")).unwrap();
    assert_eq!(events, "tick,address,agent,path,outcome\n");
}

#[test]
fn single_robot_scenario_reports_the_observed_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let config = scenarios().join("traffic_single_robot.json");
    let out_dir = dir.path().join("out");
    let out = shopbot(&[
        "traffic",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let load: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("load.json")).unwrap()).unwrap();
    assert_eq!(load["load"]["robot_fraction"].as_f64().unwrap(), 0.0153);
}

#[test]
fn summary_numbers_are_reproducible_from_the_library() {
    use shopbot_core::engine::{self, EngineConfig, SellerSpec};
    use shopbot_core::market::{MarketConfig, ValuationModel};
    use shopbot_core::strategy::StrategyKind;

    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("scenario.json");
    write(
        &config,
        r#"{
  "market": {"buyers_per_tick": 100, "type1_fraction": 0.75,
             "valuation": {"kind": "constant", "value": 1.0},
             "price_tick": 0.01, "price_max": 1.0},
  "sellers": [{"cost": 0.0, "strategy": {"kind": "myopic_optimal"}},
              {"cost": 0.0, "strategy": {"kind": "myopic_optimal"}}],
  "ticks": 400, "seed": 9
}"#,
    );
    let out_dir = dir.path().join("out");
    let out = shopbot(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();

    let engine_config = EngineConfig::new(
        MarketConfig {
            num_sellers: 2,
            buyers_per_tick: 100,
            type1_fraction: 0.75,
            valuation: ValuationModel::Constant { value: 1.0 },
            price_tick: 0.01,
            price_max: 1.0,
        },
        vec![
            SellerSpec::new(0.0, StrategyKind::MyopicOptimal),
            SellerSpec::new(0.0, StrategyKind::MyopicOptimal),
        ],
    );
    let outcome = engine::run(&engine_config, 400, 9, None).unwrap();

    assert_eq!(
        summary["regime"]["cycle_count"].as_u64().unwrap(),
        outcome.regime.cycle_count as u64
    );
    assert_eq!(
        summary["regime"]["window_mean_price"].as_f64().unwrap(),
        outcome.regime.window_mean_price
    );
    assert_eq!(
        summary["regime"]["mean_trough"].as_f64().unwrap(),
        outcome.regime.mean_trough
    );
    assert_eq!(
        summary["consumer_surplus"].as_f64().unwrap(),
        outcome.summary.consumer_surplus
    );
    for (i, &profit) in outcome.summary.per_seller_mean_profit.iter().enumerate() {
        assert_eq!(summary["per_seller_mean_profit"][i].as_f64().unwrap(), profit);
    }
    if let Some(dispersion) = &outcome.summary.dispersion {
        assert_eq!(
            summary["dispersion"]["range_ratio"].as_f64().unwrap(),
            dispersion.range_ratio
        );
        assert_eq!(
            summary["dispersion"]["coeff_variation"].as_f64().unwrap(),
            dispersion.coeff_variation
        );
    }
}

#[test]
fn sweep_runs_each_scenario_into_its_own_directory() {
    let dir = tempfile::tempdir().unwrap();
    let configs = dir.path().join("configs");
    fs::create_dir(&configs).unwrap();
    let scenario = r#"{
  "market": {"buyers_per_tick": 100, "type1_fraction": 0.5,
             "valuation": {"kind": "constant", "value": 1.0},
             "price_tick": 0.01, "price_max": 1.0},
  "sellers": [{"cost": 0.0, "strategy": {"kind": "myopic_optimal"}},
              {"cost": 0.0, "strategy": {"kind": "myopic_optimal"}}],
  "ticks": 50, "seed": SEED
}"#;
    write(&configs.join("a.json"), &scenario.replace("SEED", "1"));
    write(&configs.join("b.json"), &scenario.replace("SEED", "2"));
    let out_dir = dir.path().join("out");
    let out = shopbot(&[
        "simulate",
        "--config",
        configs.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--sweep",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out_dir.join("a/prices.csv").exists());
    assert!(out_dir.join("b/summary.json").exists());
}
