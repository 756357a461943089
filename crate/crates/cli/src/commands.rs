use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use feint_core::catalog::{load_catalog, Catalog};
use feint_core::compose::compose_dbms;
use feint_core::config::{Scenario, ScenarioConfig};
use feint_core::harness::{default_pools, evaluate_pools, Harness, InferenceCounter, TrainingLog};
use feint_core::reward::FDivergence;
use feint_core::scripted::EventRecord;
use feint_core::templates::{precompute_templates, JunctionRule};
use serde::Serialize;

use crate::output::{sha256_hex, Manifest, OutDir};
use crate::{Cli, CliError, Command};

const LEARNERS: [&str; 1] = ["actor-critic"];
const DEFAULT_EVAL_EPISODES: usize = 100;
const DEFAULT_BENCH_EPISODES: usize = 1000;
const OVERHEAD_BUDGET: f64 = 1.05;
const TAIL_FRACTION: f64 = 0.2;

fn parse_agents(list: &str) -> Result<Vec<usize>, CliError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| CliError::Usage(format!("bad agent index '{s}' in --feint-agents")))
        })
        .collect()
}

/// Loads the config and applies the command-line overrides.
fn load_scenario(cli: &Cli) -> Result<Scenario, CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Usage("--config is required".into()))?;
    let base = Scenario::load(path, cli.catalog.as_deref())?;
    let mut cfg = base.config;
    if let Some(n) = cli.episodes {
        cfg.episodes = n;
    }
    if let Some(list) = &cli.feint_agents {
        cfg.feint_agents = parse_agents(list)?;
    }
    if let Some(f) = &cli.f_divergence {
        cfg.f_divergence = f.parse::<FDivergence>()?;
    }
    Ok(Scenario::new(cfg, base.catalog)?)
}

fn load_catalog_only(cli: &Cli) -> Result<Arc<Catalog>, CliError> {
    match (&cli.catalog, &cli.config) {
        (Some(p), _) => Ok(Arc::new(load_catalog(p)?)),
        (None, Some(_)) => Ok(load_scenario(cli)?.catalog),
        (None, None) => Err(CliError::Usage("--catalog or --config is required".into())),
    }
}

fn hash_of<T: Serialize>(value: &T) -> Result<String, CliError> {
    Ok(sha256_hex(
        &serde_json::to_vec(value).map_err(|e| CliError::Io(e.to_string()))?,
    ))
}

fn scenario_hash(s: &Scenario) -> Result<String, CliError> {
    hash_of(&(&s.config, s.catalog.as_ref()))
}

fn jsonl<T: Serialize>(rows: &[T]) -> Result<String, CliError> {
    let mut out = String::new();
    for r in rows {
        out += &serde_json::to_string(r).map_err(|e| CliError::Io(e.to_string()))?;
        out.push('\n');
    }
    Ok(out)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let out_dir = cli
        .out_dir
        .as_deref()
        .ok_or_else(|| CliError::Usage("--out-dir is required".into()))?;
    if let Some(l) = &cli.learner {
        if !LEARNERS.contains(&l.as_str()) {
            return Err(CliError::Usage(format!(
                "unknown learner '{l}', expected one of {LEARNERS:?}"
            )));
        }
    }
    let mut out = OutDir::create(out_dir)?;
    let config_hash = match &cli.command {
        Command::Templates { similar } => templates(cli, &mut out, *similar)?,
        Command::Compose { from, target } => compose(cli, &mut out, from, target)?,
        Command::Simulate => simulate(cli, &mut out)?,
        Command::Train => train(cli, &mut out)?,
        Command::Evaluate { pretrain } => evaluate(cli, &mut out, *pretrain)?,
        Command::BenchOverhead => bench_overhead(cli, &mut out)?,
    };
    let show = |p: Option<&Path>| p.map(|p| p.display().to_string());
    let manifest = Manifest {
        subcommand: cli.command.name().to_string(),
        config: show(cli.config.as_deref()),
        catalog: show(cli.catalog.as_deref()),
        seed: cli.seed,
        out_dir: out.root().display().to_string(),
        build: format!("feint-cli {}", env!("CARGO_PKG_VERSION")),
        config_hash,
        timings: String::new(),
        artifacts: Vec::new(),
    };
    out.finish(manifest)
}

#[derive(Serialize)]
struct PairCount {
    behavior_i: String,
    behavior_j: String,
    count: usize,
}

fn templates(cli: &Cli, out: &mut OutDir, similar: bool) -> Result<String, CliError> {
    let cat = load_catalog_only(cli)?;
    let rule = if similar {
        JunctionRule::SameIdOrSimilar
    } else {
        JunctionRule::SameId
    };
    let set = precompute_templates(&cat, rule);
    out.write("templates.json", &(set.to_json() + "\n"))?;
    let pairs: Vec<PairCount> = set
        .pair_counts()
        .into_iter()
        .map(|((behavior_i, behavior_j), count)| PairCount {
            behavior_i,
            behavior_j,
            count,
        })
        .collect();
    out.write_json(
        "summary.json",
        &serde_json::json!({ "rule": rule, "count": set.len(), "pairs": pairs }),
    )?;
    hash_of(&(cat.as_ref(), rule))
}

fn compose(cli: &Cli, out: &mut OutDir, from: &str, target: &str) -> Result<String, CliError> {
    let cat = load_catalog_only(cli)?;
    let set = precompute_templates(&cat, JunctionRule::SameId);
    let dbms = compose_dbms(from, target, &set, &cat)?;
    out.write_json("dbms.json", &dbms)?;
    let ids: Vec<&str> = dbms.iter().map(|d| d.id.as_str()).collect();
    out.write_json(
        "summary.json",
        &serde_json::json!({ "from": from, "target": target, "count": dbms.len(), "ids": ids }),
    )?;
    hash_of(&(cat.as_ref(), from, target))
}

#[derive(Serialize)]
struct EpisodeLine<'a, T> {
    episode: usize,
    #[serde(flatten)]
    record: &'a T,
}

fn simulate(cli: &Cli, out: &mut OutDir) -> Result<String, CliError> {
    let scenario = load_scenario(cli)?;
    let hash = scenario_hash(&scenario)?;
    let episodes = scenario.config.episodes;
    let mut h = Harness::new(scenario)?;
    let mut log = TrainingLog {
        seed: cli.seed,
        config_hash: hash.clone(),
        rows: Vec::new(),
        wall_seconds: Vec::new(),
    };
    let mut events: Vec<EpisodeLine<EventRecord>> = Vec::new();
    let mut reports = Vec::with_capacity(episodes);
    for e in 0..episodes {
        reports.push(h.run_episode(e, cli.seed, false, true)?);
    }
    let mut decisions = Vec::new();
    for r in &reports {
        log.push(r);
        events.extend(r.events.iter().map(|record| EpisodeLine {
            episode: r.episode,
            record,
        }));
        decisions.extend(r.decisions.iter().map(|record| EpisodeLine {
            episode: r.episode,
            record,
        }));
    }
    out.write("episodes.csv", &log.to_csv())?;
    if !events.is_empty() {
        out.write("events.jsonl", &jsonl(&events)?)?;
    }
    if !decisions.is_empty() {
        out.write("decisions.jsonl", &jsonl(&decisions)?)?;
    }
    out.write_json(
        "summary.json",
        &serde_json::json!({ "episodes": episodes, "counter": h.counter }),
    )?;
    Ok(hash)
}

#[derive(Serialize)]
struct AgentSummary {
    name: String,
    feint: bool,
    mean_reward: f64,
    tail_mean_reward: f64,
}

fn agent_summaries(h: &Harness, log: &TrainingLog) -> Vec<AgentSummary> {
    h.policies
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let r = log.rewards(i);
            AgentSummary {
                name: p.name.clone(),
                feint: p.feint.is_some(),
                mean_reward: r.iter().sum::<f64>() / r.len().max(1) as f64,
                tail_mean_reward: log.tail_mean(i, TAIL_FRACTION),
            }
        })
        .collect()
}

fn timings_csv(log: &TrainingLog) -> String {
    let mut s = String::from("episode,wall_seconds\n");
    for (e, w) in log.wall_seconds.iter().enumerate() {
        s += &format!("{e},{w}\n");
    }
    s
}

fn train(cli: &Cli, out: &mut OutDir) -> Result<String, CliError> {
    let scenario = load_scenario(cli)?;
    let hash = scenario_hash(&scenario)?;
    let episodes = scenario.config.episodes;
    let mut h = Harness::new(scenario)?;
    let log = h.train(episodes, cli.seed, &hash)?;
    out.write("train.csv", &log.to_csv())?;
    out.write_timing("timings.csv", &timings_csv(&log))?;
    out.write_json("policies.json", &h.policies)?;
    out.write_json(
        "summary.json",
        &serde_json::json!({ "episodes": episodes, "tail_fraction": TAIL_FRACTION, "agents": agent_summaries(&h, &log), "counter": h.counter }),
    )?;
    Ok(hash)
}

fn evaluate(cli: &Cli, out: &mut OutDir, pretrain: usize) -> Result<String, CliError> {
    let scenario = load_scenario(cli)?;
    let episodes = cli.episodes.unwrap_or(DEFAULT_EVAL_EPISODES);
    let hash = hash_of(&(
        &scenario.config,
        scenario.catalog.as_ref(),
        episodes,
        pretrain,
    ))?;
    let pools = default_pools();
    let report = evaluate_pools(
        &scenario.config,
        scenario.catalog.clone(),
        &pools,
        episodes,
        pretrain,
        cli.seed,
    )?;
    out.write("payoff.csv", &report.matrix.to_csv())?;
    let find = |name: &str| report.pools.iter().find(|p| p.name == name);
    let direction = match (find("feint"), find("no_feint")) {
        (Some(f), Some(n)) => serde_json::json!({
            "lower_exploitability": f.exploitability < n.exploitability,
            "higher_efficacy": f.efficacy > n.efficacy,
        }),
        _ => serde_json::Value::Null,
    };
    out.write_json(
        "evaluation.json",
        &serde_json::json!({ "episodes_per_cell": episodes, "pretrain": pretrain, "pools": report.pools, "feint_vs_no_feint": direction }),
    )?;
    Ok(hash)
}

#[derive(Serialize)]
struct BenchArm {
    feint_agents: Vec<usize>,
    counter: InferenceCounter,
    agents: Vec<AgentSummary>,
}

/// Trains a fresh copy of `config` and returns the arm summary and the
/// training wall time, harness construction excluded.
fn timed_arm(
    config: ScenarioConfig,
    catalog: Arc<Catalog>,
    episodes: usize,
    seed: u64,
    hash: &str,
) -> Result<(BenchArm, f64), CliError> {
    let feint_agents = config.feint_agents.clone();
    let mut h = Harness::new(Scenario::new(config, catalog)?)?;
    let start = Instant::now();
    let log = h.train(episodes, seed, hash)?;
    let wall = start.elapsed().as_secs_f64();
    Ok((
        BenchArm {
            feint_agents,
            counter: h.counter,
            agents: agent_summaries(&h, &log),
        },
        wall,
    ))
}

fn bench_overhead(cli: &Cli, out: &mut OutDir) -> Result<String, CliError> {
    let scenario = load_scenario(cli)?;
    let episodes = cli.episodes.unwrap_or(DEFAULT_BENCH_EPISODES);
    if scenario.config.feint_agents.is_empty() {
        return Err(CliError::Usage(
            "bench-overhead needs at least one feint agent".into(),
        ));
    }
    let hash = hash_of(&(&scenario.config, scenario.catalog.as_ref(), episodes))?;
    let mut off_cfg = scenario.config.clone();
    off_cfg.feint_agents.clear();
    // arms run one after the other so they do not compete for cores
    let (off, wall_off) = timed_arm(off_cfg, scenario.catalog.clone(), episodes, cli.seed, &hash)?;
    let (on, wall_on) = timed_arm(
        scenario.config.clone(),
        scenario.catalog.clone(),
        episodes,
        cli.seed,
        &hash,
    )?;
    let ratio = wall_on / wall_off;
    out.write_json(
        "bench.json",
        &serde_json::json!({ "episodes": episodes, "feint_off": off, "feint_on": on }),
    )?;
    let report = serde_json::json!({
        "episodes": episodes,
        "wall_seconds_feint_off": wall_off,
        "wall_seconds_feint_on": wall_on,
        "overhead_ratio": ratio,
        "budget": OVERHEAD_BUDGET,
        "within_budget": ratio <= OVERHEAD_BUDGET,
        "violations": off.counter.violations + on.counter.violations,
    });
    out.write_timing("overhead.json", &format!("{report:#}\n"))?;
    Ok(hash)
}
