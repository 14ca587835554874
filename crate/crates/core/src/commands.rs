//! Train, evaluate, sweep and single-episode commands behind the `mixflow`
//! binary. Each returns what it wrote so callers and tests can inspect it.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{combined_csv, write_report, Column, MeanReport, MetricsReport};
use crate::rl::{train_with_progress, Checkpoint, LogRow, PolicyController, TrainConfig, TrainOutcome};
use crate::scenario::{load_scenario_file, presets, ConfigLabel, ControlMode, Scenario};
use crate::sim::{
    simulate_episode, write_decision_trace, write_event_log, ConstantController, Controller, EpisodeResult,
};
use crate::zone::RvAction;

/// Environment variable capping the worker threads of `eval` and `sweep`.
pub const WORKERS_ENV: &str = "MIXFLOW_WORKERS";

/// Scenario file plus the command-line overrides shared by all commands.
#[derive(Debug, Clone, Default)]
pub struct ScenarioArgs {
    pub path: PathBuf,
    pub rv_rate: Option<f64>,
    pub config: Option<ConfigLabel>,
}

impl ScenarioArgs {
    pub fn load(&self) -> Result<Scenario> {
        let mut s = load_scenario_file(&self.path)?;
        if let Some(label) = self.config {
            s = s.with_config(label)?;
        }
        if let Some(rate) = self.rv_rate {
            s = s.with_rv_penetration(rate)?;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub scenario: ScenarioArgs,
    pub iterations: Option<u32>,
    pub seed: Option<u64>,
    /// Output directory for `checkpoint.bin` and `train_log.csv`.
    pub out: PathBuf,
    /// Overrides the checkpoint path.
    pub checkpoint: Option<PathBuf>,
}

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";

fn train_config(scenario: &Scenario, iterations: Option<u32>, seed: Option<u64>) -> TrainConfig {
    let mut c = scenario.train().clone();
    if let Some(n) = iterations {
        c.iterations = n;
    }
    if let Some(s) = seed {
        c.seed = s;
    }
    c
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Trains and writes the checkpoint and the training log.
pub fn cmd_train(args: &TrainArgs, progress: &mut dyn FnMut(&LogRow)) -> Result<TrainOutcome> {
    let scenario = args.scenario.load()?;
    let config = train_config(&scenario, args.iterations, args.seed);
    let outcome = train_with_progress(&scenario, &config, progress)?;
    let ck_path = args.checkpoint.clone().unwrap_or_else(|| args.out.join(CHECKPOINT_FILE));
    outcome.checkpoint.save(&ck_path)?;
    let mut log = Vec::new();
    LogRow::write_csv(&mut log, &outcome.log).expect("write to memory");
    write_file(&args.out.join(TRAIN_LOG_FILE), &log)?;
    Ok(outcome)
}

/// Greedy policy from a checkpoint, or a placeholder when the scenario has
/// no robot-controlled intersection and the policy is never consulted.
fn controller_for(scenario: &Scenario, checkpoint: Option<&Checkpoint>) -> Result<Box<dyn Controller + Send>> {
    match checkpoint {
        Some(ck) => Ok(Box::new(PolicyController::greedy(ck.net()?, &ck.config))),
        None if !scenario.control.modes.contains(&ControlMode::Unsignalized) => {
            Ok(Box::new(ConstantController(RvAction::Stop)))
        }
        None => Err(Error::validation(
            "checkpoint",
            format!("{} has robot-controlled intersections; a checkpoint is required", scenario.label()),
        )),
    }
}

fn pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::validation(WORKERS_ENV, format!("expected a positive integer, got {v:?}")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::validation(WORKERS_ENV, e.to_string()))
}

/// Runs `runs` greedy episodes with seeds `seed_base..seed_base + runs`.
/// Episodes run in parallel; results come back in seed order.
pub fn evaluate(scenario: &Scenario, checkpoint: Option<&Checkpoint>, runs: u32, seed_base: u64) -> Result<Vec<EpisodeResult>> {
    if runs == 0 {
        return Err(Error::validation("runs", "must be at least 1"));
    }
    controller_for(scenario, checkpoint)?;
    let pool = pool()?;
    pool.install(|| {
        (0..u64::from(runs))
            .into_par_iter()
            .map(|k| {
                let mut c = controller_for(scenario, checkpoint)?;
                Ok(simulate_episode(scenario, c.as_mut(), seed_base + k))
            })
            .collect()
    })
}

pub fn column_label(scenario: &Scenario) -> String {
    format!("{}@{}", scenario.label(), scenario.demand.rv_penetration)
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub scenario: ScenarioArgs,
    pub checkpoint: Option<PathBuf>,
    pub runs: u32,
    pub seed: u64,
    pub out: PathBuf,
}

/// Evaluates and writes `per_intersection.csv` and `network.csv`.
pub fn cmd_eval(args: &EvalArgs) -> Result<Column> {
    let scenario = args.scenario.load()?;
    let ck = args.checkpoint.as_deref().map(Checkpoint::load).transpose()?;
    let results = evaluate(&scenario, ck.as_ref(), args.runs, args.seed)?;
    let reports: Vec<MetricsReport> = results.into_iter().map(|r| r.metrics).collect();
    let column = Column { label: column_label(&scenario), report: MeanReport::of(&reports) };
    write_report(std::slice::from_ref(&column), &args.out)?;
    Ok(column)
}

#[derive(Debug, Clone)]
pub struct SweepArgs {
    pub scenario: PathBuf,
    pub configs: Vec<ConfigLabel>,
    pub rv_rates: Vec<f64>,
    /// Directory holding one checkpoint per (configuration, RV rate).
    pub checkpoints: PathBuf,
    /// Train members whose checkpoint is missing.
    pub train: bool,
    pub iterations: Option<u32>,
    pub runs: u32,
    pub seed: u64,
    pub out: PathBuf,
}

pub const SWEEP_FILE: &str = "sweep.csv";

/// `<dir>/<xU+yS>_rv<rate>.bin`.
pub fn sweep_checkpoint_path(dir: &Path, label: ConfigLabel, rv_rate: f64) -> PathBuf {
    dir.join(format!("{label}_rv{rv_rate}.bin"))
}

/// Evaluates every configuration at every RV rate (training first when
/// asked and needed), adds the all-signal baseline column when it is not
/// already part of the grid, and writes the combined table plus the usual
/// per-intersection and network files.
pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<Column>> {
    if args.configs.is_empty() {
        return Err(Error::validation("config", "at least one configuration"));
    }
    let template = load_scenario_file(&args.scenario)?;
    let rates = if args.rv_rates.is_empty() {
        vec![template.demand.rv_penetration]
    } else {
        args.rv_rates.clone()
    };
    let n = template.network.intersections.len();
    let baseline = ConfigLabel { unsignalized: 0, signalized: n };

    let mut members = Vec::new();
    if !args.configs.contains(&baseline) {
        members.push((baseline, rates[0], "baseline".to_string()));
    }
    for &label in &args.configs {
        for &rate in &rates {
            members.push((label, rate, String::new()));
        }
    }
    let scenarios = members
        .iter()
        .map(|(label, rate, _)| template.with_config(*label)?.with_rv_penetration(*rate))
        .collect::<Result<Vec<_>>>()?;

    let pool = pool()?;
    let columns = pool.install(|| {
        members
            .par_iter()
            .zip(&scenarios)
            .map(|((label, rate, name), scenario)| {
                sweep_member(args, scenario, *label, *rate)
                    .map(|report| Column {
                        label: if name.is_empty() { column_label(scenario) } else { name.clone() },
                        report,
                    })
                    .map_err(|e| with_context(e, &format!("{label} at RV rate {rate}")))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    write_report(&columns, &args.out)?;
    write_file(&args.out.join(SWEEP_FILE), combined_csv(&columns).as_bytes())?;
    Ok(columns)
}

fn with_context(e: Error, context: &str) -> Error {
    match e {
        Error::Validation { field, message } => Error::Validation { field, message: format!("{context}: {message}") },
        Error::NonFiniteLoss { step, detail } => Error::NonFiniteLoss { step, detail: format!("{context}: {detail}") },
        Error::Corrupt(m) => Error::Corrupt(format!("{context}: {m}")),
        other => other,
    }
}

fn sweep_member(args: &SweepArgs, scenario: &Scenario, label: ConfigLabel, rate: f64) -> Result<MeanReport> {
    let ck = if label.unsignalized == 0 {
        None
    } else {
        let path = sweep_checkpoint_path(&args.checkpoints, label, rate);
        if path.exists() || !args.train {
            Some(Checkpoint::load(&path)?)
        } else {
            let config = train_config(scenario, args.iterations, Some(scenario.train().seed));
            let outcome = train_with_progress(scenario, &config, &mut |_| {})?;
            outcome.checkpoint.save(&path)?;
            Some(outcome.checkpoint)
        }
    };
    // members are already spread over the pool; run their episodes inline
    let reports: Vec<MetricsReport> = (0..u64::from(args.runs.max(1)))
        .map(|k| -> Result<MetricsReport> {
            let mut c = controller_for(scenario, ck.as_ref())?;
            Ok(simulate_episode(scenario, c.as_mut(), args.seed + k).metrics)
        })
        .collect::<Result<_>>()?;
    Ok(MeanReport::of(&reports))
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub scenario: ScenarioArgs,
    pub checkpoint: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
}

pub const EVENTS_FILE: &str = "events.csv";
pub const DECISIONS_FILE: &str = "decisions.csv";

/// One episode with its event log and decision trace written out.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<EpisodeResult> {
    let scenario = args.scenario.load()?;
    let ck = args.checkpoint.as_deref().map(Checkpoint::load).transpose()?;
    let mut controller = controller_for(&scenario, ck.as_ref())?;
    let result = simulate_episode(&scenario, controller.as_mut(), args.seed);
    let node_of = |ix: crate::scenario::IntersectionId| scenario.network.intersections[ix.index()].node.0;
    let mut events = Vec::new();
    write_event_log(&mut events, &result.events, node_of).expect("write to memory");
    write_file(&args.out.join(EVENTS_FILE), &events)?;
    let mut decisions = Vec::new();
    write_decision_trace(&mut decisions, &result.decisions, node_of).expect("write to memory");
    write_file(&args.out.join(DECISIONS_FILE), &decisions)?;
    Ok(result)
}

/// Writes the shipped scenarios as `<name>.json` into `dir`.
pub fn cmd_presets(dir: &Path) -> Result<Vec<PathBuf>> {
    presets::names()
        .iter()
        .map(|name| {
            let s = presets::by_name(name).expect("listed preset");
            let path = dir.join(format!("{name}.json"));
            write_file(&path, s.to_canonical_json().as_bytes())?;
            Ok(path)
        })
        .collect()
}
