use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{select_action, Agent, Checkpoint, PrioritizedReplay, TrainConfig, Transition};
use crate::error::{Error, Result};
use crate::scenario::{ControlMode, Scenario};
use crate::sim::{simulate_episode_for, Controller, DecisionContext};
use crate::zone::RvAction;

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub iteration: u32,
    pub episode_return: f64,
    /// Mean loss of this episode's gradient steps; 0 when there were none.
    pub mean_loss: f64,
    pub epsilon: f64,
    pub buffer_size: usize,
}

impl LogRow {
    pub const HEADER: &'static str = "iteration,episode_return,mean_loss,epsilon,buffer_size";

    pub fn write_csv<W: Write>(mut out: W, rows: &[LogRow]) -> io::Result<()> {
        writeln!(out, "{}", Self::HEADER)?;
        for r in rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.iteration, r.episode_return, r.mean_loss, r.epsilon, r.buffer_size
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRow>,
    pub grad_steps: u64,
    pub buffer_size: usize,
}

/// Seed of training episode `k`, kept apart from small evaluation seeds.
pub(crate) fn episode_seed(seed: u64, k: u32) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(u64::from(k) + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Learner<'a> {
    agent: &'a mut Agent,
    buffer: &'a mut PrioritizedReplay,
    rng: &'a mut ChaCha8Rng,
    epsilon: f64,
    is_exponent: f64,
    collected: &'a mut usize,
    losses: Vec<f64>,
    error: Option<Error>,
}

impl Learner<'_> {
    fn learn(&mut self) -> Result<()> {
        let c = self.agent.config();
        let (batch, interval, warmup) = (c.batch_size, c.train_interval, c.warmup);
        if *self.collected < warmup || self.buffer.len() < batch || *self.collected % interval != 0 {
            return Ok(());
        }
        let sample = self.buffer.sample(batch, self.is_exponent, self.rng)?;
        let stats = self.agent.train_step(&sample)?;
        for (&i, &p) in sample.indices.iter().zip(&stats.priorities) {
            self.buffer.update_priority(i, p);
        }
        self.losses.push(stats.loss);
        Ok(())
    }
}

impl Controller for Learner<'_> {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> RvAction {
        let dist = self.agent.distribution(ctx.observation.as_slice());
        select_action(&dist, self.agent.support(), self.epsilon, self.rng)
    }

    fn record(&mut self, transition: &Transition) {
        self.buffer.push(transition.clone());
        *self.collected += 1;
        if self.error.is_none() {
            if let Err(e) = self.learn() {
                self.error = Some(e);
            }
        }
    }
}

/// Trains the shared policy with `config` (overriding the scenario's own
/// training section). One iteration is one full episode.
pub fn train(scenario: &Scenario, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(scenario, config, &mut |_| {})
}

pub fn train_with_progress(
    scenario: &Scenario,
    config: &TrainConfig,
    progress: &mut dyn FnMut(&LogRow),
) -> Result<TrainOutcome> {
    config.validate()?;
    if !scenario.control.modes.contains(&ControlMode::Unsignalized) {
        return Err(Error::validation(
            "ControlAssignment",
            "training needs at least one unsignalized intersection",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut agent = Agent::new(config.clone(), &mut rng);
    let mut buffer = PrioritizedReplay::new(config.buffer_capacity, config.priority_alpha);
    let mut collected = 0usize;
    let mut log = Vec::with_capacity(config.iterations as usize);

    for k in 0..config.iterations {
        let epsilon = config.epsilon_at(k);
        let mut learner = Learner {
            agent: &mut agent,
            buffer: &mut buffer,
            rng: &mut rng,
            epsilon,
            is_exponent: config.is_exponent_at(k),
            collected: &mut collected,
            losses: Vec::new(),
            error: None,
        };
        let result = simulate_episode_for(scenario, &mut learner, episode_seed(config.seed, k), config.episode_horizon);
        if let Some(e) = learner.error.take() {
            return Err(e);
        }
        let mean_loss = if learner.losses.is_empty() {
            0.0
        } else {
            learner.losses.iter().sum::<f64>() / learner.losses.len() as f64
        };
        let row = LogRow {
            iteration: k,
            episode_return: result.episode_return,
            mean_loss,
            epsilon,
            buffer_size: buffer.len(),
        };
        progress(&row);
        log.push(row);
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint::from_agent(&agent, &rng),
        log,
        grad_steps: agent.grad_steps(),
        buffer_size: buffer.len(),
    })
}
