use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Learner hyperparameters. Defaults are the full-scale settings; the
/// shipped desk scenarios override iterations, hidden widths and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub buffer_capacity: usize,
    pub priority_alpha: f64,
    pub is_exponent_start: f64,
    pub is_exponent_end: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the iterations over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    /// Gradient steps between target-network copies.
    pub target_sync: u64,
    pub v_min: f64,
    pub v_max: f64,
    pub atoms: usize,
    pub hidden: Vec<usize>,
    pub iterations: u32,
    /// Transitions collected before the first gradient step.
    pub warmup: usize,
    /// One gradient step per this many collected transitions.
    pub train_interval: usize,
    /// Overrides `sim.horizon` for training episodes.
    pub episode_horizon: Option<f64>,
    pub seed: u64,
    pub priority_eps: f64,
    /// Reserved: multi-step returns are not implemented, must stay 1.
    pub n_step: u32,
    /// Reserved: noisy layers are not implemented, must stay false.
    pub noisy: bool,
    /// Reserved: the dueling head is not implemented, must stay false.
    pub dueling: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            batch_size: 32,
            learning_rate: 0.0005,
            buffer_capacity: 50_000,
            priority_alpha: 0.5,
            is_exponent_start: 0.4,
            is_exponent_end: 1.0,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.3,
            target_sync: 500,
            v_min: -10.0,
            v_max: 10.0,
            atoms: 51,
            hidden: vec![512, 512, 512],
            iterations: 1000,
            warmup: 1000,
            train_interval: 1,
            episode_horizon: None,
            seed: 0,
            priority_eps: 1e-6,
            n_step: 1,
            noisy: false,
            dueling: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::validation(format!("train.{field}"), msg));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", "must lie in (0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        if self.buffer_capacity < self.batch_size {
            return bad("buffer_capacity", "must hold at least one batch");
        }
        if !(self.priority_alpha >= 0.0 && self.priority_alpha.is_finite()) {
            return bad("priority_alpha", "must be non-negative");
        }
        for (name, v) in [
            ("is_exponent_start", self.is_exponent_start),
            ("is_exponent_end", self.is_exponent_end),
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
            ("epsilon_decay_fraction", self.epsilon_decay_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(name, "must lie in [0, 1]");
            }
        }
        if self.target_sync == 0 {
            return bad("target_sync", "must be positive");
        }
        if !(self.v_min < self.v_max) || !self.v_min.is_finite() || !self.v_max.is_finite() {
            return bad("v_min", "v_min must be below v_max");
        }
        if self.atoms < 2 {
            return bad("atoms", "need at least two atoms");
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden", "layer widths must be positive");
        }
        if self.train_interval == 0 {
            return bad("train_interval", "must be positive");
        }
        if let Some(h) = self.episode_horizon {
            if !(h > 0.0 && h.is_finite()) {
                return bad("episode_horizon", "must be positive");
            }
        }
        if !(self.priority_eps > 0.0) {
            return bad("priority_eps", "must be positive");
        }
        if self.n_step != 1 {
            return bad("n_step", "only one-step returns are supported");
        }
        if self.noisy {
            return bad("noisy", "noisy layers are not supported");
        }
        if self.dueling {
            return bad("dueling", "dueling heads are not supported");
        }
        Ok(())
    }

    /// Linear decay over the first `epsilon_decay_fraction` of iterations.
    pub fn epsilon_at(&self, iteration: u32) -> f64 {
        let span = self.epsilon_decay_fraction * f64::from(self.iterations);
        if span <= 0.0 {
            return self.epsilon_end;
        }
        let frac = f64::from(iteration) / span;
        if frac >= 1.0 {
            return self.epsilon_end;
        }
        self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
    }

    /// Importance-sampling exponent, linear over the whole run.
    pub fn is_exponent_at(&self, iteration: u32) -> f64 {
        if self.iterations <= 1 {
            return self.is_exponent_end;
        }
        let frac = f64::from(iteration) / f64::from(self.iterations - 1);
        self.is_exponent_start + frac.min(1.0) * (self.is_exponent_end - self.is_exponent_start)
    }
}
