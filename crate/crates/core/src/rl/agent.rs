use num_traits::Float;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{project_target, support, Adam, Mlp, Sample, TrainConfig};
use crate::error::{Error, Result};
use crate::sim::{Controller, DecisionContext};
use crate::zone::{RvAction, OBS_LEN};

/// Per-action categorical distributions over a shared support.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueDistribution<T = f64> {
    atoms: usize,
    probs: Vec<T>,
}

impl<T: Float> ValueDistribution<T> {
    /// Softmax of each action's block of `logits`.
    pub fn from_logits(logits: &[T], atoms: usize) -> Self {
        assert_eq!(logits.len() % atoms, 0);
        let mut probs = Vec::with_capacity(logits.len());
        for block in logits.chunks(atoms) {
            probs.extend(softmax(block));
        }
        ValueDistribution { atoms, probs }
    }

    pub fn actions(&self) -> usize {
        self.probs.len() / self.atoms
    }

    pub fn probs(&self, action: usize) -> &[T] {
        &self.probs[action * self.atoms..(action + 1) * self.atoms]
    }

    pub fn q(&self, action: usize, support: &[T]) -> T {
        self.probs(action)
            .iter()
            .zip(support)
            .fold(T::zero(), |acc, (p, z)| acc + *p * *z)
    }

    /// Highest-valued action; the lower index wins exact ties.
    pub fn greedy(&self, support: &[T]) -> usize {
        let mut best = 0;
        let mut best_q = self.q(0, support);
        for a in 1..self.actions() {
            let q = self.q(a, support);
            if q > best_q {
                best = a;
                best_q = q;
            }
        }
        best
    }
}

fn softmax<T: Float>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum = exps.iter().copied().fold(T::zero(), |a, b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_softmax<T: Float>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let sum = logits.iter().fold(T::zero(), |a, &l| a + (l - max).exp());
    let log_z = max + sum.ln();
    logits.iter().map(|&l| l - log_z).collect()
}

/// Epsilon-greedy over the expected values; Stop wins exact ties.
pub fn select_action<R: Rng + ?Sized>(
    dist: &ValueDistribution,
    support: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> RvAction {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return if rng.random::<bool>() { RvAction::Go } else { RvAction::Stop };
    }
    RvAction::from_index(dist.greedy(support))
}

/// Inputs, taken actions, projected targets and importance weights of one
/// gradient step.
#[derive(Debug, Clone)]
pub struct Batch<T = f64> {
    pub inputs: Vec<Vec<T>>,
    pub actions: Vec<usize>,
    pub targets: Vec<Vec<T>>,
    pub weights: Vec<T>,
}

impl<T: Float> Batch<T> {
    /// Loss `sum_i w_i CE_i / B`, the per-sample cross-entropies and the
    /// gradient of the loss with respect to every parameter of `net`.
    pub fn loss_and_grad(&self, net: &Mlp<T>) -> (T, Vec<T>, Vec<T>) {
        let b = T::from(self.inputs.len()).unwrap();
        let atoms = net.output_len() / 2;
        let mut grad = vec![T::zero(); net.params().len()];
        let mut per_sample = Vec::with_capacity(self.inputs.len());
        let mut loss = T::zero();
        for i in 0..self.inputs.len() {
            let trace = net.forward_trace(&self.inputs[i]);
            let a = self.actions[i];
            let logits = &trace.output()[a * atoms..(a + 1) * atoms];
            let logp = log_softmax(logits);
            let target = &self.targets[i];
            let ce = target
                .iter()
                .zip(&logp)
                .fold(T::zero(), |acc, (m, lp)| acc - *m * *lp);
            per_sample.push(ce);
            loss = loss + self.weights[i] * ce / b;

            let mass = target.iter().copied().fold(T::zero(), |x, y| x + y);
            let scale = self.weights[i] / b;
            let mut d_out = vec![T::zero(); net.output_len()];
            for j in 0..atoms {
                d_out[a * atoms + j] = scale * (mass * logp[j].exp() - target[j]);
            }
            net.backward(&trace, &d_out, &mut grad);
        }
        (loss, per_sample, grad)
    }
}

/// Loss and new priorities from one gradient step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub priorities: Vec<f64>,
}

/// Online and target networks with their optimizer.
#[derive(Debug, Clone)]
pub struct Agent {
    config: TrainConfig,
    online: Mlp<f64>,
    target: Mlp<f64>,
    adam: Adam<f64>,
    support: Vec<f64>,
    grad_steps: u64,
}

impl Agent {
    /// `[observation, hidden..., 2 * atoms]`.
    pub fn layer_sizes(config: &TrainConfig) -> Vec<usize> {
        let mut sizes = vec![OBS_LEN];
        sizes.extend(&config.hidden);
        sizes.push(2 * config.atoms);
        sizes
    }

    pub fn new<R: Rng + ?Sized>(config: TrainConfig, rng: &mut R) -> Self {
        let net = Mlp::init(&Self::layer_sizes(&config), rng);
        Self::from_net(config, net)
    }

    pub fn from_net(config: TrainConfig, online: Mlp<f64>) -> Self {
        let support = support(config.v_min, config.v_max, config.atoms);
        Agent {
            adam: Adam::new(online.params().len()),
            target: online.clone(),
            online,
            support,
            config,
            grad_steps: 0,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn online(&self) -> &Mlp<f64> {
        &self.online
    }

    pub fn target(&self) -> &Mlp<f64> {
        &self.target
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn grad_steps(&self) -> u64 {
        self.grad_steps
    }

    pub fn distribution(&self, obs: &[f64]) -> ValueDistribution {
        ValueDistribution::from_logits(&self.online.forward(obs), self.config.atoms)
    }

    /// Double-Q categorical targets for a sampled batch: the online network
    /// picks the next action, the target network supplies its distribution.
    pub fn build_batch(&self, sample: &Sample) -> Batch {
        let c = &self.config;
        let mut batch = Batch {
            inputs: Vec::with_capacity(sample.transitions.len()),
            actions: Vec::with_capacity(sample.transitions.len()),
            targets: Vec::with_capacity(sample.transitions.len()),
            weights: sample.weights.clone(),
        };
        for t in &sample.transitions {
            let next = t.next_obs.as_slice();
            let a_star = self.distribution(next).greedy(&self.support);
            let target_dist = ValueDistribution::from_logits(&self.target.forward(next), c.atoms);
            let m = project_target(target_dist.probs(a_star), t.reward, c.gamma, t.terminal, c.v_min, c.v_max);
            batch.inputs.push(t.obs.as_slice().to_vec());
            batch.actions.push(t.action.index());
            batch.targets.push(m);
        }
        batch
    }

    /// One Adam update on the IS-weighted cross-entropy. Syncs the target
    /// network every `target_sync` steps.
    pub fn train_step(&mut self, sample: &Sample) -> Result<StepStats> {
        let batch = self.build_batch(sample);
        let (loss, per_sample, grad) = batch.loss_and_grad(&self.online);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss {
                step: self.grad_steps,
                detail: format!("loss={loss}, per-sample={per_sample:?}"),
            });
        }
        self.adam.step(self.online.params_mut(), &grad, self.config.learning_rate);
        self.grad_steps += 1;
        if self.grad_steps % self.config.target_sync == 0 {
            self.target = self.online.clone();
        }
        let priorities = per_sample.iter().map(|ce| ce + self.config.priority_eps).collect();
        Ok(StepStats { loss, priorities })
    }
}

/// Epsilon-greedy controller around a fixed network.
#[derive(Debug, Clone)]
pub struct PolicyController {
    net: Mlp<f64>,
    atoms: usize,
    support: Vec<f64>,
    pub epsilon: f64,
    rng: ChaCha8Rng,
}

impl PolicyController {
    pub fn greedy(net: Mlp<f64>, config: &TrainConfig) -> Self {
        Self::new(net, config, 0.0, 0)
    }

    pub fn new(net: Mlp<f64>, config: &TrainConfig, epsilon: f64, seed: u64) -> Self {
        PolicyController {
            net,
            atoms: config.atoms,
            support: support(config.v_min, config.v_max, config.atoms),
            epsilon,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Controller for PolicyController {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> RvAction {
        let dist = ValueDistribution::from_logits(&self.net.forward(ctx.observation.as_slice()), self.atoms);
        select_action(&dist, &self.support, self.epsilon, &mut self.rng)
    }
}
