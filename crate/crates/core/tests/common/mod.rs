//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use mixflow::metrics::WaitRecord;
use mixflow::rl::{Batch, Mlp};
use mixflow::scenario::IntersectionId;
use mixflow::sim::{Event, EventKind};
use rand::Rng;

/// Categorical projection by the triangular kernel: every shifted atom
/// gives each support point mass `p * max(0, 1 - |Tz - z_i| / dz)`.
pub fn brute_force_projection(p: &[f64], reward: f64, gamma: f64, terminal: bool, v_min: f64, v_max: f64) -> Vec<f64> {
    let n = p.len();
    let dz = (v_max - v_min) / (n - 1) as f64;
    let z: Vec<f64> = (0..n).map(|i| v_min + i as f64 * dz).collect();
    let mut out = vec![0.0; n];
    for j in 0..n {
        let g = if terminal { 0.0 } else { gamma };
        let tz = (reward + g * z[j]).clamp(v_min, v_max);
        for i in 0..n {
            out[i] += p[j] * (1.0 - (tz - z[i]).abs() / dz).max(0.0);
        }
    }
    out
}

pub fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// Random batch for a net with `2 * atoms` outputs.
pub fn random_batch<R: Rng>(rng: &mut R, inputs: usize, atoms: usize, size: usize) -> Batch {
    Batch {
        inputs: (0..size).map(|_| (0..inputs).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
        actions: (0..size).map(|_| rng.random_range(0..2)).collect(),
        targets: (0..size).map(|_| random_distribution(rng, atoms)).collect(),
        weights: (0..size).map(|_| rng.random_range(0.1..1.0)).collect(),
    }
}

/// Largest relative gap between the analytic gradient and central finite
/// differences of the loss, with `|g|, |fd|` floored at 1e-6 in the
/// denominator.
pub fn max_gradient_error(batch: &Batch, net: &Mlp<f64>, h: f64) -> f64 {
    let (_, _, grad) = batch.loss_and_grad(net);
    let mut worst = 0.0f64;
    for k in 0..grad.len() {
        let mut plus = net.clone();
        plus.params_mut()[k] += h;
        let mut minus = net.clone();
        minus.params_mut()[k] -= h;
        let fd = (batch.loss_and_grad(&plus).0 - batch.loss_and_grad(&minus).0) / (2.0 * h);
        let denom = grad[k].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((grad[k] - fd).abs() / denom);
    }
    worst
}

/// Three vehicles waiting 2, 4 and 6 s at intersection 0; one arrival at
/// 700 s (inside `[500, 1000)`) and one at 300 s (outside).
pub fn metric_fixture() -> (Vec<WaitRecord>, Vec<Event>) {
    use mixflow::direction::Dir;
    let ix = IntersectionId(0);
    let records = [(0, Dir::N, 2.0), (1, Dir::E, 4.0), (2, Dir::S, 6.0)]
        .into_iter()
        .map(|(vehicle, direction, wait)| WaitRecord { vehicle, intersection: ix, direction, wait, window_wait: 0.0 })
        .collect();
    let arrive = |t: f64, v: u64| Event { t, kind: EventKind::Arrive, vehicle: Some(v), intersection: None, detail: String::new() };
    (records, vec![arrive(300.0, 0), arrive(700.0, 1)])
}
