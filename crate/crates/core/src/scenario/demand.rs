use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::DemandSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VehicleKind {
    /// Human-driven: IDM plus signal and zone rules.
    Human,
    /// Robot: Stop/Go policy inside unsignalized control zones.
    Robot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpawnedVehicle {
    pub id: u64,
    pub kind: VehicleKind,
    /// Index into [`DemandSpec::od`].
    pub od: usize,
    pub spawn_time: f64,
}

/// Draws this step's arrivals: a Poisson count per OD pair with mean
/// `rate * dt`, each arrival a robot with probability `rv_penetration`.
/// Pairs are visited in document order; pairs with zero rate consume no
/// randomness.
pub fn spawn_vehicles<R: Rng + ?Sized>(
    demand: &DemandSpec,
    rng: &mut R,
    t: f64,
    dt: f64,
    next_id: &mut u64,
) -> Vec<SpawnedVehicle> {
    let mut out = Vec::new();
    for (od_index, pair) in demand.od.iter().enumerate() {
        if pair.rate <= 0.0 {
            continue;
        }
        let poisson = Poisson::new(pair.rate * dt).expect("positive finite mean");
        let count = poisson.sample(rng) as u64;
        for _ in 0..count {
            let kind = if rng.random::<f64>() < demand.rv_penetration {
                VehicleKind::Robot
            } else {
                VehicleKind::Human
            };
            out.push(SpawnedVehicle {
                id: *next_id,
                kind,
                od: od_index,
                spawn_time: t,
            });
            *next_id += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::super::{presets, DemandSpec};
    use super::*;

    fn demand_with(rate: f64, pen: f64) -> DemandSpec {
        let mut d = presets::single_intersection().demand.clone();
        d.od.truncate(1);
        d.od[0].rate = rate;
        d.rv_penetration = pen;
        d
    }

    fn run(d: &DemandSpec, seed: u64, horizon: f64, dt: f64) -> Vec<SpawnedVehicle> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut id = 0;
        let steps = (horizon / dt).round() as u64;
        (0..steps)
            .flat_map(|k| spawn_vehicles(d, &mut rng, k as f64 * dt, dt, &mut id))
            .collect()
    }

    #[test]
    fn zero_rates_spawn_nothing() {
        let d = demand_with(0.0, 0.5);
        assert!(run(&d, 1, 1000.0, 0.5).is_empty());
    }

    #[test]
    fn poisson_count_within_three_sigma() {
        // mean 1000, sd sqrt(1000)
        let d = demand_with(0.1, 0.5);
        let bound = 3.0 * 1000f64.sqrt();
        for seed in 0..5 {
            let n = run(&d, seed, 10_000.0, 0.5).len() as f64;
            assert!((n - 1000.0).abs() <= bound, "seed {seed}: {n}");
        }
    }

    #[test]
    fn penetration_within_binomial_bound() {
        // 10 000 spawns at p = 0.8: sd = sqrt(0.8 * 0.2 / 10^4) = 0.004
        let d = demand_with(1.0, 0.8);
        let v = run(&d, 3, 12_000.0, 0.5);
        let sample = &v[..10_000];
        let frac = sample.iter().filter(|s| s.kind == VehicleKind::Robot).count() as f64 / 1e4;
        assert!((frac - 0.8).abs() <= 0.012, "{frac}");
    }

    #[test]
    fn same_seed_same_sequence() {
        let d = presets::grid2x2().demand.clone();
        assert_eq!(run(&d, 9, 300.0, 0.5), run(&d, 9, 300.0, 0.5));
        assert_ne!(run(&d, 9, 300.0, 0.5), run(&d, 10, 300.0, 0.5));
    }
}
