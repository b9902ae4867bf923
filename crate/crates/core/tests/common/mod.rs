#![allow(dead_code)]

use mdcp::bench::{self, EnsembleParams};
use mdcp::dynamics::PerronSystem;
use mdcp::graph::{self, NetworkBackbone};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const BASE_GAINS: [&[f64]; 4] = [&[1.0], &[1.0, 2.0], &[2.0, 6.0, 4.0], &[6.0, 6.0, 17.0, 2.0]];

pub struct RandomSystem {
    pub backbone: NetworkBackbone,
    pub system: PerronSystem,
    pub x0: Vec<f64>,
}

/// Weighted digraph with a spanning tree: each ordered pair is an edge with
/// probability `density`, weights in `[0.5, 2]`.
pub fn random_digraph(rng: &mut ChaCha8Rng, n: usize, density: f64) -> NetworkBackbone {
    loop {
        let adjacency = DMatrix::from_fn(n, n, |i, j| {
            if i != j && rng.random_bool(density) {
                rng.random_range(0.5..2.0)
            } else {
                0.0
            }
        });
        let backbone = graph::build_backbone(adjacency).unwrap();
        if graph::has_spanning_tree(&backbone) {
            return backbone;
        }
    }
}

/// Convergent random system with `2 ≤ n ≤ max_n` and `1 ≤ s ≤ max_s`.
pub fn random_system(rng: &mut ChaCha8Rng, max_n: usize, max_s: usize) -> RandomSystem {
    loop {
        let n = rng.random_range(2..=max_n);
        let s = rng.random_range(1..=max_s);
        let backbone = random_digraph(rng, n, 0.45);
        let gains: Vec<f64> = BASE_GAINS[s - 1]
            .iter()
            .map(|c| c * rng.random_range(0.8..1.25))
            .collect();
        let mut params = EnsembleParams {
            s,
            gains,
            omega: -0.5,
            ..EnsembleParams::default()
        };
        params.ensemble.max_shrink_steps = 60;
        if let Some(system) = bench::stabilized_system(&backbone, &params).unwrap() {
            let x0 = (0..s * n).map(|_| rng.random_range(0.0..30.0)).collect();
            return RandomSystem {
                backbone,
                system,
                x0,
            };
        }
    }
}

/// `‖a − b‖∞ / ‖b‖∞` over zero-padded coefficient vectors.
pub fn rel(a: &[f64], b: &[f64]) -> f64 {
    bench::relative_diff(a, b)
}
