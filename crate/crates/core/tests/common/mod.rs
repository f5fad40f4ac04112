#![allow(dead_code)]

use chaining::chain::PartitionChain;
use chaining::{DistanceSpec, PointSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform points in the Euclidean ball of the given radius.
pub fn ball_cloud(rng: &mut impl Rng, dim: usize, card: usize, radius: f64) -> PointSet {
    let rows = (0..card)
        .map(|_| {
            let g: Vec<f64> = (0..dim).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            let rad = radius * rng.random::<f64>().powf(1.0 / dim as f64);
            g.iter().map(|v| v * rad / norm).collect()
        })
        .collect();
    PointSet::new(dim, rows).unwrap()
}

/// Uniform points in the cube `[-half, half]^dim`.
pub fn cube_cloud(rng: &mut impl Rng, dim: usize, card: usize, half: f64) -> PointSet {
    let rows = (0..card)
        .map(|_| (0..dim).map(|_| rng.random_range(-half..=half)).collect())
        .collect();
    PointSet::new(dim, rows).unwrap()
}

pub fn greedy_chain(set: &PointSet, spec: &DistanceSpec, start: i32, radius: impl Fn(i32) -> f64) -> PartitionChain {
    PartitionChain::greedy_balls(set, start, |j| (spec.clone(), radius(j))).unwrap()
}

/// Point sets with pairwise distinct points, coordinates in `[-1, 1]`.
pub fn point_set(dims: std::ops::RangeInclusive<usize>, cards: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = PointSet> {
    (dims, cards)
        .prop_flat_map(|(d, n)| prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), n))
        .prop_filter("distinct points", |rows| {
            rows.iter()
                .enumerate()
                .all(|(i, a)| rows[i + 1..].iter().all(|b| DistanceSpec::L2.eval(a, b) > 1e-6))
        })
        .prop_map(|rows| PointSet::from_rows(rows).unwrap())
}

/// Ratio stability: both vanish, or the larger is at most 1.5 times the smaller.
pub fn stable(a: f64, b: f64) -> bool {
    (a == 0.0 && b == 0.0) || (a > 0.0 && b > 0.0 && a.max(b) <= 1.5 * a.min(b))
}
