//! Shared fixtures for the benchmarks.

use medmam_core::manifold::{random_point, BallPoint, Curvature};
use medmam_core::medmam::{FeatureBundle, MedMamParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Two points well inside the ball.
pub fn point_pair(d: usize, c: f64, seed: u64) -> (BallPoint, BallPoint) {
    let c = Curvature::new(c).unwrap();
    let mut r = rng(seed);
    (random_point(&mut r, d, c, 0.8), random_point(&mut r, d, c, 0.8))
}

/// A three-scale bundle for a model of width `d`.
pub fn bundle<R: Rng>(r: &mut R, d: usize) -> FeatureBundle {
    let v = (0..3 * d).map(|_| r.random_range(-1.0..1.0)).collect();
    FeatureBundle::new(v, 0).unwrap()
}

pub fn fusion_fixture(d: usize, seed: u64) -> (FeatureBundle, FeatureBundle, MedMamParams) {
    let mut r = rng(seed);
    let p = MedMamParams::init(d, Curvature::trainable(1.0).unwrap(), &mut r).unwrap();
    (bundle(&mut r, d), bundle(&mut r, d), p)
}
