#![allow(dead_code)]

use medmam_core::manifold::{raw, random_point, Curvature, TransportMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use medmam_core::runner::gradsuite::CURVATURES;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest observed error per geometric property across all curvatures.
#[derive(Debug, Default)]
pub struct GeometryResult {
    pub exp_log_round_trip: f64,
    pub log_exp_round_trip: f64,
    pub mobius_identity: f64,
    pub mobius_inverse: f64,
    pub mobius_left_cancellation: f64,
    pub gyro_isometry: f64,
    pub projection_violations: usize,
    pub paper_identity_violations: usize,
}

/// `trials` random draws per property at each curvature; points reach up to
/// 90% of the ball radius.
pub fn geometry_suite(trials: usize, seed: u64) -> GeometryResult {
    let mut out = GeometryResult::default();
    for (ci, &c) in CURVATURES.iter().enumerate() {
        let curv = Curvature::new(c).unwrap();
        let mut r = rng(seed.wrapping_mul(31).wrapping_add(ci as u64));
        for _ in 0..trials {
            let dim = r.random_range(2..=12);
            let x = random_point(&mut r, dim, curv, 0.9).into_coords();
            let y = random_point(&mut r, dim, curv, 0.9).into_coords();

            let back = raw::exp_map(&x, &raw::log_map(&x, &y, c), c);
            out.exp_log_round_trip = out.exp_log_round_trip.max(max_abs_diff(&back, &y));

            // Geodesic length up to 4; much longer and tanh saturates, so exp
            // stops being invertible in double precision.
            let dir = gauss(&mut r, dim);
            let len = 4.0 * r.random::<f64>() / (raw::conformal_factor(&x, c) * norm(&dir));
            let v: Vec<f64> = dir.iter().map(|t| t * len).collect();
            let v_back = raw::log_map(&x, &raw::exp_map(&x, &v, c), c);
            out.log_exp_round_trip = out.log_exp_round_trip.max(max_abs_diff(&v_back, &v) / norm(&v).max(1.0));

            let zero = vec![0.0; dim];
            let e = max_abs_diff(&raw::mobius_add(&zero, &x, c), &x).max(max_abs_diff(&raw::mobius_add(&x, &zero, c), &x));
            out.mobius_identity = out.mobius_identity.max(e);
            let nx: Vec<f64> = x.iter().map(|t| -t).collect();
            out.mobius_inverse = out.mobius_inverse.max(norm(&raw::mobius_add(&nx, &x, c)));
            let xy = raw::mobius_add(&x, &y, c);
            let cancel = raw::mobius_add(&nx, &xy, c);
            out.mobius_left_cancellation = out.mobius_left_cancellation.max(max_abs_diff(&cancel, &y));

            let w = gauss(&mut r, dim);
            let g = raw::transport(TransportMode::Gyro, &x, &y, &w, c).unwrap();
            let lhs = raw::conformal_factor(&x, c) * norm(&w);
            let rhs = raw::conformal_factor(&y, c) * norm(&g);
            out.gyro_isometry = out.gyro_isometry.max((lhs - rhs).abs() / lhs);

            let scale = 10f64.powf(r.random_range(-3.0..6.0));
            let z: Vec<f64> = gauss(&mut r, dim).iter().map(|t| t * scale).collect();
            if norm(&raw::project(&z, c)) >= curv.radius() {
                out.projection_violations += 1;
            }

            if raw::transport(TransportMode::Paper, &x, &zero, &w, c).unwrap() != w {
                out.paper_identity_violations += 1;
            }
        }
    }
    out
}

