//! Empirical check of how far paper-mode transport is from an isometry,
//! against the gyrovector reference.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::manifold::{raw, random_point, Curvature, TransportMode};
use crate::vecops::{norm, sub};

pub const AUDIT_CURVATURES: [f64; 3] = [0.01, 0.1, 1.0];
pub const AUDIT_TRIALS: usize = 1000;
pub const AUDIT_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stats {
    pub max: f64,
    pub mean: f64,
}

impl Stats {
    fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self::default();
        }
        Self {
            max: xs.iter().copied().fold(0.0, f64::max),
            mean: xs.iter().sum::<f64>() / xs.len() as f64,
        }
    }
}

/// Relative deviations over the trials at one curvature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureAudit {
    pub c: f64,
    pub trials: usize,
    /// Trials skipped because paper-mode transport was singular.
    pub singular: usize,
    /// `| |Γ_paper(w)| - |w| | / |w|`
    pub paper_norm_deviation: Stats,
    /// `| λ_v |Γ_gyro(w)| - λ_u |w| | / (λ_u |w|)`
    pub gyro_isometry_error: Stats,
    /// `|Γ_paper(w) - Γ_gyro(w)| / |w|`
    pub paper_vs_gyro: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryAudit {
    pub dim: usize,
    pub seed: u64,
    pub per_curvature: Vec<CurvatureAudit>,
}

/// Random `u, v` inside the ball (up to 90% of the radius) and Gaussian `w`.
pub fn audit_curvature(c: f64, trials: usize, dim: usize, seed: u64) -> Result<CurvatureAudit> {
    let curv = Curvature::new(c)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut dev, mut iso, mut diff) = (Vec::new(), Vec::new(), Vec::new());
    let mut singular = 0;
    for _ in 0..trials {
        let u = random_point(&mut rng, dim, curv, 0.9);
        let v = random_point(&mut rng, dim, curv, 0.9);
        let w: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (u, v) = (u.coords(), v.coords());
        let nw = norm(&w);
        let gyro = raw::transport(TransportMode::Gyro, u, v, &w, c)?;
        let lu = raw::conformal_factor(u, c);
        let lv = raw::conformal_factor(v, c);
        iso.push((lv * norm(&gyro) - lu * nw).abs() / (lu * nw));
        match raw::transport(TransportMode::Paper, u, v, &w, c) {
            Ok(paper) => {
                dev.push((norm(&paper) - nw).abs() / nw);
                diff.push(norm(&sub(&paper, &gyro)) / nw);
            }
            Err(crate::Error::Singularity { .. }) => singular += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(CurvatureAudit {
        c,
        trials,
        singular,
        paper_norm_deviation: Stats::of(&dev),
        gyro_isometry_error: Stats::of(&iso),
        paper_vs_gyro: Stats::of(&diff),
    })
}

pub fn geometry_audit(curvatures: &[f64], trials: usize, dim: usize, seed: u64) -> Result<GeometryAudit> {
    let per_curvature = curvatures
        .iter()
        .enumerate()
        .map(|(i, &c)| audit_curvature(c, trials, dim, seed.wrapping_add(i as u64)))
        .collect::<Result<_>>()?;
    Ok(GeometryAudit { dim, seed, per_curvature })
}

/// The standard audit: 1000 trials at each of c = 0.01, 0.1, 1.
pub fn default_audit(seed: u64) -> Result<GeometryAudit> {
    geometry_audit(&AUDIT_CURVATURES, AUDIT_TRIALS, AUDIT_DIM, seed)
}
