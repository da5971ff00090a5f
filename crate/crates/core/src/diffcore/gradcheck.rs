//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-6;
const REL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    /// Base step, scaled by `max(1, |x_i|)` per coordinate.
    pub step: f64,
    /// Check at most this many coordinates per input, chosen by the seed.
    pub max_coords_per_input: Option<usize>,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            max_coords_per_input: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input index, coordinate)` of the worst disagreement.
    pub worst: Option<(usize, usize)>,
    pub coords_checked: usize,
}

/// Relative disagreement `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Check with default settings (every coordinate).
pub fn grad_check<F>(f: F, inputs: &[Tensor], seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<(f64, Vec<Tensor>)>,
{
    GradCheck::default().run(f, inputs, seed)
}

impl GradCheck {
    pub fn with_max_coords(mut self, n: usize) -> Self {
        self.max_coords_per_input = Some(n);
        self
    }

    /// `f` returns the scalar value and one gradient per input.
    pub fn run<F>(&self, f: F, inputs: &[Tensor], seed: u64) -> Result<GradCheckReport>
    where
        F: Fn(&[Tensor]) -> Result<(f64, Vec<Tensor>)>,
    {
        for (i, t) in inputs.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::invalid(format!("grad_check input {i} is not finite")));
            }
        }
        let (_, grads) = f(inputs)?;
        if grads.len() != inputs.len() {
            return Err(Error::contract(format!(
                "grad_check: {} gradients for {} inputs",
                grads.len(),
                inputs.len()
            )));
        }
        let mut offset = 0;
        for (g, t) in grads.iter().zip(inputs) {
            if g.shape() != t.shape() {
                return Err(Error::contract(format!(
                    "grad_check: gradient shape {:?} != input shape {:?}",
                    g.shape(),
                    t.shape()
                )));
            }
            if let Some(index) = g.data().iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    context: "analytic gradient".into(),
                    index: offset + index,
                });
            }
            offset += g.len();
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut report = GradCheckReport {
            max_rel_error: 0.0,
            worst: None,
            coords_checked: 0,
        };
        let mut probe = inputs.to_vec();
        for (ti, t) in inputs.iter().enumerate() {
            let coords: Vec<usize> = match self.max_coords_per_input {
                Some(k) if k < t.len() => {
                    let mut idx = sample(&mut rng, t.len(), k).into_vec();
                    idx.sort_unstable();
                    idx
                }
                _ => (0..t.len()).collect(),
            };
            for j in coords {
                let x0 = t.data()[j];
                let h = self.step * x0.abs().max(1.0);
                probe[ti].data_mut()[j] = x0 + h;
                let (fp, _) = f(&probe)?;
                probe[ti].data_mut()[j] = x0 - h;
                let (fm, _) = f(&probe)?;
                probe[ti].data_mut()[j] = x0;
                let numeric = (fp - fm) / (2.0 * h);
                if !numeric.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("finite difference of input {ti}"),
                        index: j,
                    });
                }
                let e = rel_error(grads[ti].data()[j], numeric);
                report.coords_checked += 1;
                if report.worst.is_none() || e > report.max_rel_error {
                    report.max_rel_error = e;
                    report.worst = Some((ti, j));
                }
            }
        }
        Ok(report)
    }
}
