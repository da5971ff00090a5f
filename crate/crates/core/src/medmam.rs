//! Med-MAM: Euclidean context/difference fusion, manifold difference
//! modelling on the Poincaré ball, and cross-space compression.
//!
//! Per sample, with `f1, f2 in R^{3d}`:
//!
//! ```text
//! delta_e = f2 - f1,  x = [f1, f2, delta_e]
//! c       = LN(ReLU(W_c x))                       3d
//! alpha   = sigmoid(W_a x + b1)                   scalar
//! f_e     = alpha * c + (1 - alpha) * delta_e     3d
//! x_i^h   = project(MLP_i(f_i)),  i = 1, 2
//! delta_h = transport_{x1 -> x2}(log_{x1}(x2))    3d
//! z1      = LN(ReLU(W_1 [f_e, delta_h] + b2))     4d
//! f_fused = W_2 z1 + b3                           2d
//! ```

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Gradients, Param, Tensor};
use crate::error::{ensure_finite, Error, Result};
use crate::layers::{self, dense, init_bias, init_ln, init_weight, VecBack};
use crate::manifold::{raw, Curvature, TransportMode};
use crate::vecops::{axpy, dot, sub};

pub const PREFIX: &str = "medmam";

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureBundle {
    pub values: Vec<f64>,
    pub region_id: usize,
}

impl FeatureBundle {
    pub fn new(values: Vec<f64>, region_id: usize) -> Result<Self> {
        if values.is_empty() || values.len() % 3 != 0 {
            return Err(Error::contract(format!(
                "feature bundle length {} is not a positive multiple of 3",
                values.len()
            )));
        }
        ensure_finite("feature bundle", &values)?;
        Ok(Self { values, region_id })
    }

    /// Per-layer width `d` (the bundle holds `3d` values).
    pub fn d(&self) -> usize {
        self.values.len() / 3
    }
}

/// Which fusion module feeds the compression stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FusionArm {
    /// Plain difference `f2 - f1`.
    Diff,
    /// Raw concatenation `[f1, f2]`.
    Concat,
    /// Gated Euclidean fusion only (manifold branch disabled).
    EuclidOnly,
    #[default]
    MedMam,
}

impl FusionArm {
    pub const ALL: [FusionArm; 4] = [
        FusionArm::Diff,
        FusionArm::Concat,
        FusionArm::EuclidOnly,
        FusionArm::MedMam,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FusionArm::Diff => "x1-x2",
            FusionArm::Concat => "concat",
            FusionArm::EuclidOnly => "medmam-no-manifold",
            FusionArm::MedMam => "medmam",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamMlp {
    pub w_in: Param,
    pub b_in: Param,
    pub w_out: Param,
    pub b_out: Param,
}

impl StreamMlp {
    fn init<R: Rng + ?Sized>(prefix: &str, width: usize, rng: &mut R) -> Self {
        Self {
            w_in: init_weight(format!("{prefix}.w_in"), width, width, rng),
            b_in: init_bias(format!("{prefix}.b_in"), width),
            w_out: init_weight(format!("{prefix}.w_out"), width, width, rng),
            b_out: init_bias(format!("{prefix}.b_out"), width),
        }
    }

    fn forward<'a>(&'a self, x: &[f64]) -> Result<(Vec<f64>, VecBack<'a>)> {
        let (h, back_in) = dense(x, &self.w_in, Some(&self.b_in))?;
        let (r, back_relu) = layers::relu(&h);
        let (y, back_out) = dense(&r, &self.w_out, Some(&self.b_out))?;
        let back: VecBack<'a> = Box::new(move |g: &[f64], grads: &mut Gradients| {
            let g = back_out(g, grads);
            let g = back_relu(&g, grads);
            back_in(&g, grads)
        });
        Ok((y, back))
    }

    fn params(&self) -> [&Param; 4] {
        [&self.w_in, &self.b_in, &self.w_out, &self.b_out]
    }

    fn params_mut(&mut self) -> [&mut Param; 4] {
        [&mut self.w_in, &mut self.b_in, &mut self.w_out, &mut self.b_out]
    }
}

/// All learnable state of the fusion pipeline. Weights are stored
/// `[out, in]`, so `w_c` is `3d x 9d`.
#[derive(Debug, Clone, PartialEq)]
pub struct MedMamParams {
    pub d: usize,
    pub w_c: Param,
    pub ln_c_gamma: Param,
    pub ln_c_beta: Param,
    pub w_a: Param,
    pub b_1: Param,
    pub stream1: StreamMlp,
    pub stream2: StreamMlp,
    pub w_1: Param,
    pub b_2: Param,
    pub ln_z_gamma: Param,
    pub ln_z_beta: Param,
    pub w_2: Param,
    pub b_3: Param,
    /// Shape `[1]`, clamped at `Curvature::MIN`.
    pub curvature: Param,
    pub curvature_trainable: bool,
}

impl MedMamParams {
    pub fn init<R: Rng + ?Sized>(d: usize, curvature: Curvature, rng: &mut R) -> Result<Self> {
        if d == 0 {
            return Err(Error::contract("medmam width d must be >= 1"));
        }
        let n = |s: &str| format!("{PREFIX}/{s}");
        let (ln_c_gamma, ln_c_beta) = init_ln(&n("ln_c"), 3 * d);
        let (ln_z_gamma, ln_z_beta) = init_ln(&n("ln_z"), 4 * d);
        Ok(Self {
            d,
            w_c: init_weight(n("w_c"), 3 * d, 9 * d, rng),
            ln_c_gamma,
            ln_c_beta,
            w_a: init_weight(n("w_a"), 1, 9 * d, rng),
            b_1: init_bias(n("b_1"), 1),
            stream1: StreamMlp::init(&n("stream1"), 3 * d, rng),
            stream2: StreamMlp::init(&n("stream2"), 3 * d, rng),
            w_1: init_weight(n("w_1"), 4 * d, 6 * d, rng),
            b_2: init_bias(n("b_2"), 4 * d),
            ln_z_gamma,
            ln_z_beta,
            w_2: init_weight(n("w_2"), 2 * d, 4 * d, rng),
            b_3: init_bias(n("b_3"), 2 * d),
            curvature: Param::new(n("curvature"), Tensor::scalar(curvature.value()))
                .without_decay()
                .with_clamp_min(Curvature::MIN),
            curvature_trainable: curvature.is_trainable(),
        })
    }

    pub fn curvature_value(&self) -> f64 {
        self.curvature.value.data()[0]
    }

    pub fn curvature(&self) -> Result<Curvature> {
        let c = self.curvature_value();
        if self.curvature_trainable {
            Curvature::trainable(c)
        } else {
            Curvature::new(c)
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = vec![&self.w_c, &self.ln_c_gamma, &self.ln_c_beta, &self.w_a, &self.b_1];
        v.extend(self.stream1.params());
        v.extend(self.stream2.params());
        v.extend([
            &self.w_1,
            &self.b_2,
            &self.ln_z_gamma,
            &self.ln_z_beta,
            &self.w_2,
            &self.b_3,
            &self.curvature,
        ]);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![
            &mut self.w_c,
            &mut self.ln_c_gamma,
            &mut self.ln_c_beta,
            &mut self.w_a,
            &mut self.b_1,
        ];
        v.extend(self.stream1.params_mut());
        v.extend(self.stream2.params_mut());
        v.extend([
            &mut self.w_1,
            &mut self.b_2,
            &mut self.ln_z_gamma,
            &mut self.ln_z_beta,
            &mut self.w_2,
            &mut self.b_3,
            &mut self.curvature,
        ]);
        v
    }

    fn check_input(&self, f1: &[f64], f2: &[f64]) -> Result<()> {
        let want = 3 * self.d;
        if f1.len() != want || f2.len() != want {
            return Err(Error::contract(format!(
                "medmam expects two {want}-vectors (d = {}), got lengths {} and {}",
                self.d,
                f1.len(),
                f2.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionOutput {
    pub f_e: Vec<f64>,
    pub delta_h: Vec<f64>,
    pub f_fused: Vec<f64>,
    /// Gate value; `None` for arms without the Euclidean gate.
    pub alpha: Option<f64>,
}

pub type PairBack<'a> = Box<dyn FnOnce(&[f64], &mut Gradients) -> (Vec<f64>, Vec<f64>) + 'a>;
pub type EuclidBack<'a> = Box<dyn FnOnce(&[f64], f64, &mut Gradients) -> (Vec<f64>, Vec<f64>) + 'a>;

#[derive(Debug, Clone, PartialEq)]
pub struct EuclidOutput {
    pub f_e: Vec<f64>,
    pub alpha: f64,
    pub context: Vec<f64>,
    pub delta_e: Vec<f64>,
}

/// Gated fusion; backward takes cotangents for `f_e` and `alpha`.
pub fn euclid_fuse_with_backward<'a>(
    f1: &[f64],
    f2: &[f64],
    p: &'a MedMamParams,
) -> Result<(EuclidOutput, EuclidBack<'a>)> {
    p.check_input(f1, f2)?;
    let n = 3 * p.d;
    let delta_e = sub(f2, f1);
    let x: Vec<f64> = f1.iter().chain(f2).chain(&delta_e).copied().collect();

    let (h, back_wc) = dense(&x, &p.w_c, None)?;
    let (r, back_relu) = layers::relu(&h);
    let (context, back_ln) = layers::layer_norm(&r, &p.ln_c_gamma, &p.ln_c_beta)?;

    let (logit, back_wa) = dense(&x, &p.w_a, Some(&p.b_1))?;
    let alpha = crate::diffcore::primitives::sigmoid_scalar(logit[0]);

    let f_e: Vec<f64> = context
        .iter()
        .zip(&delta_e)
        .map(|(c, d)| alpha * c + (1.0 - alpha) * d)
        .collect();

    let out = EuclidOutput {
        f_e,
        alpha,
        context: context.clone(),
        delta_e: delta_e.clone(),
    };
    let back: EuclidBack<'a> = Box::new(move |g_fe: &[f64], g_alpha: f64, grads: &mut Gradients| {
        let g_ctx: Vec<f64> = g_fe.iter().map(|g| alpha * g).collect();
        let mut g_delta: Vec<f64> = g_fe.iter().map(|g| (1.0 - alpha) * g).collect();
        let ga = g_alpha + dot(g_fe, &sub(&context, &delta_e));
        let g_logit = ga * alpha * (1.0 - alpha);

        let mut g_x = back_wa(&[g_logit], grads);
        let g = back_ln(&g_ctx, grads);
        let g = back_relu(&g, grads);
        let g_x_ctx = back_wc(&g, grads);
        crate::vecops::add_assign(&mut g_x, &g_x_ctx);

        crate::vecops::add_assign(&mut g_delta, &g_x[2 * n..]);
        let mut g1 = g_x[..n].to_vec();
        let mut g2 = g_x[n..2 * n].to_vec();
        axpy(&mut g1, -1.0, &g_delta);
        axpy(&mut g2, 1.0, &g_delta);
        (g1, g2)
    });
    Ok((out, back))
}

/// `transport_{x1 -> x2}(log_{x1}(x2))` where `x_i = project(z_i)` and `z1, z2`
/// are the stream outputs.
pub fn embedded_difference(z1: &[f64], z2: &[f64], c: f64, mode: TransportMode) -> Result<Vec<f64>> {
    let x1 = raw::project(z1, c);
    let x2 = raw::project(z2, c);
    let v = raw::log_map(&x1, &x2, c);
    raw::transport(mode, &x1, &x2, &v, c)
}

type EmbeddedBack = Box<dyn FnOnce(&[f64]) -> (Vec<f64>, Vec<f64>, f64)>;

fn embedded_difference_with_backward(
    z1: &[f64],
    z2: &[f64],
    c: f64,
    mode: TransportMode,
) -> Result<(Vec<f64>, EmbeddedBack)> {
    let x1 = raw::project(z1, c);
    let x2 = raw::project(z2, c);
    let v = raw::log_map(&x1, &x2, c);
    let delta_h = raw::transport(mode, &x1, &x2, &v, c)?;
    let z1 = z1.to_vec();
    let z2 = z2.to_vec();
    let back: EmbeddedBack = Box::new(move |g: &[f64]| {
        let (mut g_x1, mut g_x2, g_v, mut gc) = raw::transport_vjp(mode, &x1, &x2, &v, c, g);
        let (a, b, gc_log) = raw::log_map_vjp(&x1, &x2, c, &g_v);
        crate::vecops::add_assign(&mut g_x1, &a);
        crate::vecops::add_assign(&mut g_x2, &b);
        gc += gc_log;
        let (g_z1, gc1) = raw::project_vjp(&z1, c, &g_x1);
        let (g_z2, gc2) = raw::project_vjp(&z2, c, &g_x2);
        (g_z1, g_z2, gc + gc1 + gc2)
    });
    Ok((delta_h, back))
}

pub fn manifold_diff_with_backward<'a>(
    f1: &[f64],
    f2: &[f64],
    p: &'a MedMamParams,
    mode: TransportMode,
) -> Result<(Vec<f64>, PairBack<'a>)> {
    p.check_input(f1, f2)?;
    let c = p.curvature_value();
    let (z1, back1) = p.stream1.forward(f1)?;
    let (z2, back2) = p.stream2.forward(f2)?;
    let (delta_h, back_geo) = embedded_difference_with_backward(&z1, &z2, c, mode)?;
    ensure_finite("delta_h", &delta_h)?;
    let back: PairBack<'a> = Box::new(move |g: &[f64], grads: &mut Gradients| {
        let (g_z1, g_z2, gc) = back_geo(g);
        if p.curvature_trainable {
            grads.add(&p.curvature.name, Tensor::scalar(gc));
        }
        let g1 = back1(&g_z1, grads);
        let g2 = back2(&g_z2, grads);
        (g1, g2)
    });
    Ok((delta_h, back))
}

/// `W_2 LN(ReLU(W_1 [a, b] + b_2)) + b_3`; backward returns cotangents of `a`, `b`.
pub fn cross_space_compress_with_backward<'a>(
    a: &[f64],
    b: &[f64],
    p: &'a MedMamParams,
) -> Result<(Vec<f64>, PairBack<'a>)> {
    let n = 3 * p.d;
    if a.len() != n || b.len() != n {
        return Err(Error::contract(format!(
            "cross_space_compress expects two {n}-vectors, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let x: Vec<f64> = a.iter().chain(b).copied().collect();
    let (h, back_1) = dense(&x, &p.w_1, Some(&p.b_2))?;
    let (r, back_relu) = layers::relu(&h);
    let (z1, back_ln) = layers::layer_norm(&r, &p.ln_z_gamma, &p.ln_z_beta)?;
    let (fused, back_2) = dense(&z1, &p.w_2, Some(&p.b_3))?;
    let back: PairBack<'a> = Box::new(move |g: &[f64], grads: &mut Gradients| {
        let g = back_2(g, grads);
        let g = back_ln(&g, grads);
        let g = back_relu(&g, grads);
        let gx = back_1(&g, grads);
        (gx[..n].to_vec(), gx[n..].to_vec())
    });
    Ok((fused, back))
}

/// Forward one pair through the selected fusion arm. Backward maps the
/// cotangent of `f_fused` to cotangents of `f1` and `f2`.
pub fn fuse<'a>(
    f1: &[f64],
    f2: &[f64],
    p: &'a MedMamParams,
    arm: FusionArm,
    mode: TransportMode,
) -> Result<(FusionOutput, PairBack<'a>)> {
    p.check_input(f1, f2)?;
    let n = 3 * p.d;
    match arm {
        FusionArm::MedMam => {
            let (eo, back_e) = euclid_fuse_with_backward(f1, f2, p)?;
            let (delta_h, back_m) = manifold_diff_with_backward(f1, f2, p, mode)?;
            let (f_fused, back_c) = cross_space_compress_with_backward(&eo.f_e, &delta_h, p)?;
            let out = FusionOutput {
                f_e: eo.f_e,
                delta_h,
                f_fused,
                alpha: Some(eo.alpha),
            };
            let back: PairBack<'a> = Box::new(move |g: &[f64], grads: &mut Gradients| {
                let (g_fe, g_dh) = back_c(g, grads);
                let (mut g1, mut g2) = back_e(&g_fe, 0.0, grads);
                let (h1, h2) = back_m(&g_dh, grads);
                crate::vecops::add_assign(&mut g1, &h1);
                crate::vecops::add_assign(&mut g2, &h2);
                (g1, g2)
            });
            Ok((out, back))
        }
        FusionArm::EuclidOnly => {
            let (eo, back_e) = euclid_fuse_with_backward(f1, f2, p)?;
            let zeros = vec![0.0; n];
            let (f_fused, back_c) = cross_space_compress_with_backward(&eo.f_e, &zeros, p)?;
            let out = FusionOutput {
                f_e: eo.f_e,
                delta_h: zeros,
                f_fused,
                alpha: Some(eo.alpha),
            };
            let back: PairBack<'a> = Box::new(move |g: &[f64], grads: &mut Gradients| {
                let (g_fe, _) = back_c(g, grads);
                back_e(&g_fe, 0.0, grads)
            });
            Ok((out, back))
        }
        FusionArm::Concat => {
            let (f_fused, back_c) = cross_space_compress_with_backward(f1, f2, p)?;
            let out = FusionOutput {
                f_e: f1.to_vec(),
                delta_h: f2.to_vec(),
                f_fused,
                alpha: None,
            };
            Ok((out, back_c))
        }
        FusionArm::Diff => {
            let delta = sub(f2, f1);
            let zeros = vec![0.0; n];
            let (f_fused, back_c) = cross_space_compress_with_backward(&delta, &zeros, p)?;
            let out = FusionOutput {
                f_e: delta,
                delta_h: zeros,
                f_fused,
                alpha: None,
            };
            let back: PairBack<'a> = Box::new(move |g: &[f64], grads: &mut Gradients| {
                let (g_delta, _) = back_c(g, grads);
                let g1 = g_delta.iter().map(|x| -x).collect();
                (g1, g_delta)
            });
            Ok((out, back))
        }
    }
}

fn check_bundles(f1: &FeatureBundle, f2: &FeatureBundle) -> Result<()> {
    if f1.values.len() != f2.values.len() {
        return Err(Error::contract(format!(
            "feature bundles differ in length: {} vs {}",
            f1.values.len(),
            f2.values.len()
        )));
    }
    Ok(())
}

/// `(f_e, alpha)`
pub fn euclid_fuse(f1: &FeatureBundle, f2: &FeatureBundle, p: &MedMamParams) -> Result<(Vec<f64>, f64)> {
    check_bundles(f1, f2)?;
    let (o, _) = euclid_fuse_with_backward(&f1.values, &f2.values, p)?;
    Ok((o.f_e, o.alpha))
}

pub fn manifold_diff(
    f1: &FeatureBundle,
    f2: &FeatureBundle,
    p: &MedMamParams,
    mode: TransportMode,
) -> Result<Vec<f64>> {
    check_bundles(f1, f2)?;
    Ok(manifold_diff_with_backward(&f1.values, &f2.values, p, mode)?.0)
}

pub fn cross_space_compress(f_e: &[f64], delta_h: &[f64], p: &MedMamParams) -> Result<Vec<f64>> {
    Ok(cross_space_compress_with_backward(f_e, delta_h, p)?.0)
}

pub fn medmam_forward(
    f1: &FeatureBundle,
    f2: &FeatureBundle,
    p: &MedMamParams,
    mode: TransportMode,
) -> Result<FusionOutput> {
    check_bundles(f1, f2)?;
    Ok(fuse(&f1.values, &f2.values, p, FusionArm::MedMam, mode)?.0)
}

/// Per-sample map over a batch; evaluated in parallel, results in input order.
pub fn medmam_forward_batch(
    pairs: &[(FeatureBundle, FeatureBundle)],
    p: &MedMamParams,
    mode: TransportMode,
) -> Result<Vec<FusionOutput>> {
    pairs
        .par_iter()
        .map(|(f1, f2)| medmam_forward(f1, f2, p, mode))
        .collect()
}
