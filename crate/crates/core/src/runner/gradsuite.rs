//! Central finite-difference checks of every differentiable stage: the
//! tensor primitives, the ball operations, each fusion arm and the full
//! training objective. Shared by the CLI `gradcheck` command and the tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::diffcore::primitives::{forward_backward, Primitive};
use crate::diffcore::{GradCheck, Gradients, Tensor};
use crate::error::Result;
use crate::manifold::{raw, random_point, Curvature, TransportMode};
use crate::medmam::{fuse, FusionArm, MedMamParams};
use crate::semantics::{ClassWeights, LossFlags};
use crate::synth::{generate, SynthConfig};

use super::config::RunConfig;
use super::model::{batch_objective, Model, Objective, TextCache};

pub const CURVATURES: [f64; 3] = [0.01, 0.1, 1.0];
/// Bound on the worst relative error.
pub const GRAD_TOL: f64 = 1e-5;
pub const MANIFOLD_OPS: [&str; 5] = ["project", "mobius_add", "log_map", "transport_paper", "transport_gyro"];

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gauss(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn norm(v: &[f64]) -> f64 {
    crate::vecops::norm(v)
}

/// Worst relative error of one gradient family across all seeds.
#[derive(Debug, Clone, Serialize)]
pub struct GradCase {
    pub name: &'static str,
    pub max_rel_error: f64,
}

fn linear_functional(out: &[f64], r: &[f64]) -> f64 {
    out.iter().zip(r).map(|(a, b)| a * b).sum()
}

fn primitive_inputs(kind: Primitive, r: &mut ChaCha8Rng) -> Vec<Tensor> {
    let mut t = |shape: &[usize]| {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), gauss(r, n)).expect("shape matches data")
    };
    match kind {
        Primitive::Linear => vec![t(&[3, 4]), t(&[5, 4]), t(&[5])],
        Primitive::Relu | Primitive::Sigmoid | Primitive::SoftmaxRows => vec![t(&[3, 5])],
        Primitive::LayerNorm => vec![t(&[6]), t(&[6]), t(&[6])],
        Primitive::Concat => vec![t(&[3]), t(&[4])],
        Primitive::Matmul => vec![t(&[3, 4]), t(&[4, 2])],
    }
}

pub fn check_primitive(gc: GradCheck, kind: Primitive, seed: u64) -> Result<f64> {
    let mut r = rng(seed);
    let inputs = primitive_inputs(kind, &mut r);
    let (probe, _) = forward_backward(kind, &inputs.iter().collect::<Vec<_>>())?;
    let cot = Tensor::new(probe.shape().to_vec(), gauss(&mut r, probe.len()))?;
    let f = |xs: &[Tensor]| -> Result<(f64, Vec<Tensor>)> {
        let refs: Vec<&Tensor> = xs.iter().collect();
        let (y, back) = forward_backward(kind, &refs)?;
        Ok((linear_functional(y.data(), cot.data()), back(&cot)))
    };
    Ok(gc.run(f, &inputs, seed)?.max_rel_error)
}

/// Manifold ops checked through `<r, op(inputs)>` with the curvature as an
/// extra scalar input.
pub fn check_manifold(gc: GradCheck, op: &'static str, c: f64, seed: u64) -> Result<f64> {
    let mut r = rng(seed);
    let dim = 4;
    let curv = Curvature::new(c)?;
    let mut pt = || random_point(&mut r, dim, curv, 0.8).into_coords();
    let (a, b) = (pt(), pt());
    let w = gauss(&mut rng(seed ^ 0xabc), dim);
    let cot = gauss(&mut rng(seed ^ 0xdef), dim);
    if op == "project" {
        return check_project(gc, &w, &cot, c, seed);
    }
    let mut inputs = vec![Tensor::vector(a), Tensor::vector(b)];
    if op.starts_with("transport") {
        inputs.push(Tensor::vector(w));
    }
    inputs.push(Tensor::scalar(c));
    let f = |xs: &[Tensor]| -> Result<(f64, Vec<Tensor>)> {
        let c = xs.last().unwrap().data()[0];
        let v = |i: usize| xs[i].data();
        let (out, grads): (Vec<f64>, Vec<Tensor>) = match op {
            "mobius_add" => {
                let (gx, gy, gc) = raw::mobius_add_vjp(v(0), v(1), c, &cot);
                (
                    raw::mobius_add(v(0), v(1), c),
                    vec![Tensor::vector(gx), Tensor::vector(gy), Tensor::scalar(gc)],
                )
            }
            "log_map" => {
                let (gx, gy, gc) = raw::log_map_vjp(v(0), v(1), c, &cot);
                (
                    raw::log_map(v(0), v(1), c),
                    vec![Tensor::vector(gx), Tensor::vector(gy), Tensor::scalar(gc)],
                )
            }
            "transport_paper" | "transport_gyro" => {
                let mode = if op == "transport_paper" { TransportMode::Paper } else { TransportMode::Gyro };
                let (gu, gv, gw, gc) = raw::transport_vjp(mode, v(0), v(1), v(2), c, &cot);
                (
                    raw::transport(mode, v(0), v(1), v(2), c)?,
                    vec![Tensor::vector(gu), Tensor::vector(gv), Tensor::vector(gw), Tensor::scalar(gc)],
                )
            }
            _ => return Err(crate::Error::contract(format!("unknown manifold op {op:?}; expected one of {MANIFOLD_OPS:?}"))),
        };
        Ok((linear_functional(&out, &cot), grads))
    };
    Ok(gc.run(f, &inputs, seed)?.max_rel_error)
}

/// Even seeds probe inside the ball, odd seeds outside. For c >= 1 the
/// renormalized outside point `z/|z|` lands on the radius itself, where the
/// rule jumps between keeping it and pulling it in, so only inside points are
/// checked there.
fn check_project(gc: GradCheck, dir: &[f64], cot: &[f64], c: f64, seed: u64) -> Result<f64> {
    let inside = seed % 2 == 0 || c >= 1.0;
    let s = if inside { 0.5 } else { 3.0 } / c.sqrt();
    let z: Vec<f64> = dir.iter().map(|t| t * s / norm(dir)).collect();
    let inputs = vec![Tensor::vector(z), Tensor::scalar(c)];
    let f = |xs: &[Tensor]| -> Result<(f64, Vec<Tensor>)> {
        let c = xs[1].data()[0];
        let (g, gc) = raw::project_vjp(xs[0].data(), c, cot);
        let out = linear_functional(&raw::project(xs[0].data(), c), cot);
        Ok((out, vec![Tensor::vector(g), Tensor::scalar(gc)]))
    };
    Ok(gc.run(f, &inputs, seed)?.max_rel_error)
}

/// Initial values plus small noise, so biases and norm gains are generic.
/// The curvature (a single value) is kept positive.
fn jitter(t: &Tensor, r: &mut ChaCha8Rng) -> Tensor {
    let noise = gauss(r, t.len());
    if t.len() == 1 && t.shape() == [1] && t.data()[0] > 0.0 {
        return t.map(|x| x * (1.0 + 0.1 * noise[0].tanh()));
    }
    Tensor::new(t.shape().to_vec(), t.data().iter().zip(noise).map(|(x, n)| x + 0.1 * n).collect())
        .expect("shape unchanged")
}

fn set_params(p: &mut MedMamParams, xs: &[Tensor]) {
    for (param, t) in p.params_mut().into_iter().zip(xs) {
        param.value = t.clone();
    }
}

/// `<r, f_fused>` through one fusion arm, checked against both inputs and
/// every parameter tensor (a few coordinates per tensor).
pub fn check_fusion(gc: GradCheck, arm: FusionArm, mode: TransportMode, seed: u64) -> Result<f64> {
    let d = 4;
    let mut r = rng(seed);
    let base = MedMamParams::init(d, Curvature::trainable(0.1)?, &mut r)?;
    let f1 = gauss(&mut r, 3 * d);
    let f2 = gauss(&mut r, 3 * d);
    let cot = gauss(&mut r, 2 * d);
    let mut inputs = vec![Tensor::vector(f1), Tensor::vector(f2)];
    inputs.extend(base.params().iter().map(|p| jitter(&p.value, &mut r)));
    let f = |xs: &[Tensor]| -> Result<(f64, Vec<Tensor>)> {
        let mut p = base.clone();
        set_params(&mut p, &xs[2..]);
        let (out, back) = fuse(xs[0].data(), xs[1].data(), &p, arm, mode)?;
        let mut grads = Gradients::new();
        let (g1, g2) = back(&cot, &mut grads);
        let mut gs = vec![Tensor::vector(g1), Tensor::vector(g2)];
        for param in p.params() {
            gs.push(grads.get(&param.name).cloned().unwrap_or_else(|| Tensor::zeros(param.value.shape())));
        }
        Ok((linear_functional(&out.f_fused, &cot), gs))
    };
    let rep = gc.with_max_coords(6).run(f, &inputs, seed)?;
    Ok(rep.max_rel_error)
}

/// Full training objective (head, weighted CE and the enabled text losses)
/// through the chosen fusion arm, checked against every parameter tensor.
pub fn check_objective(gc: GradCheck, flags: LossFlags, seed: u64) -> Result<f64> {
    let synth = SynthConfig {
        n_samples: 12,
        d: 4,
        k_regions: 3,
        seed,
        class_separation: 1.0,
        noise_sigma: 0.3,
        ..SynthConfig::default()
    };
    let cfg = RunConfig {
        d: 4,
        k_regions: 3,
        synth: synth.clone(),
        flags,
        ..RunConfig::default()
    };
    let data = generate(&synth)?;
    let batch_data = &data[..4];
    let mut cache = TextCache::default();
    let batch = cache.prepare(batch_data);
    let weights = ClassWeights::from_counts([3, 4, 5])?;
    let obj = Objective::from_config(&cfg);
    let mut r = rng(seed);
    let base = Model::init(&cfg, &mut r)?;
    let inputs: Vec<Tensor> = base.params().iter().map(|p| jitter(&p.value, &mut r)).collect();
    let f = |xs: &[Tensor]| -> Result<(f64, Vec<Tensor>)> {
        let mut m = base.clone();
        for (p, t) in m.params_mut().into_iter().zip(xs) {
            p.value = t.clone();
        }
        let (parts, grads) = batch_objective(&m, &batch, &weights, &obj, &mut rng(seed ^ 0x77))?;
        let gs = m
            .params()
            .iter()
            .map(|p| grads.get(&p.name).cloned().unwrap_or_else(|| Tensor::zeros(p.value.shape())))
            .collect();
        Ok((parts.total, gs))
    };
    Ok(gc.with_max_coords(4).run(f, &inputs, seed)?.max_rel_error)
}

/// Every gradient family over `seeds`, reporting the worst error per family.
pub fn gradient_suite(gc: GradCheck, seeds: std::ops::Range<u64>) -> Result<Vec<GradCase>> {
    let mut cases = Vec::new();
    let mut worst = |name: &'static str, f: &dyn Fn(u64) -> Result<f64>| -> Result<()> {
        let mut m = 0.0f64;
        for s in seeds.clone() {
            m = m.max(f(s)?);
        }
        cases.push(GradCase { name, max_rel_error: m });
        Ok(())
    };
    for kind in Primitive::ALL {
        worst(kind.name(), &|s| check_primitive(gc, kind, s))?;
    }
    for op in MANIFOLD_OPS {
        worst(op, &|s| {
            CURVATURES
                .iter()
                .map(|&c| check_manifold(gc, op, c, s))
                .try_fold(0.0f64, |m, e| e.map(|e| m.max(e)))
        })?;
    }
    worst("medmam_forward/paper", &|s| check_fusion(gc, FusionArm::MedMam, TransportMode::Paper, s))?;
    worst("medmam_forward/gyro", &|s| check_fusion(gc, FusionArm::MedMam, TransportMode::Gyro, s))?;
    for arm in [FusionArm::EuclidOnly, FusionArm::Concat, FusionArm::Diff] {
        worst(arm.label(), &move |s| check_fusion(gc, arm, TransportMode::Paper, s))?;
    }
    let flags = |itc, itm| LossFlags { itc, itm };
    worst("objective/cls", &|s| check_objective(gc, flags(false, false), s))?;
    worst("objective/cls+itc", &|s| check_objective(gc, flags(true, false), s))?;
    worst("objective/cls+itm", &|s| check_objective(gc, flags(false, true), s))?;
    worst("objective/cls+itc+itm", &|s| check_objective(gc, flags(true, true), s))?;
    Ok(cases)
}
