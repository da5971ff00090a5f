//! Slice-level wrappers over the diffcore primitives that route parameter
//! cotangents into a [`Gradients`] sink by parameter name.

use crate::diffcore::primitives;
use crate::diffcore::{Gradients, Param, Tensor};
use crate::error::Result;

/// Backward for a vector-valued stage: output cotangent in, input cotangent out.
pub type VecBack<'a> = Box<dyn FnOnce(&[f64], &mut Gradients) -> Vec<f64> + 'a>;

pub fn dense<'a>(x: &[f64], w: &'a Param, b: Option<&'a Param>) -> Result<(Vec<f64>, VecBack<'a>)> {
    let xt = Tensor::vector(x.to_vec());
    let zero;
    let bias = match b {
        Some(p) => &p.value,
        None => {
            zero = Tensor::zeros(&[w.value.shape()[0]]);
            &zero
        }
    };
    let (y, back) = primitives::linear(&xt, &w.value, bias)?;
    let back: VecBack<'a> = Box::new(move |g: &[f64], grads: &mut Gradients| {
        let mut gs = back(&Tensor::vector(g.to_vec())).into_iter();
        let gx = gs.next().unwrap();
        grads.add(&w.name, gs.next().unwrap());
        let gb = gs.next().unwrap();
        if let Some(b) = b {
            grads.add(&b.name, gb);
        }
        gx.into_data()
    });
    Ok((y.into_data(), back))
}

pub fn relu<'a>(x: &[f64]) -> (Vec<f64>, VecBack<'a>) {
    let (y, back) = primitives::relu(&Tensor::vector(x.to_vec()));
    let back: VecBack<'a> = Box::new(move |g: &[f64], _: &mut Gradients| {
        back(&Tensor::vector(g.to_vec())).remove(0).into_data()
    });
    (y.into_data(), back)
}

pub fn layer_norm<'a>(x: &[f64], gamma: &'a Param, beta: &'a Param) -> Result<(Vec<f64>, VecBack<'a>)> {
    let (y, back) = primitives::layer_norm(&Tensor::vector(x.to_vec()), &gamma.value, &beta.value)?;
    let back: VecBack<'a> = Box::new(move |g: &[f64], grads: &mut Gradients| {
        let mut gs = back(&Tensor::vector(g.to_vec())).into_iter();
        let gx = gs.next().unwrap();
        grads.add(&gamma.name, gs.next().unwrap());
        grads.add(&beta.name, gs.next().unwrap());
        gx.into_data()
    });
    Ok((y.into_data(), back))
}

/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` weight of shape `[out, in]`.
pub fn init_weight<R: rand::Rng + ?Sized>(name: String, out: usize, fan_in: usize, rng: &mut R) -> Param {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Param::new(name, Tensor::uniform(&[out, fan_in], bound, rng))
}

pub fn init_bias(name: String, n: usize) -> Param {
    Param::new(name, Tensor::zeros(&[n]))
}

pub fn init_ln(prefix: &str, n: usize) -> (Param, Param) {
    (
        Param::new(format!("{prefix}.gamma"), Tensor::vector(vec![1.0; n])),
        Param::new(format!("{prefix}.beta"), Tensor::zeros(&[n])),
    )
}
