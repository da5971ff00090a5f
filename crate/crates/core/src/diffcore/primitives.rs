//! Forward primitives, each returning its output together with a backward
//! closure mapping the output cotangent to one cotangent per input (in
//! argument order, parameters included).

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub type Backward<'a> = Box<dyn FnOnce(&Tensor) -> Vec<Tensor> + 'a>;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    Linear,
    Relu,
    Sigmoid,
    LayerNorm,
    Concat,
    Matmul,
    SoftmaxRows,
}

impl Primitive {
    pub const ALL: [Primitive; 7] = [
        Primitive::Linear,
        Primitive::Relu,
        Primitive::Sigmoid,
        Primitive::LayerNorm,
        Primitive::Concat,
        Primitive::Matmul,
        Primitive::SoftmaxRows,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::Linear => "linear",
            Primitive::Relu => "relu",
            Primitive::Sigmoid => "sigmoid",
            Primitive::LayerNorm => "layer_norm",
            Primitive::Concat => "concat",
            Primitive::Matmul => "matmul",
            Primitive::SoftmaxRows => "softmax_rows",
        }
    }
}

fn shape_error(kind: Primitive, shapes: &[&[usize]]) -> Error {
    Error::contract(format!("{}: incompatible shapes {shapes:?}", kind.name()))
}

/// Dispatch by kind. Arity: linear (x, w, b), layer_norm (x, gamma, beta),
/// matmul (a, b), concat (any number >= 1), the rest unary.
pub fn forward_backward<'a>(kind: Primitive, inputs: &[&'a Tensor]) -> Result<(Tensor, Backward<'a>)> {
    let arity = |n: usize| -> Result<()> {
        if inputs.len() != n {
            return Err(Error::contract(format!(
                "{} takes {n} inputs, got {}",
                kind.name(),
                inputs.len()
            )));
        }
        Ok(())
    };
    match kind {
        Primitive::Linear => {
            arity(3)?;
            linear(inputs[0], inputs[1], inputs[2])
        }
        Primitive::Relu => {
            arity(1)?;
            Ok(relu(inputs[0]))
        }
        Primitive::Sigmoid => {
            arity(1)?;
            Ok(sigmoid(inputs[0]))
        }
        Primitive::LayerNorm => {
            arity(3)?;
            layer_norm(inputs[0], inputs[1], inputs[2])
        }
        Primitive::Concat => concat(inputs),
        Primitive::Matmul => {
            arity(2)?;
            matmul(inputs[0], inputs[1])
        }
        Primitive::SoftmaxRows => {
            arity(1)?;
            Ok(softmax_rows(inputs[0]))
        }
    }
}

/// `y = x W^T + b` over the rows of `x` (`[in]` or `[n, in]`), `W: [out, in]`.
pub fn linear<'a>(x: &Tensor, w: &'a Tensor, b: &Tensor) -> Result<(Tensor, Backward<'a>)> {
    let ws = w.shape();
    if ws.len() != 2 || x.last_dim() != ws[1] || b.shape() != [ws[0]] || x.shape().len() > 2 {
        return Err(shape_error(Primitive::Linear, &[x.shape(), ws, b.shape()]));
    }
    let (out_dim, in_dim) = (ws[0], ws[1]);
    let rows = x.rows();
    let mut y = Vec::with_capacity(rows * out_dim);
    for r in 0..rows {
        let xr = x.row(r);
        for o in 0..out_dim {
            let wr = &w.data()[o * in_dim..(o + 1) * in_dim];
            y.push(b.data()[o] + wr.iter().zip(xr).map(|(a, c)| a * c).sum::<f64>());
        }
    }
    let mut out_shape = x.shape().to_vec();
    *out_shape.last_mut().unwrap() = out_dim;
    let x = x.clone();
    let b_shape = b.shape().to_vec();
    let back = move |g: &Tensor| {
        let mut gx = vec![0.0; x.len()];
        let mut gw = vec![0.0; w.len()];
        let mut gb = vec![0.0; out_dim];
        for r in 0..rows {
            let xr = x.row(r);
            let gr = g.row(r);
            let gxr = &mut gx[r * in_dim..(r + 1) * in_dim];
            for o in 0..out_dim {
                let go = gr[o];
                if go == 0.0 {
                    continue;
                }
                gb[o] += go;
                let wr = &w.data()[o * in_dim..(o + 1) * in_dim];
                let gwr = &mut gw[o * in_dim..(o + 1) * in_dim];
                for i in 0..in_dim {
                    gxr[i] += go * wr[i];
                    gwr[i] += go * xr[i];
                }
            }
        }
        vec![
            Tensor::new(x.shape().to_vec(), gx).unwrap(),
            Tensor::new(w.shape().to_vec(), gw).unwrap(),
            Tensor::new(b_shape, gb).unwrap(),
        ]
    };
    Ok((Tensor::new(out_shape, y)?, Box::new(back)))
}

pub fn relu<'a>(x: &Tensor) -> (Tensor, Backward<'a>) {
    let y = x.map(|v| v.max(0.0));
    let mask: Vec<bool> = x.data().iter().map(|&v| v > 0.0).collect();
    let shape = x.shape().to_vec();
    let back = move |g: &Tensor| {
        let gx = g
            .data()
            .iter()
            .zip(&mask)
            .map(|(&gi, &m)| if m { gi } else { 0.0 })
            .collect();
        vec![Tensor::new(shape, gx).unwrap()]
    };
    (y, Box::new(back))
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid<'a>(x: &Tensor) -> (Tensor, Backward<'a>) {
    let y = x.map(sigmoid_scalar);
    let ys = y.clone();
    let back = move |g: &Tensor| {
        let gx = g
            .data()
            .iter()
            .zip(ys.data())
            .map(|(gi, s)| gi * s * (1.0 - s))
            .collect();
        vec![Tensor::new(ys.shape().to_vec(), gx).unwrap()]
    };
    (y, Box::new(back))
}

/// Normalize each row over the last axis, then apply `gamma * xhat + beta`.
///
/// `LAYER_NORM_EPS` floors the variance (`xhat = (x - mean) / sqrt(max(var, eps))`),
/// so rows with non-negligible spread are normalized exactly.
pub fn layer_norm<'a>(x: &Tensor, gamma: &'a Tensor, beta: &Tensor) -> Result<(Tensor, Backward<'a>)> {
    let n = x.last_dim();
    if gamma.shape() != [n] || beta.shape() != [n] || x.shape().len() > 2 {
        return Err(shape_error(
            Primitive::LayerNorm,
            &[x.shape(), gamma.shape(), beta.shape()],
        ));
    }
    let rows = x.rows();
    let mut xhat = Vec::with_capacity(x.len());
    let mut inv_std = Vec::with_capacity(rows);
    let mut floored = Vec::with_capacity(rows);
    for r in 0..rows {
        let xr = x.row(r);
        let mean = xr.iter().sum::<f64>() / n as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let rs = 1.0 / var.max(LAYER_NORM_EPS).sqrt();
        inv_std.push(rs);
        floored.push(var < LAYER_NORM_EPS);
        xhat.extend(xr.iter().map(|v| (v - mean) * rs));
    }
    let y: Vec<f64> = xhat
        .iter()
        .enumerate()
        .map(|(i, h)| gamma.data()[i % n] * h + beta.data()[i % n])
        .collect();
    let shape = x.shape().to_vec();
    let out = Tensor::new(shape.clone(), y)?;
    let back = move |g: &Tensor| {
        let mut gx = vec![0.0; rows * n];
        let mut ggamma = vec![0.0; n];
        let mut gbeta = vec![0.0; n];
        for r in 0..rows {
            let gr = g.row(r);
            let hr = &xhat[r * n..(r + 1) * n];
            let mut sum_gh = 0.0;
            let mut sum_ghh = 0.0;
            let mut gh = vec![0.0; n];
            for i in 0..n {
                ggamma[i] += gr[i] * hr[i];
                gbeta[i] += gr[i];
                gh[i] = gr[i] * gamma.data()[i];
                sum_gh += gh[i];
                sum_ghh += gh[i] * hr[i];
            }
            let k = inv_std[r] / n as f64;
            // the variance term drops out when the floor is active
            let var_term = if floored[r] { 0.0 } else { sum_ghh };
            for i in 0..n {
                gx[r * n + i] = k * (n as f64 * gh[i] - sum_gh - hr[i] * var_term);
            }
        }
        vec![
            Tensor::new(shape, gx).unwrap(),
            Tensor::vector(ggamma),
            Tensor::vector(gbeta),
        ]
    };
    Ok((out, Box::new(back)))
}

/// Concatenate 1-D tensors.
pub fn concat<'a>(parts: &[&Tensor]) -> Result<(Tensor, Backward<'a>)> {
    if parts.is_empty() || parts.iter().any(|p| p.shape().len() != 1) {
        let shapes: Vec<&[usize]> = parts.iter().map(|p| p.shape()).collect();
        return Err(shape_error(Primitive::Concat, &shapes));
    }
    let lens: Vec<usize> = parts.iter().map(|p| p.len()).collect();
    let data: Vec<f64> = parts.iter().flat_map(|p| p.data().iter().copied()).collect();
    let back = move |g: &Tensor| {
        let mut off = 0;
        lens.iter()
            .map(|&l| {
                let piece = Tensor::vector(g.data()[off..off + l].to_vec());
                off += l;
                piece
            })
            .collect()
    };
    Ok((Tensor::vector(data), Box::new(back)))
}

/// `[m, k] x [k, n] -> [m, n]`
pub fn matmul<'a>(a: &Tensor, b: &Tensor) -> Result<(Tensor, Backward<'a>)> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
        return Err(shape_error(Primitive::Matmul, &[sa, sb]));
    }
    let (m, k, n) = (sa[0], sa[1], sb[1]);
    let mut y = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a.data()[i * k + p];
            for j in 0..n {
                y[i * n + j] += aip * b.data()[p * n + j];
            }
        }
    }
    let a = a.clone();
    let b = b.clone();
    let back = move |g: &Tensor| {
        let mut ga = vec![0.0; m * k];
        let mut gb = vec![0.0; k * n];
        for i in 0..m {
            for j in 0..n {
                let gij = g.data()[i * n + j];
                for p in 0..k {
                    ga[i * k + p] += gij * b.data()[p * n + j];
                    gb[p * n + j] += gij * a.data()[i * k + p];
                }
            }
        }
        vec![
            Tensor::new(vec![m, k], ga).unwrap(),
            Tensor::new(vec![k, n], gb).unwrap(),
        ]
    };
    Ok((Tensor::new(vec![m, n], y)?, Box::new(back)))
}

pub fn softmax_row(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn softmax_rows<'a>(x: &Tensor) -> (Tensor, Backward<'a>) {
    let rows = x.rows();
    let n = x.last_dim();
    let data: Vec<f64> = (0..rows).flat_map(|r| softmax_row(x.row(r))).collect();
    let y = Tensor::new(x.shape().to_vec(), data).unwrap();
    let ys = y.clone();
    let back = move |g: &Tensor| {
        let mut gx = vec![0.0; rows * n];
        for r in 0..rows {
            let yr = ys.row(r);
            let gr = g.row(r);
            let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
            for i in 0..n {
                gx[r * n + i] = yr[i] * (gr[i] - inner);
            }
        }
        vec![Tensor::new(ys.shape().to_vec(), gx).unwrap()]
    };
    (y, Box::new(back))
}
