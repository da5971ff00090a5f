//! Text-side stand-ins, training objectives and the progression head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffcore::primitives::{self, sigmoid_scalar, softmax_row};
use crate::diffcore::{Gradients, Param, ParamGroup, Tensor};
use crate::error::{Error, Result};
use crate::layers::{self, dense, init_bias, init_weight};
use crate::vecops::{dot, norm};

pub const HEALTHY_TEMPLATE: &str = "both of two images are healthy, there is no evident change";
pub const TEXT_EMBED_DIM: usize = 768;
pub const DEFAULT_TAU: f64 = 0.05;
/// Seed mixed into every hashed text embedding.
pub const TEXT_STUB_SEED: u64 = 0;
/// Probabilities are clamped to at least this before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Improved,
    NoChange,
    Worsened,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Improved, Label::NoChange, Label::Worsened];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::contract(format!("label index {i} out of range")))
    }

    /// Phrase completing `"At {region}, ..."`.
    pub fn phrase(self) -> &'static str {
        match self {
            Label::Improved => "the condition has improved",
            Label::NoChange => "the condition shows no change",
            Label::Worsened => "the condition has worsened",
        }
    }
}

pub fn region_name(region_id: usize) -> String {
    format!("region_{region_id}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressionText {
    pub region_id: usize,
    pub label: Label,
    pub text: String,
}

/// `"At region_{id}, {phrase}"`, or the fixed healthy sentence.
pub fn render_template(region_id: usize, label: Label, healthy: bool, n_regions: usize) -> Result<ProgressionText> {
    if region_id >= n_regions {
        return Err(Error::contract(format!(
            "region {region_id} is not one of the {n_regions} configured regions"
        )));
    }
    let text = if healthy {
        HEALTHY_TEMPLATE.to_string()
    } else {
        format!("At {}, {}", region_name(region_id), label.phrase())
    };
    Ok(ProgressionText { region_id, label, text })
}

/// Deterministic unit-norm pseudo-embedding of a string: SHA-256 of the
/// seed and the exact bytes seeds a ChaCha stream of standard normals.
pub fn text_embedding(text: &str, seed: u64) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(text.as_bytes());
    let digest: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    let v: Vec<f64> = (0..TEXT_EMBED_DIM).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

pub fn init_text_head<R: Rng + ?Sized>(out_dim: usize, rng: &mut R) -> Param {
    init_weight("text/proj".into(), out_dim, TEXT_EMBED_DIM, rng).with_group(ParamGroup::Stub)
}

/// `head * e(t)` with `head: [2d, 768]`.
pub fn embed_text(t: &ProgressionText, head: &Param) -> Result<Vec<f64>> {
    let s = head.value.shape();
    if s.len() != 2 || s[1] != TEXT_EMBED_DIM {
        return Err(Error::contract(format!("text head must be [_, {TEXT_EMBED_DIM}], got {s:?}")));
    }
    Ok(dense(&text_embedding(&t.text, TEXT_STUB_SEED), head, None)?.0)
}

/// Rows of `SimilarityMatrix` index fused features, columns index texts.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n || n == 0 {
            return Err(Error::contract(format!("similarity matrix needs {n}x{n} values")));
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub type CosineBack = Box<dyn FnOnce(&[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>)>;

fn check_rows(what: &str, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let n = norm(r);
            if n <= 1e-12 {
                Err(Error::contract(format!("{what} row {i} has zero norm")))
            } else {
                Ok(n)
            }
        })
        .collect()
}

/// `S_ij = <f_i, t_j> / (|f_i| |t_j|)`; backward maps `dS` (row-major) to
/// cotangents of the fused and text rows.
pub fn cosine_matrix_with_backward(fused: &[Vec<f64>], text: &[Vec<f64>]) -> Result<(SimilarityMatrix, CosineBack)> {
    let n = fused.len();
    if n == 0 || text.len() != n {
        return Err(Error::contract(format!(
            "cosine_matrix needs equal non-empty batches, got {} and {}",
            n,
            text.len()
        )));
    }
    let dim = fused[0].len();
    if fused.iter().chain(text).any(|r| r.len() != dim) {
        return Err(Error::contract("cosine_matrix rows differ in width"));
    }
    let fn_ = check_rows("fused", fused)?;
    let tn = check_rows("text", text)?;
    let fh: Vec<Vec<f64>> = fused.iter().zip(&fn_).map(|(r, n)| r.iter().map(|x| x / n).collect()).collect();
    let th: Vec<Vec<f64>> = text.iter().zip(&tn).map(|(r, n)| r.iter().map(|x| x / n).collect()).collect();
    let mut s = Vec::with_capacity(n * n);
    for f in &fh {
        for t in &th {
            s.push(dot(f, t).clamp(-1.0, 1.0));
        }
    }
    let back: CosineBack = Box::new(move |g: &[f64]| {
        // d/dx (x/|x|) = (I - xh xh^T)/|x|
        let mut g_fh = vec![vec![0.0; dim]; n];
        let mut g_th = vec![vec![0.0; dim]; n];
        for i in 0..n {
            for j in 0..n {
                let gij = g[i * n + j];
                if gij == 0.0 {
                    continue;
                }
                crate::vecops::axpy(&mut g_fh[i], gij, &th[j]);
                crate::vecops::axpy(&mut g_th[j], gij, &fh[i]);
            }
        }
        let unnorm = |gh: Vec<Vec<f64>>, hat: &[Vec<f64>], norms: &[f64]| -> Vec<Vec<f64>> {
            gh.into_iter()
                .zip(hat.iter().zip(norms))
                .map(|(g, (h, n))| {
                    let p = dot(&g, h);
                    g.iter().zip(h).map(|(gi, hi)| (gi - p * hi) / n).collect()
                })
                .collect()
        };
        (unnorm(g_fh, &fh, &fn_), unnorm(g_th, &th, &tn))
    });
    Ok((SimilarityMatrix::new(n, s)?, back))
}

pub fn cosine_matrix(fused: &[Vec<f64>], text: &[Vec<f64>]) -> Result<SimilarityMatrix> {
    Ok(cosine_matrix_with_backward(fused, text)?.0)
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::contract(format!("temperature must be > 0, got {tau}")));
    }
    Ok(())
}

/// InfoNCE over the rows of `S`; returns the loss and `dL/dS`.
pub fn itc_loss_with_grad(s: &SimilarityMatrix, tau: f64) -> Result<(f64, Vec<f64>)> {
    check_tau(tau)?;
    let n = s.n();
    let mut loss = 0.0;
    let mut grad = vec![0.0; n * n];
    for i in 0..n {
        let logits: Vec<f64> = s.row(i).iter().map(|v| v / tau).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // ln(sum_j exp(l_j - l_i)), written with the row max subtracted
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        loss += lse - logits[i];
        let p = softmax_row(&logits);
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            grad[i * n + j] = (p[j] - target) / (tau * n as f64);
        }
    }
    Ok(((loss / n as f64).max(0.0), grad))
}

pub fn itc_loss(s: &SimilarityMatrix, tau: f64) -> Result<f64> {
    if s.n() == 1 {
        check_tau(tau)?;
        return Ok(0.0);
    }
    Ok(itc_loss_with_grad(s, tau)?.0)
}

/// Linear match head over `[fused, text]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ItmHead {
    pub w: Param,
    pub b: Param,
}

impl ItmHead {
    pub fn init<R: Rng + ?Sized>(feature_dim: usize, rng: &mut R) -> Self {
        Self {
            w: init_weight("itm/w".into(), 1, 2 * feature_dim, rng),
            b: init_bias("itm/b".into(), 1),
        }
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.w, &mut self.b]
    }
}

/// For each sample, one uniformly drawn in-batch index other than itself.
pub fn sample_negatives<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::contract("ITM needs a batch of at least 2 for negatives"));
    }
    Ok((0..n)
        .map(|i| {
            let j = rng.random_range(0..n - 1);
            if j >= i {
                j + 1
            } else {
                j
            }
        })
        .collect())
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub struct ItmResult {
    pub loss: f64,
    pub g_fused: Vec<Vec<f64>>,
    pub g_text: Vec<Vec<f64>>,
}

/// Mean binary cross-entropy over the `N` aligned pairs (target 1) and the
/// `N` pairs `(f_i, t_{neg[i]})` (target 0). Head gradients go to `grads`.
pub fn itm_loss_with_grad(
    fused: &[Vec<f64>],
    text: &[Vec<f64>],
    negatives: &[usize],
    head: &ItmHead,
    grads: &mut Gradients,
) -> Result<ItmResult> {
    let n = fused.len();
    if n < 2 {
        return Err(Error::contract("ITM needs a batch of at least 2 for negatives"));
    }
    if text.len() != n || negatives.len() != n {
        return Err(Error::contract("ITM batch sizes disagree"));
    }
    if let Some((i, &j)) = negatives.iter().enumerate().find(|(i, &j)| j >= n || j == *i) {
        return Err(Error::contract(format!("ITM negative for sample {i} is invalid index {j}")));
    }
    let dim = fused[0].len();
    let total = 2 * n;
    let mut loss = 0.0;
    let mut g_fused = vec![vec![0.0; dim]; n];
    let mut g_text = vec![vec![0.0; dim]; n];
    for i in 0..n {
        for (tj, target) in [(i, 1.0), (negatives[i], 0.0)] {
            let x: Vec<f64> = fused[i].iter().chain(&text[tj]).copied().collect();
            let (z, back) = dense(&x, &head.w, Some(&head.b))?;
            let z = z[0];
            loss += if target == 1.0 { softplus(-z) } else { softplus(z) };
            let gz = (sigmoid_scalar(z) - target) / total as f64;
            let gx = back(&[gz], grads);
            crate::vecops::add_assign(&mut g_fused[i], &gx[..dim]);
            crate::vecops::add_assign(&mut g_text[tj], &gx[dim..]);
        }
    }
    Ok(ItmResult {
        loss: loss / total as f64,
        g_fused,
        g_text,
    })
}

/// ITM with negatives drawn from `seed`.
pub fn itm_loss(fused: &[Vec<f64>], text: &[Vec<f64>], head: &ItmHead, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let neg = sample_negatives(fused.len(), &mut rng)?;
    Ok(itm_loss_with_grad(fused, text, &neg, head, &mut Gradients::new())?.loss)
}

/// Inverse class-frequency weights `w_c = N / count_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w: [f64; 3],
}

impl ClassWeights {
    pub fn from_counts(counts: [usize; 3]) -> Result<Self> {
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::contract(format!(
                "class {:?} has no samples; inverse-frequency weight undefined",
                Label::ALL[c]
            )));
        }
        let total: usize = counts.iter().sum();
        Ok(Self {
            w: counts.map(|n| total as f64 / n as f64),
        })
    }

    pub fn from_labels(labels: &[Label]) -> Result<Self> {
        let mut counts = [0usize; 3];
        for l in labels {
            counts[l.index()] += 1;
        }
        Self::from_counts(counts)
    }

    pub fn uniform() -> Self {
        Self { w: [1.0; 3] }
    }
}

/// `-(1/N) sum_i w_{y_i} log p_{i, y_i}` with `dL/dp`.
pub fn weighted_ce_with_grad(p: &[[f64; 3]], y: &[Label], w: &ClassWeights) -> Result<(f64, Vec<[f64; 3]>)> {
    let n = p.len();
    if n == 0 || y.len() != n {
        return Err(Error::contract(format!(
            "weighted_ce needs matching non-empty batches, got {n} and {}",
            y.len()
        )));
    }
    for (i, row) in p.iter().enumerate() {
        let s: f64 = row.iter().sum();
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!("row {i} of p is not a distribution: {row:?}")));
        }
    }
    let mut loss = 0.0;
    let mut grad = vec![[0.0; 3]; n];
    for i in 0..n {
        let c = y[i].index();
        let pc = p[i][c].max(PROB_FLOOR);
        loss -= w.w[c] * pc.ln();
        grad[i][c] = -w.w[c] / (pc * n as f64);
    }
    Ok((loss / n as f64, grad))
}

pub fn weighted_ce(p: &[[f64; 3]], y: &[Label], w: &ClassWeights) -> Result<f64> {
    Ok(weighted_ce_with_grad(p, y, w)?.0)
}

/// Which auxiliary objectives join the classification loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LossFlags {
    #[serde(default)]
    pub itc: bool,
    #[serde(default)]
    pub itm: bool,
}

/// Unit-weight sum of the enabled components.
pub fn total_loss(itc: f64, itm: f64, cls: f64, flags: LossFlags) -> f64 {
    let mut t = cls;
    if flags.itc {
        t += itc;
    }
    if flags.itm {
        t += itm;
    }
    t
}

/// Region-indexed cross-attention head: the region's query attends over
/// `f_fused` viewed as two `d`-dimensional tokens, followed by a residual
/// feed-forward layer and a 3-way linear classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressionHead {
    pub d: usize,
    /// `[K, 2d]`
    pub queries: Param,
    pub w_q: Param,
    pub w_k: Param,
    pub w_v: Param,
    pub w_ff1: Param,
    pub b_ff1: Param,
    pub w_ff2: Param,
    pub b_ff2: Param,
    pub w_cls: Param,
    pub b_cls: Param,
}

pub type HeadBack<'a> = Box<dyn FnOnce(&[f64], &mut Gradients) -> Vec<f64> + 'a>;

impl ProgressionHead {
    pub fn init<R: Rng + ?Sized>(d: usize, n_regions: usize, rng: &mut R) -> Result<Self> {
        if n_regions == 0 || d == 0 {
            return Err(Error::contract("progression head needs d >= 1 and at least one region"));
        }
        let n = |s: &str| format!("head/{s}");
        Ok(Self {
            d,
            queries: Param::new(n("queries"), Tensor::uniform(&[n_regions, 2 * d], 1.0, rng)),
            w_q: init_weight(n("w_q"), d, 2 * d, rng),
            w_k: init_weight(n("w_k"), d, d, rng),
            w_v: init_weight(n("w_v"), d, d, rng),
            w_ff1: init_weight(n("w_ff1"), 2 * d, d, rng),
            b_ff1: init_bias(n("b_ff1"), 2 * d),
            w_ff2: init_weight(n("w_ff2"), d, 2 * d, rng),
            b_ff2: init_bias(n("b_ff2"), d),
            w_cls: init_weight(n("w_cls"), 3, d, rng),
            b_cls: init_bias(n("b_cls"), 3),
        })
    }

    pub fn n_regions(&self) -> usize {
        self.queries.value.shape()[0]
    }

    pub fn params(&self) -> [&Param; 10] {
        [
            &self.queries,
            &self.w_q,
            &self.w_k,
            &self.w_v,
            &self.w_ff1,
            &self.b_ff1,
            &self.w_ff2,
            &self.b_ff2,
            &self.w_cls,
            &self.b_cls,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 10] {
        [
            &mut self.queries,
            &mut self.w_q,
            &mut self.w_k,
            &mut self.w_v,
            &mut self.w_ff1,
            &mut self.b_ff1,
            &mut self.w_ff2,
            &mut self.b_ff2,
            &mut self.w_cls,
            &mut self.b_cls,
        ]
    }

    /// Logits plus a backward from logit cotangent to `f_fused` cotangent.
    pub fn forward_with_backward<'a>(&'a self, f_fused: &[f64], region_id: usize) -> Result<([f64; 3], HeadBack<'a>)> {
        let d = self.d;
        if region_id >= self.n_regions() {
            return Err(Error::contract(format!(
                "region {region_id} out of range for {} query vectors",
                self.n_regions()
            )));
        }
        if f_fused.len() != 2 * d {
            return Err(Error::contract(format!(
                "progression head expects a {}-vector, got {}",
                2 * d,
                f_fused.len()
            )));
        }
        let q = self.queries.value.row(region_id).to_vec();
        let (qd, back_q) = dense(&q, &self.w_q, None)?;

        let tokens = Tensor::new(vec![2, d], f_fused.to_vec())?;
        let zero = Tensor::zeros(&[d]);
        let (keys, back_k) = primitives::linear(&tokens, &self.w_k.value, &zero)?;
        let (vals, back_v) = primitives::linear(&tokens, &self.w_v.value, &zero)?;
        let qcol = Tensor::new(vec![d, 1], qd.clone())?;
        let (scores, back_s) = primitives::matmul(&keys, &qcol)?;
        let scale = 1.0 / (d as f64).sqrt();
        let scaled = Tensor::new(vec![1, 2], scores.data().iter().map(|x| x * scale).collect())?;
        let (attn, back_sm) = primitives::softmax_rows(&scaled);
        let (ctx, back_ctx) = primitives::matmul(&attn, &vals)?;

        let h: Vec<f64> = ctx.data().iter().zip(&qd).map(|(a, b)| a + b).collect();
        let (f1, back_f1) = dense(&h, &self.w_ff1, Some(&self.b_ff1))?;
        let (r, back_relu) = layers::relu(&f1);
        let (f2, back_f2) = dense(&r, &self.w_ff2, Some(&self.b_ff2))?;
        let o: Vec<f64> = f2.iter().zip(&h).map(|(a, b)| a + b).collect();
        let (logits, back_cls) = dense(&o, &self.w_cls, Some(&self.b_cls))?;
        let logits = [logits[0], logits[1], logits[2]];

        let back: HeadBack<'a> = Box::new(move |g: &[f64], grads: &mut Gradients| {
            let g_o = back_cls(g, grads);
            let g_f2 = g_o.clone();
            let g_r = back_f2(&g_f2, grads);
            let g_f1 = back_relu(&g_r, grads);
            let mut g_h = back_f1(&g_f1, grads);
            crate::vecops::add_assign(&mut g_h, &g_o);

            let g_ctx = Tensor::new(vec![1, d], g_h.clone()).unwrap();
            let mut gs = back_ctx(&g_ctx).into_iter();
            let g_attn = gs.next().unwrap();
            let g_vals = gs.next().unwrap();
            let g_scaled = back_sm(&g_attn).remove(0);
            let g_scores = g_scaled.map(|x| x * scale);
            let mut gs = back_s(&g_scores).into_iter();
            let g_keys = gs.next().unwrap();
            let g_qcol = gs.next().unwrap();

            let mut gk = back_k(&g_keys).into_iter();
            let mut g_tokens = gk.next().unwrap();
            grads.add(&self.w_k.name, gk.next().unwrap());
            let mut gv = back_v(&g_vals).into_iter();
            g_tokens.add_assign(&gv.next().unwrap());
            grads.add(&self.w_v.name, gv.next().unwrap());

            let mut g_qd = g_h;
            crate::vecops::add_assign(&mut g_qd, g_qcol.data());
            let g_q = back_q(&g_qd, grads);
            let mut g_queries = Tensor::zeros(self.queries.value.shape());
            g_queries.data_mut()[region_id * 2 * d..(region_id + 1) * 2 * d].copy_from_slice(&g_q);
            grads.add(&self.queries.name, g_queries);

            g_tokens.into_data()
        });
        Ok((logits, back))
    }

    pub fn forward(&self, f_fused: &[f64], region_id: usize) -> Result<[f64; 3]> {
        Ok(self.forward_with_backward(f_fused, region_id)?.0)
    }
}

pub fn progression_head(f_fused: &[f64], region_id: usize, head: &ProgressionHead) -> Result<[f64; 3]> {
    head.forward(f_fused, region_id)
}

pub fn softmax3(logits: &[f64; 3]) -> [f64; 3] {
    let p = softmax_row(logits);
    [p[0], p[1], p[2]]
}

pub fn random_label<R: Rng + ?Sized>(rng: &mut R) -> Label {
    Label::ALL[rng.random_range(0..Label::COUNT)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates() {
        let t = render_template(3, Label::Worsened, false, 12).unwrap();
        assert_eq!(t.text, "At region_3, the condition has worsened");
        for label in Label::ALL {
            let h = render_template(1, label, true, 4).unwrap();
            assert_eq!(h.text, "both of two images are healthy, there is no evident change");
        }
        assert_eq!(
            render_template(0, Label::NoChange, false, 1).unwrap(),
            render_template(0, Label::NoChange, false, 1).unwrap()
        );
        assert!(render_template(4, Label::Improved, false, 4).is_err());
    }

    #[test]
    fn text_embedding_is_deterministic_unit() {
        let a = text_embedding("At region_0, the condition has improved", 0);
        let b = text_embedding("At region_0, the condition has improved", 0);
        assert_eq!(a, b);
        assert!((norm(&a) - 1.0).abs() < 1e-12);
        assert_ne!(a, text_embedding("At region_0, the condition has improved", 1));
    }

    #[test]
    fn selector_head_reads_coordinates() {
        let t = render_template(2, Label::Improved, false, 4).unwrap();
        let e = text_embedding(&t.text, TEXT_STUB_SEED);
        let mut w = vec![0.0; 2 * TEXT_EMBED_DIM];
        w[5] = 1.0;
        w[TEXT_EMBED_DIM + 700] = 1.0;
        let head = Param::new("text/proj", Tensor::new(vec![2, TEXT_EMBED_DIM], w).unwrap());
        let out = embed_text(&t, &head).unwrap();
        assert_eq!(out, vec![e[5], e[700]]);
    }

    #[test]
    fn cosine_hand_case() {
        let r = 1.0 / 2f64.sqrt();
        let f = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let t = vec![vec![r, r], vec![r, -r]];
        let s = cosine_matrix(&f, &t).unwrap();
        let want = [r, r, r, -r];
        for (a, b) in s.values().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn cosine_zero_row_is_named() {
        let err = cosine_matrix(&[vec![1.0, 0.0], vec![0.0, 0.0]], &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap_err();
        assert!(err.to_string().contains("fused row 1"));
    }

    #[test]
    fn itc_closed_forms() {
        let s1 = SimilarityMatrix::new(1, vec![0.3]).unwrap();
        assert_eq!(itc_loss(&s1, 0.05).unwrap(), 0.0);

        let id = SimilarityMatrix::new(2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let want = (-20.0f64).exp().ln_1p();
        assert!((itc_loss(&id, 0.05).unwrap() - want).abs() < 1e-9);
        assert!(itc_loss(&id, 0.0).is_err());
    }

    #[test]
    fn itm_uninformative_head_is_ln2() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut head = ItmHead::init(3, &mut rng);
        head.w.value.fill(0.0);
        let f = vec![vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 0.0], vec![0.2, 0.2, 0.2]];
        let loss = itm_loss(&f, &f, &head, 7).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(itm_loss(&f[..1], &f[..1], &head, 7).is_err());
    }

    #[test]
    fn negatives_never_self() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let neg = sample_negatives(4, &mut rng).unwrap();
            assert!(neg.iter().enumerate().all(|(i, &j)| i != j && j < 4));
        }
    }

    #[test]
    fn weighted_ce_cases() {
        let y = [Label::Improved, Label::NoChange, Label::Worsened];
        let perfect = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let w = ClassWeights::from_labels(&y).unwrap();
        assert_eq!(weighted_ce(&perfect, &y, &w).unwrap(), 0.0);
        assert!(weighted_ce(&[[0.5, 0.6, 0.0]], &y[..1], &w).is_err());
        assert!(ClassWeights::from_counts([1, 0, 2]).is_err());
    }

    #[test]
    fn flags_select_components() {
        let off = LossFlags::default();
        assert_eq!(total_loss(9.0, 9.0, 2.0, off), 2.0);
        assert_eq!(total_loss(1.0, 5.0, 2.0, LossFlags { itc: true, itm: false }), 3.0);
        assert_eq!(total_loss(0.5, 0.25, 1.0, LossFlags { itc: true, itm: true }), 1.75);
    }

    #[test]
    fn head_query_indexing_and_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut head = ProgressionHead::init(3, 4, &mut rng).unwrap();
        let f = vec![0.1, -0.4, 0.3, 0.9, 0.0, -0.2];
        assert_ne!(head.forward(&f, 0).unwrap(), head.forward(&f, 1).unwrap());
        assert!(head.forward(&f, 4).is_err());
        head.w_cls.value.fill(0.0);
        head.b_cls.value = Tensor::vector(vec![0.5, -1.0, 2.0]);
        assert_eq!(head.forward(&f, 2).unwrap(), [0.5, -1.0, 2.0]);
    }
}
