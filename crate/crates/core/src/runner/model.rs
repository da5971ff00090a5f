use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Checkpoint, Gradients, Param};
use crate::error::{Error, Result};
use crate::layers::dense;
use crate::manifold::TransportMode;
use crate::medmam::{fuse, FusionArm, MedMamParams};
use crate::semantics::{
    cosine_matrix_with_backward, init_text_head, itc_loss_with_grad, itm_loss_with_grad, sample_negatives, softmax3,
    text_embedding, total_loss, weighted_ce_with_grad, ClassWeights, ItmHead, Label, LossFlags, ProgressionHead,
    TEXT_STUB_SEED,
};
use crate::synth::SynthSample;

use super::config::RunConfig;

/// Everything trained end to end.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub medmam: MedMamParams,
    pub head: ProgressionHead,
    pub text_proj: Param,
    pub itm: ItmHead,
}

impl Model {
    pub fn init<R: Rng + ?Sized>(cfg: &RunConfig, rng: &mut R) -> Result<Self> {
        let medmam = MedMamParams::init(cfg.d, cfg.curvature()?, rng)?;
        let head = ProgressionHead::init(cfg.d, cfg.k_regions, rng)?;
        let text_proj = init_text_head(2 * cfg.d, rng);
        let itm = ItmHead::init(2 * cfg.d, rng);
        Ok(Self {
            medmam,
            head,
            text_proj,
            itm,
        })
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = self.medmam.params();
        v.extend(self.head.params());
        v.push(&self.text_proj);
        v.extend(self.itm.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.medmam.params_mut();
        v.extend(self.head.params_mut());
        v.push(&mut self.text_proj);
        v.extend(self.itm.params_mut());
        v
    }

    /// Parameters the optimizer updates; a frozen curvature is left out.
    pub fn trainable_mut(&mut self) -> Vec<&mut Param> {
        let frozen = (!self.medmam.curvature_trainable).then(|| self.medmam.curvature.name.clone());
        self.params_mut()
            .into_iter()
            .filter(|p| Some(&p.name) != frozen.as_ref())
            .collect()
    }

    pub fn checkpoint(&self, cfg: &RunConfig) -> Result<Checkpoint> {
        let meta = serde_json::json!({ "config": serde_json::to_value(cfg)? });
        Ok(Checkpoint::from_params(self.params(), meta))
    }

    /// Rebuild the model described by a checkpoint's embedded config.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, RunConfig)> {
        let cfg_value = ck
            .meta
            .get("config")
            .ok_or_else(|| Error::Checkpoint("meta.config missing".into()))?;
        let cfg: RunConfig = serde_json::from_value(cfg_value.clone())
            .map_err(|e| Error::Checkpoint(format!("meta.config: {e}")))?;
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut model = Self::init(&cfg, &mut rng)?;
        ck.apply(model.params_mut())?;
        Ok((model, cfg))
    }
}

/// How the fused features are produced and which losses are active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub arm: FusionArm,
    pub mode: TransportMode,
    pub tau: f64,
    pub flags: LossFlags,
}

impl Objective {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            arm: cfg.fusion,
            mode: cfg.transport_mode,
            tau: cfg.tau,
            flags: cfg.flags,
        }
    }
}

/// Memoized hashed text embeddings keyed by the exact string.
#[derive(Debug, Default, Clone)]
pub struct TextCache {
    map: HashMap<String, Arc<Vec<f64>>>,
}

impl TextCache {
    pub fn get(&mut self, text: &str) -> Arc<Vec<f64>> {
        self.map
            .entry(text.to_string())
            .or_insert_with(|| Arc::new(text_embedding(text, TEXT_STUB_SEED)))
            .clone()
    }

    pub fn prepare<'s>(&mut self, data: &'s [SynthSample]) -> Vec<Prepared<'s>> {
        data.iter()
            .map(|s| Prepared {
                sample: s,
                e_text: self.get(&s.text.text),
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Prepared<'s> {
    pub sample: &'s SynthSample,
    pub e_text: Arc<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub cls: f64,
    pub itc: f64,
    pub itm: f64,
}

/// Forward and backward over one mini-batch. ITC and ITM need at least two
/// samples and contribute zero on a singleton batch.
pub fn batch_objective<R: Rng + ?Sized>(
    model: &Model,
    batch: &[Prepared<'_>],
    weights: &ClassWeights,
    obj: &Objective,
    rng: &mut R,
) -> Result<(LossParts, Gradients)> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::contract("empty batch"));
    }
    let mut grads = Gradients::new();
    let mut fused = Vec::with_capacity(n);
    let mut fuse_backs = Vec::with_capacity(n);
    let mut head_backs = Vec::with_capacity(n);
    let mut probs = Vec::with_capacity(n);
    for item in batch {
        let s = item.sample;
        let (out, back) = fuse(&s.f1.values, &s.f2.values, &model.medmam, obj.arm, obj.mode)?;
        let (logits, hb) = model.head.forward_with_backward(&out.f_fused, s.region_id)?;
        probs.push(softmax3(&logits));
        fused.push(out.f_fused);
        fuse_backs.push(back);
        head_backs.push(hb);
    }
    let labels: Vec<Label> = batch.iter().map(|b| b.sample.label).collect();
    let (cls, g_p) = weighted_ce_with_grad(&probs, &labels, weights)?;

    let mut g_fused: Vec<Vec<f64>> = Vec::with_capacity(n);
    for ((p, gp), hb) in probs.iter().zip(&g_p).zip(head_backs) {
        let inner: f64 = (0..3).map(|k| gp[k] * p[k]).sum();
        let g_logits: Vec<f64> = (0..3).map(|k| p[k] * (gp[k] - inner)).collect();
        g_fused.push(hb(&g_logits, &mut grads));
    }

    let mut parts = LossParts {
        cls,
        ..LossParts::default()
    };
    let use_text = n >= 2 && (obj.flags.itc || obj.flags.itm);
    if use_text {
        let mut text = Vec::with_capacity(n);
        let mut text_backs = Vec::with_capacity(n);
        for item in batch {
            let (t, back) = dense(&item.e_text, &model.text_proj, None)?;
            text.push(t);
            text_backs.push(back);
        }
        let mut g_text = vec![vec![0.0; text[0].len()]; n];
        if obj.flags.itc {
            let (s, back) = cosine_matrix_with_backward(&fused, &text)?;
            let (loss, g_s) = itc_loss_with_grad(&s, obj.tau)?;
            let (gf, gt) = back(&g_s);
            for i in 0..n {
                crate::vecops::add_assign(&mut g_fused[i], &gf[i]);
                crate::vecops::add_assign(&mut g_text[i], &gt[i]);
            }
            parts.itc = loss;
        }
        if obj.flags.itm {
            let neg = sample_negatives(n, rng)?;
            let r = itm_loss_with_grad(&fused, &text, &neg, &model.itm, &mut grads)?;
            for i in 0..n {
                crate::vecops::add_assign(&mut g_fused[i], &r.g_fused[i]);
                crate::vecops::add_assign(&mut g_text[i], &r.g_text[i]);
            }
            parts.itm = r.loss;
        }
        for (back, g) in text_backs.into_iter().zip(&g_text) {
            back(g, &mut grads);
        }
    }
    for (back, g) in fuse_backs.into_iter().zip(&g_fused) {
        back(g, &mut grads);
    }
    parts.total = total_loss(parts.itc, parts.itm, parts.cls, obj.flags);
    Ok((parts, grads))
}

pub fn predict(model: &Model, sample: &SynthSample, obj: &Objective) -> Result<Label> {
    let (out, _) = fuse(&sample.f1.values, &sample.f2.values, &model.medmam, obj.arm, obj.mode)?;
    let logits = model.head.forward(&out.f_fused, sample.region_id)?;
    let best = (0..3).fold(0, |b, k| if logits[k] > logits[b] { k } else { b });
    Label::from_index(best)
}

/// Per-sample predictions, evaluated in parallel and returned in order.
pub fn predict_all(model: &Model, data: &[SynthSample], obj: &Objective) -> Result<Vec<Label>> {
    data.par_iter().map(|s| predict(model, s, obj)).collect()
}
