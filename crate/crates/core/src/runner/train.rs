use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{AdamW, Checkpoint, ParamGroup};
use crate::error::{Error, Result};
use crate::semantics::{ClassWeights, Label};
use crate::synth::{generate, split, SynthSample};

use super::audit::{default_audit, GeometryAudit};
use super::config::RunConfig;
use super::metrics::{Confusion, Metrics};
use super::model::{batch_objective, predict_all, LossParts, Model, Objective, TextCache};

/// Per-epoch means of each loss component over the training batches.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossCurves {
    pub total: Vec<f64>,
    pub cls: Vec<f64>,
    pub itc: Vec<f64>,
    pub itm: Vec<f64>,
}

impl LossCurves {
    fn push(&mut self, p: LossParts) {
        self.total.push(p.total);
        self.cls.push(p.cls);
        self.itc.push(p.itc);
        self.itm.push(p.itm);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub epochs_run: usize,
    /// Epoch whose parameters were kept; 0 means the initialization.
    pub best_epoch: usize,
    pub loss_curves: LossCurves,
    pub val_weighted_f1: Vec<f64>,
    pub test: Metrics,
    pub learned_curvature: f64,
    pub geometry: GeometryAudit,
    pub wall_time_secs: f64,
}

impl RunReport {
    /// The report with timing zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_time_secs: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: RunReport,
    /// Parameters from the best validation epoch.
    pub checkpoint: Checkpoint,
}

pub fn evaluate_model(model: &Model, cfg: &RunConfig, data: &[SynthSample]) -> Result<Metrics> {
    let pred = predict_all(model, data, &Objective::from_config(cfg))?;
    let truth: Vec<Label> = data.iter().map(|s| s.label).collect();
    Metrics::from_confusion(Confusion::from_pairs(&truth, &pred)?)
}

/// Metrics of a checkpoint on `data`; parameters are only read.
pub fn evaluate(checkpoint: &Checkpoint, data: &[SynthSample]) -> Result<Metrics> {
    let (model, cfg) = Model::from_checkpoint(checkpoint)?;
    if let Some(s) = data.iter().find(|s| s.f1.values.len() != 3 * cfg.d || s.region_id >= cfg.k_regions) {
        return Err(Error::contract(format!(
            "dataset sample (width {}, region {}) does not fit the checkpoint (d = {}, K = {})",
            s.f1.values.len(),
            s.region_id,
            cfg.d,
            cfg.k_regions
        )));
    }
    evaluate_model(&model, &cfg, data)
}

/// Generate, split and train per `cfg`.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = generate(&cfg.synth)?;
    let splits = split(&data, cfg.split, cfg.seed)?;
    train_on(cfg, &splits.train, &splits.val, &splits.test)
}

fn as_divergence(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::NonFinite { .. } | Error::Singularity { .. } => Error::Divergence {
            epoch,
            batch,
            detail: e.to_string(),
        },
        e => e,
    }
}

pub fn train_on(
    cfg: &RunConfig,
    train_set: &[SynthSample],
    val_set: &[SynthSample],
    test_set: &[SynthSample],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::init(cfg, &mut init_rng)?;
    let obj = Objective::from_config(cfg);
    let weights = ClassWeights::from_labels(&train_set.iter().map(|s| s.label).collect::<Vec<_>>())?;
    let mut cache = TextCache::default();
    let mut prepared = cache.prepare(train_set);

    let mut opt = AdamW::new(cfg.weight_decay);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut neg_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));

    let mut best = (evaluate_model(&model, cfg, val_set)?.weighted_f1, 0usize);
    let mut best_ck = model.checkpoint(cfg)?;
    let mut curves = LossCurves::default();
    let mut val_curve = Vec::new();
    let mut step = 0u64;
    let mut epochs_run = 0;

    for epoch in 1..=cfg.epochs {
        let lr_main = cfg.scheduler.lr(cfg.lr_main, epoch - 1);
        let lr_stub = cfg.scheduler.lr(cfg.lr_stub, epoch - 1);
        prepared.shuffle(&mut shuffle_rng);
        let mut sum = LossParts::default();
        let mut n_batches = 0usize;
        for (b, batch) in prepared.chunks(cfg.batch_size).enumerate() {
            let (parts, grads) =
                batch_objective(&model, batch, &weights, &obj, &mut neg_rng).map_err(|e| as_divergence(e, epoch, b))?;
            if !parts.total.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b,
                    detail: format!("loss = {} ({parts:?})", parts.total),
                });
            }
            let mut params = model.trainable_mut();
            params.iter_mut().for_each(|p| p.zero_grad());
            grads.accumulate_into(params.iter_mut().map(|p| &mut **p));
            step += 1;
            let (main, stub): (Vec<_>, Vec<_>) = params.into_iter().partition(|p| p.group == ParamGroup::Main);
            opt.step(main, lr_main, step).map_err(|e| as_divergence(e, epoch, b))?;
            opt.step(stub, lr_stub, step).map_err(|e| as_divergence(e, epoch, b))?;
            sum.total += parts.total;
            sum.cls += parts.cls;
            sum.itc += parts.itc;
            sum.itm += parts.itm;
            n_batches += 1;
        }
        let k = n_batches.max(1) as f64;
        curves.push(LossParts {
            total: sum.total / k,
            cls: sum.cls / k,
            itc: sum.itc / k,
            itm: sum.itm / k,
        });
        epochs_run = epoch;

        let f1 = evaluate_model(&model, cfg, val_set)?.weighted_f1;
        val_curve.push(f1);
        if f1 > best.0 {
            best = (f1, epoch);
            best_ck = model.checkpoint(cfg)?;
        } else if cfg.patience > 0 && epoch - best.1 >= cfg.patience {
            break;
        }
    }

    best_ck.apply(model.params_mut())?;
    let test = evaluate_model(&model, cfg, test_set)?;
    Ok(TrainOutcome {
        report: RunReport {
            config: cfg.clone(),
            epochs_run,
            best_epoch: best.1,
            loss_curves: curves,
            val_weighted_f1: val_curve,
            test,
            learned_curvature: model.medmam.curvature_value(),
            geometry: default_audit(cfg.seed)?,
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
        checkpoint: best_ck,
    })
}
