use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{Curvature, TransportMode};
use crate::medmam::FusionArm;
use crate::semantics::{LossFlags, DEFAULT_TAU};
use crate::synth::SynthConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scheduler {
    /// Decay interval in epochs.
    pub step: usize,
    pub factor: f64,
}

impl Default for Scheduler {
    fn default() -> Self {
        Self { step: 5, factor: 0.3 }
    }
}

impl Scheduler {
    pub fn lr(&self, base: f64, epoch: usize) -> f64 {
        crate::diffcore::step_lr(base, epoch, self.step, self.factor)
    }
}

fn default_flags() -> LossFlags {
    LossFlags { itc: true, itm: false }
}

/// Every knob of a training run. Deserialization rejects unknown keys;
/// omitted keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub synth: SynthConfig,
    /// Must equal `synth.d`.
    pub d: usize,
    /// Number of regions; must equal `synth.k_regions`.
    #[serde(rename = "K", alias = "k_regions")]
    pub k_regions: usize,
    pub tau: f64,
    pub curvature: f64,
    pub learn_curvature: bool,
    pub transport_mode: TransportMode,
    pub fusion: FusionArm,
    pub flags: LossFlags,
    pub lr_main: f64,
    pub lr_stub: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub scheduler: Scheduler,
    /// Epochs without a validation weighted-F1 improvement before stopping.
    /// Zero disables early stopping.
    pub patience: usize,
    /// Train / validation / test fractions.
    pub split: [f64; 3],
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        Self {
            d: synth.d,
            k_regions: synth.k_regions,
            synth,
            tau: DEFAULT_TAU,
            curvature: Curvature::DEFAULT,
            learn_curvature: true,
            transport_mode: TransportMode::Paper,
            fusion: FusionArm::MedMam,
            flags: default_flags(),
            lr_main: 5e-5,
            lr_stub: 1e-5,
            weight_decay: 1e-4,
            epochs: 20,
            batch_size: 4,
            scheduler: Scheduler::default(),
            patience: 5,
            split: [0.7, 0.1, 0.2],
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::contract(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        if self.d != self.synth.d || self.k_regions != self.synth.k_regions {
            return Err(Error::contract(format!(
                "d = {}, K = {} disagree with synth (d = {}, k_regions = {})",
                self.d, self.k_regions, self.synth.d, self.synth.k_regions
            )));
        }
        let positive = [
            ("tau", self.tau),
            ("curvature", self.curvature),
            ("lr_main", self.lr_main),
            ("lr_stub", self.lr_stub),
            ("scheduler.factor", self.scheduler.factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::contract(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::contract(format!("weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        if self.batch_size == 0 {
            return Err(Error::contract("batch_size must be >= 1"));
        }
        if self.scheduler.step == 0 {
            return Err(Error::contract("scheduler.step must be >= 1"));
        }
        Ok(())
    }

    pub fn curvature(&self) -> Result<Curvature> {
        if self.learn_curvature {
            Curvature::trainable(self.curvature)
        } else {
            Curvature::new(self.curvature)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let s = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&s).unwrap(), cfg);
        assert_eq!(RunConfig::from_json("{}").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"epochs": 3, "learning_rate": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"synth": {"n_samples": 10, "d": 16, "k_regions": 4, "seed": 0,
            "class_separation": 1, "noise_sigma": 0.1, "text_informative": true, "bogus": 1}}"#)
        .is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_json(r#"{"tau": 0}"#).is_err());
        assert!(RunConfig::from_json(r#"{"d": 8}"#).is_err());
        assert!(RunConfig::from_json(r#"{"batch_size": 0}"#).is_err());
    }

    #[test]
    fn scheduler_decays_every_step_epochs() {
        let s = Scheduler::default();
        assert_eq!(s.lr(5e-5, 4), 5e-5);
        assert_eq!(s.lr(5e-5, 5), 5e-5 * 0.3);
        assert_eq!(s.lr(5e-5, 10), 5e-5 * 0.3f64.powi(2));
    }
}
