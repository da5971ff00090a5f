use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medmam::FusionArm;
use crate::semantics::LossFlags;

use super::config::RunConfig;
use super::train::{train, RunReport};

/// One column of an ablation: either a loss-flag setting or a fusion variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    WithoutItc,
    WithItc,
    WithItm,
    WithItcItm,
    Fusion(FusionArm),
}

impl Arm {
    pub const OBJECTIVES: [Arm; 4] = [Arm::WithoutItc, Arm::WithItc, Arm::WithItm, Arm::WithItcItm];
    pub const FUSIONS: [Arm; 4] = [
        Arm::Fusion(FusionArm::Diff),
        Arm::Fusion(FusionArm::Concat),
        Arm::Fusion(FusionArm::EuclidOnly),
        Arm::Fusion(FusionArm::MedMam),
    ];

    pub fn label(self) -> &'static str {
        match self {
            Arm::WithoutItc => "w/o ITC",
            Arm::WithItc => "w/ ITC",
            Arm::WithItm => "w/ ITM",
            Arm::WithItcItm => "w/ ITC&ITM",
            Arm::Fusion(f) => f.label(),
        }
    }

    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        let flags = |itc, itm| LossFlags { itc, itm };
        match self {
            Arm::WithoutItc => cfg.flags = flags(false, false),
            Arm::WithItc => cfg.flags = flags(true, false),
            Arm::WithItm => cfg.flags = flags(false, true),
            Arm::WithItcItm => cfg.flags = flags(true, true),
            Arm::Fusion(f) => cfg.fusion = f,
        }
        cfg
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = Arm::OBJECTIVES.iter().chain(&Arm::FUSIONS);
        let key = |a: &Arm| a.label().to_ascii_lowercase();
        let found = match s.to_ascii_lowercase().as_str() {
            "without-itc" | "no-itc" => Some(Arm::WithoutItc),
            "with-itc" | "itc" => Some(Arm::WithItc),
            "with-itm" | "itm" => Some(Arm::WithItm),
            "with-itc-itm" | "itc-itm" => Some(Arm::WithItcItm),
            "diff" => Some(Arm::Fusion(FusionArm::Diff)),
            "euclid-only" => Some(Arm::Fusion(FusionArm::EuclidOnly)),
            other => all.clone().find(|a| key(a) == other).copied(),
        };
        found.ok_or_else(|| {
            let names: Vec<&str> = all.map(|a| a.label()).collect();
            Error::contract(format!("unknown ablation arm {s:?}; expected one of {names:?}"))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub arm: Arm,
    pub seed: u64,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Mean test weighted F1 of an arm across its seeds.
    pub fn mean_weighted_f1(&self, arm: Arm) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.arm == arm)
            .map(|r| r.report.test.weighted_f1)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// One row per (arm, seed) plus a `mean` row per arm.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("arm,seed,accuracy,weighted_f1,macro_f1,best_epoch,epochs_run\n");
        let mut arms: Vec<Arm> = Vec::new();
        for r in &self.rows {
            let t = &r.report.test;
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{},{}",
                r.arm.label(),
                r.seed,
                t.accuracy,
                t.weighted_f1,
                t.macro_f1,
                r.report.best_epoch,
                r.report.epochs_run
            );
            if !arms.contains(&r.arm) {
                arms.push(r.arm);
            }
        }
        for arm in arms {
            let rows: Vec<&AblationRow> = self.rows.iter().filter(|r| r.arm == arm).collect();
            let k = rows.len() as f64;
            let mean = |f: fn(&AblationRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / k;
            let _ = writeln!(
                out,
                "{},mean,{:.6},{:.6},{:.6},,",
                arm.label(),
                mean(|r| r.report.test.accuracy),
                mean(|r| r.report.test.weighted_f1),
                mean(|r| r.report.test.macro_f1),
            );
        }
        out
    }
}

/// Train every arm under every seed. The seed replaces both the data seed
/// and the run seed, so all arms at one seed see identical data and
/// initialization. Runs execute in parallel; row order is arm-major.
pub fn ablate(base: &RunConfig, arms: &[Arm], seeds: &[u64]) -> Result<AblationTable> {
    if arms.is_empty() || seeds.is_empty() {
        return Err(Error::contract("ablation needs at least one arm and one seed"));
    }
    let jobs: Vec<(Arm, u64)> = arms.iter().flat_map(|&a| seeds.iter().map(move |&s| (a, s))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(arm, seed)| {
            let mut cfg = arm.apply(base);
            cfg.seed = seed;
            cfg.synth.seed = seed;
            Ok(AblationRow {
                arm,
                seed,
                report: train(&cfg)?.report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable { rows })
}
