use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::semantics::Label;

/// `counts[true][pred]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: [[u64; 3]; 3],
}

impl Confusion {
    pub fn from_pairs(truth: &[Label], pred: &[Label]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::contract("truth and prediction lengths differ"));
        }
        let mut c = Self::default();
        for (t, p) in truth.iter().zip(pred) {
            c.counts[t.index()][p.index()] += 1;
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self) -> [u64; 3] {
        self.counts.map(|r| r.iter().sum())
    }

    fn predicted(&self) -> [u64; 3] {
        let mut p = [0; 3];
        for row in &self.counts {
            for (j, v) in row.iter().enumerate() {
                p[j] += v;
            }
        }
        p
    }

    fn require_nonempty(&self) -> Result<()> {
        if self.total() == 0 {
            return Err(Error::contract("confusion matrix is all zero"));
        }
        Ok(())
    }

    pub fn accuracy(&self) -> Result<f64> {
        self.require_nonempty()?;
        let trace: u64 = (0..3).map(|i| self.counts[i][i]).sum();
        Ok(trace as f64 / self.total() as f64)
    }

    /// Zero when nothing was predicted as the class.
    pub fn precision(&self) -> [f64; 3] {
        let p = self.predicted();
        std::array::from_fn(|i| ratio(self.counts[i][i], p[i]))
    }

    pub fn recall(&self) -> [f64; 3] {
        let s = self.support();
        std::array::from_fn(|i| ratio(self.counts[i][i], s[i]))
    }

    pub fn f1(&self) -> [f64; 3] {
        let (p, r) = (self.precision(), self.recall());
        std::array::from_fn(|i| if p[i] + r[i] > 0.0 { 2.0 * p[i] * r[i] / (p[i] + r[i]) } else { 0.0 })
    }

    /// Support-weighted mean of per-class F1.
    pub fn weighted_f1(&self) -> Result<f64> {
        self.require_nonempty()?;
        let s = self.support();
        let f = self.f1();
        Ok((0..3).map(|i| s[i] as f64 * f[i]).sum::<f64>() / self.total() as f64)
    }

    /// Unweighted mean of per-class F1 over classes with support.
    pub fn macro_f1(&self) -> Result<f64> {
        self.require_nonempty()?;
        let s = self.support();
        let f = self.f1();
        let present: Vec<usize> = (0..3).filter(|&i| s[i] > 0).collect();
        Ok(present.iter().map(|&i| f[i]).sum::<f64>() / present.len() as f64)
    }

    /// Support-weighted mean of per-class recall, which reduces to trace/total.
    pub fn weighted_accuracy(&self) -> Result<f64> {
        self.require_nonempty()?;
        let s = self.support();
        let r = self.recall();
        Ok((0..3).map(|i| s[i] as f64 * r[i]).sum::<f64>() / self.total() as f64)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn weighted_f1(confusion: &Confusion) -> Result<f64> {
    confusion.weighted_f1()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: u64,
    pub accuracy: f64,
    pub weighted_accuracy: f64,
    pub weighted_f1: f64,
    pub macro_f1: f64,
    pub precision: [f64; 3],
    pub recall: [f64; 3],
    pub confusion: Confusion,
}

impl Metrics {
    pub fn from_confusion(c: Confusion) -> Result<Self> {
        Ok(Self {
            n: c.total(),
            accuracy: c.accuracy()?,
            weighted_accuracy: c.weighted_accuracy()?,
            weighted_f1: c.weighted_f1()?,
            macro_f1: c.macro_f1()?,
            precision: c.precision(),
            recall: c.recall(),
            confusion: c,
        })
    }
}
