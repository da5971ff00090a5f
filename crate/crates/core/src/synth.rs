//! Seeded temporal feature-pair datasets with a known shift direction per class.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medmam::FeatureBundle;
use crate::semantics::{random_label, render_template, Label, ProgressionText};

fn default_proportions() -> [f64; 3] {
    [0.30, 0.32, 0.38]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_samples: usize,
    /// Per-layer width; bundles have `3d` values.
    pub d: usize,
    pub k_regions: usize,
    pub seed: u64,
    pub class_separation: f64,
    pub noise_sigma: f64,
    pub text_informative: bool,
    /// Requested label marginals (improved, no_change, worsened).
    pub class_proportions: [f64; 3],
    /// Fraction of no-change samples whose text is the healthy sentence.
    pub healthy_fraction: f64,
    /// Spread of the per-region base vectors.
    pub region_scale: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_samples: 3000,
            d: 16,
            k_regions: 4,
            seed: 0,
            class_separation: 2.0,
            noise_sigma: 0.1,
            text_informative: true,
            class_proportions: default_proportions(),
            healthy_fraction: 0.0,
            region_scale: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 3 {
            return Err(Error::contract(format!(
                "n_samples must be >= 3 so every class appears, got {}",
                self.n_samples
            )));
        }
        if self.d < 2 {
            return Err(Error::contract(format!("d must be >= 2, got {}", self.d)));
        }
        if self.k_regions < 1 {
            return Err(Error::contract("k_regions must be >= 1"));
        }
        for (name, v) in [
            ("class_separation", self.class_separation),
            ("noise_sigma", self.noise_sigma),
            ("region_scale", self.region_scale),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::contract(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.healthy_fraction) {
            return Err(Error::contract("healthy_fraction must lie in [0, 1]"));
        }
        let p = self.class_proportions;
        let s: f64 = p.iter().sum();
        if p.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!(
                "class_proportions must be positive and sum to 1, got {p:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSample {
    pub f1: FeatureBundle,
    pub f2: FeatureBundle,
    pub region_id: usize,
    pub label: Label,
    pub text: ProgressionText,
}

/// Per-class counts by largest remainder, with every class kept non-empty.
fn class_counts(n: usize, p: [f64; 3]) -> [usize; 3] {
    let raw = p.map(|v| v * n as f64);
    let mut counts = raw.map(|v| (v.floor() as usize).max(1));
    while counts.iter().sum::<usize>() > n {
        let i = (0..3).filter(|&i| counts[i] > 1).max_by_key(|&i| counts[i]).unwrap();
        counts[i] -= 1;
    }
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = raw[a] - counts[a] as f64;
        let rb = raw[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut k = 0;
    while counts.iter().sum::<usize>() < n {
        counts[order[k % 3]] += 1;
        k += 1;
    }
    counts
}

fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, sigma: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect()
}

/// Unit shift direction for each label; improvement and worsening are
/// opposite, no-change is zero.
pub fn shift_directions(cfg: &SynthConfig) -> [Vec<f64>; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_d1ec);
    let mut u = gaussian_vec(&mut rng, 3 * cfg.d, 1.0);
    let n = crate::vecops::norm(&u);
    u.iter_mut().for_each(|x| *x /= n);
    let neg = u.iter().map(|x| -x).collect();
    [u, vec![0.0; 3 * cfg.d], neg]
}

pub fn generate(cfg: &SynthConfig) -> Result<Vec<SynthSample>> {
    cfg.validate()?;
    let width = 3 * cfg.d;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bases: Vec<Vec<f64>> = (0..cfg.k_regions)
        .map(|_| gaussian_vec(&mut rng, width, cfg.region_scale))
        .collect();
    let dirs = shift_directions(cfg);
    let counts = class_counts(cfg.n_samples, cfg.class_proportions);
    let mut labels: Vec<Label> = Label::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&l, c)| std::iter::repeat(l).take(c))
        .collect();
    labels.shuffle(&mut rng);

    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    labels
        .into_iter()
        .map(|label| {
            let region_id = rng.random_range(0..cfg.k_regions);
            let base = &bases[region_id];
            let u = &dirs[label.index()];
            let f1: Vec<f64> = base.iter().map(|b| b + cfg.noise_sigma * noise.sample(&mut rng)).collect();
            let f2: Vec<f64> = f1
                .iter()
                .zip(u)
                .map(|(x, ui)| x + cfg.class_separation * ui + cfg.noise_sigma * noise.sample(&mut rng))
                .collect();
            let healthy = label == Label::NoChange && rng.random::<f64>() < cfg.healthy_fraction;
            let text_label = if cfg.text_informative { label } else { random_label(&mut rng) };
            let text = render_template(region_id, text_label, healthy && cfg.text_informative, cfg.k_regions)?;
            Ok(SynthSample {
                f1: FeatureBundle::new(f1, region_id)?,
                f2: FeatureBundle::new(f2, region_id)?,
                region_id,
                label,
                text,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<SynthSample>,
    pub val: Vec<SynthSample>,
    pub test: Vec<SynthSample>,
}

/// Seeded shuffle then contiguous cut. Sizes round down for train and val;
/// test takes the remainder.
pub fn split(data: &[SynthSample], ratios: [f64; 3], seed: u64) -> Result<Splits> {
    let s: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(*r >= 0.0)) || (s - 1.0).abs() > 1e-9 {
        return Err(Error::contract(format!("split ratios must be >= 0 and sum to 1, got {ratios:?}")));
    }
    let n = data.len();
    let n_train = (ratios[0] * n as f64 + 1e-9).floor() as usize;
    let n_val = (ratios[1] * n as f64 + 1e-9).floor() as usize;
    let n_test = n - n_train.min(n) - n_val.min(n - n_train.min(n));
    for (name, k) in [("train", n_train), ("val", n_val), ("test", n_test)] {
        if k == 0 {
            return Err(Error::contract(format!("{name} split would be empty ({n} samples, ratios {ratios:?})")));
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = |r: &[usize]| r.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
    Ok(Splits {
        train: take(&idx[..n_train]),
        val: take(&idx[n_train..n_train + n_val]),
        test: take(&idx[n_train + n_val..]),
    })
}

/// One JSON object per line.
pub fn write_jsonl<W: Write>(mut w: W, data: &[SynthSample]) -> Result<()> {
    for s in data {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<SynthSample>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: SynthSample = serde_json::from_str(&line)
            .map_err(|e| Error::invalid(format!("line {}: {e}", i + 1)))?;
        FeatureBundle::new(s.f1.values.clone(), s.region_id)?;
        FeatureBundle::new(s.f2.values.clone(), s.region_id)?;
        out.push(s);
    }
    Ok(out)
}

pub fn save_jsonl(path: &Path, data: &[SynthSample]) -> Result<()> {
    write_jsonl(std::io::BufWriter::new(std::fs::File::create(path)?), data)
}

pub fn load_jsonl(path: &Path) -> Result<Vec<SynthSample>> {
    read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_samples: 100,
            d: 4,
            k_regions: 3,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate(&small(3)).unwrap(), generate(&small(3)).unwrap());
        assert_ne!(generate(&small(3)).unwrap(), generate(&small(4)).unwrap());
    }

    #[test]
    fn counts_follow_proportions() {
        assert_eq!(class_counts(100, [0.30, 0.32, 0.38]), [30, 32, 38]);
        assert_eq!(class_counts(3, [0.30, 0.32, 0.38]), [1, 1, 1]);
        assert_eq!(class_counts(10, [0.30, 0.32, 0.38]).iter().sum::<usize>(), 10);
    }

    #[test]
    fn noiseless_nearest_direction_is_exact() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            class_separation: 1.0,
            ..small(9)
        };
        let dirs = shift_directions(&cfg);
        for s in generate(&cfg).unwrap() {
            let diff = crate::vecops::sub(&s.f2.values, &s.f1.values);
            let pred = (0..3)
                .min_by(|&a, &b| {
                    let da = crate::vecops::norm(&crate::vecops::sub(&diff, &dirs[a]));
                    let db = crate::vecops::norm(&crate::vecops::sub(&diff, &dirs[b]));
                    da.total_cmp(&db)
                })
                .unwrap();
            assert_eq!(pred, s.label.index());
        }
    }

    #[test]
    fn informative_text_names_label() {
        for s in generate(&small(1)).unwrap() {
            assert!(s.text.text.ends_with(s.label.phrase()));
            assert_eq!(s.text.label, s.label);
        }
    }

    #[test]
    fn degenerate_configs_rejected() {
        assert!(generate(&SynthConfig { n_samples: 2, ..small(0) }).is_err());
        assert!(generate(&SynthConfig { d: 1, ..small(0) }).is_err());
        assert!(generate(&SynthConfig { k_regions: 0, ..small(0) }).is_err());
        assert!(generate(&SynthConfig { noise_sigma: -1.0, ..small(0) }).is_err());
    }

    #[test]
    fn split_sizes() {
        let data = generate(&small(0)).unwrap();
        let s = split(&data, [0.7, 0.1, 0.2], 5).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (70, 10, 20));
        assert_eq!(s, split(&data, [0.7, 0.1, 0.2], 5).unwrap());
        assert!(split(&data, [1.0, 0.0, 0.0], 5).is_err());
        assert!(split(&data, [0.5, 0.1, 0.1], 5).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let data = generate(&small(2)).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &data).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), data.len());
        assert_eq!(read_jsonl(&buf[..]).unwrap(), data);
    }
}
