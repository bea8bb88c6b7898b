//! Datasets, loaders, and experiment configuration.

mod config;
mod delimited;
mod idx;

pub use config::{DatasetSource, Encoding, ExperimentConfig, Schedule, TrainEngine, BOOL_KEYS, CONFIG_KEYS, PRESETS};
pub use delimited::{load_delimited, write_delimited, DelimitedSchema};
pub use idx::{load_idx, write_idx};

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kv::{join_floats, KvDoc};
use crate::math::{Rng, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vector,
    pub label: usize,
}

/// Per-feature affine map `x ↦ (x − shift)/scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
    /// Features whose variance was zero; their scale is 1.
    pub constant: Vec<bool>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Normalization {
            shift: vec![0.0; dim],
            scale: vec![1.0; dim],
            constant: vec![false; dim],
        }
    }

    /// Mean and population standard deviation of every feature.
    pub fn fit(rows: &[Vector]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyInput("cannot fit normalization on no samples"))?;
        let dim = first.len();
        let n = rows.len() as f64;
        let mut shift = vec![0.0; dim];
        for r in rows {
            for (s, x) in shift.iter_mut().zip(r.iter()) {
                *s += x;
            }
        }
        shift.iter_mut().for_each(|s| *s /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r.iter()).zip(&shift) {
                *v += (x - m) * (x - m);
            }
        }
        let mut scale = Vec::with_capacity(dim);
        let mut constant = Vec::with_capacity(dim);
        for v in var {
            let sd = (v / n).sqrt();
            if sd > 0.0 && sd.is_finite() {
                scale.push(sd);
                constant.push(false);
            } else {
                scale.push(1.0);
                constant.push(true);
            }
        }
        Ok(Normalization { shift, scale, constant })
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.shift.len() {
            return Err(Error::dims("normalization", self.shift.len(), x.len()));
        }
        Ok(Vector::from_vec(
            x.iter()
                .zip(&self.shift)
                .zip(&self.scale)
                .map(|((v, m), s)| (v - m) / s)
                .collect(),
        ))
    }

    pub fn invert(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.shift.len() {
            return Err(Error::dims("normalization", self.shift.len(), x.len()));
        }
        Ok(Vector::from_vec(
            x.iter()
                .zip(&self.shift)
                .zip(&self.scale)
                .map(|((v, m), s)| v * s + m)
                .collect(),
        ))
    }

    pub fn write_kv(&self, out: &mut String) {
        out.push_str(&format!("norm.shift = {}\n", join_floats(&self.shift)));
        out.push_str(&format!("norm.scale = {}\n", join_floats(&self.scale)));
        let flags: Vec<&str> = self.constant.iter().map(|&c| if c { "1" } else { "0" }).collect();
        out.push_str(&format!("norm.constant = {}\n", flags.join(" ")));
    }

    /// Reads `norm.shift`/`norm.scale` if present.
    pub fn take_kv(doc: &mut KvDoc) -> Result<Option<Self>> {
        let shift: Option<Vec<f64>> = doc.take_list("norm.shift")?;
        let scale: Option<Vec<f64>> = doc.take_list("norm.scale")?;
        let constant: Option<Vec<u8>> = doc.take_list("norm.constant")?;
        match (shift, scale) {
            (None, None) if constant.is_none() => Ok(None),
            (Some(shift), Some(scale)) if shift.len() == scale.len() => {
                let constant = match constant {
                    Some(c) if c.len() == shift.len() => c.into_iter().map(|f| f != 0).collect(),
                    None => vec![false; shift.len()],
                    Some(_) => return Err(Error::parse(doc.source(), 0, "norm.constant length mismatch")),
                };
                Ok(Some(Normalization { shift, scale, constant }))
            }
            _ => Err(Error::parse(doc.source(), 0, "norm.shift and norm.scale must both be present with equal lengths")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub num_classes: usize,
    pub feature_dim: usize,
    /// The map already applied to `samples`.
    pub normalization: Normalization,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, num_classes: usize, feature_dim: usize) -> Result<Self> {
        for s in &samples {
            if s.features.len() != feature_dim {
                return Err(Error::dims("dataset features", feature_dim, s.features.len()));
            }
            if s.label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: s.label,
                    num_classes,
                });
            }
        }
        Ok(Dataset {
            samples,
            num_classes,
            feature_dim,
            normalization: Normalization::identity(feature_dim),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Fits zero-mean unit-variance scaling on this set and applies it.
    pub fn standardize(&mut self) -> Result<()> {
        let rows: Vec<Vector> = self.samples.iter().map(|s| s.features.clone()).collect();
        let norm = Normalization::fit(&rows)?;
        self.apply_normalization(norm)
    }

    /// Applies `norm` to raw features and records it.
    pub fn apply_normalization(&mut self, norm: Normalization) -> Result<()> {
        for s in &mut self.samples {
            s.features = norm.apply(&s.features)?;
        }
        self.normalization = norm;
        Ok(())
    }

    /// Splits off the last `fraction` of samples.
    pub fn split(mut self, fraction: f64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::InvalidParameter(format!("split fraction must be in [0, 1), got {fraction}")));
        }
        let n_test = (self.samples.len() as f64 * fraction).round() as usize;
        let test_samples = self.samples.split_off(self.samples.len() - n_test);
        let test = Dataset {
            samples: test_samples,
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
            normalization: self.normalization.clone(),
        };
        Ok((self, test))
    }
}

/// Two interleaved half circles of radius 1: class 0 centred at the origin
/// (upper arc), class 1 centred at `(1, 0.5)` (lower arc). Gaussian noise of
/// standard deviation `noise` is added to both coordinates, and the samples
/// are shuffled.
pub fn make_two_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("two moons needs n ≥ 2, got {n}")));
    }
    let mut rng = Rng::new(seed);
    let n0 = n.div_ceil(2);
    let n1 = n - n0;
    let angle = |i: usize, count: usize| {
        if count <= 1 {
            0.0
        } else {
            PI * i as f64 / (count - 1) as f64
        }
    };
    let mut samples = Vec::with_capacity(n);
    for i in 0..n0 {
        let th = angle(i, n0);
        samples.push((th.cos(), th.sin(), 0));
    }
    for i in 0..n1 {
        let th = angle(i, n1);
        samples.push((1.0 - th.cos(), 0.5 - th.sin(), 1));
    }
    let mut out: Vec<Sample> = samples
        .into_iter()
        .map(|(x, y, label)| {
            let (dx, dy) = if noise > 0.0 {
                (noise * rng.normal(), noise * rng.normal())
            } else {
                (0.0, 0.0)
            };
            Sample {
                features: Vector::from_vec(vec![x + dx, y + dy]),
                label,
            }
        })
        .collect();
    rng.shuffle(&mut out);
    Dataset::new(out, 2, 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_moons_lie_on_circles() {
        let d = make_two_moons(101, 0.0, 1).unwrap();
        for s in &d.samples {
            let (x, y) = (s.features[0], s.features[1]);
            let r = if s.label == 0 {
                (x * x + y * y).sqrt()
            } else {
                ((x - 1.0).powi(2) + (y - 0.5).powi(2)).sqrt()
            };
            assert!((r - 1.0).abs() < 1e-12);
        }
        let ones = d.samples.iter().filter(|s| s.label == 1).count();
        assert!((d.len() - ones).abs_diff(ones) <= 1);
    }

    #[test]
    fn moons_are_deterministic() {
        assert_eq!(make_two_moons(1000, 0.1, 9).unwrap(), make_two_moons(1000, 0.1, 9).unwrap());
        assert_ne!(make_two_moons(1000, 0.1, 9).unwrap(), make_two_moons(1000, 0.1, 10).unwrap());
        assert!(make_two_moons(1, 0.1, 9).is_err());
    }

    #[test]
    fn standardize_and_invert() {
        let mut d = make_two_moons(50, 0.1, 2).unwrap();
        let raw = d.clone();
        d.standardize().unwrap();
        for (a, b) in d.samples.iter().zip(&raw.samples) {
            let back = d.normalization.invert(&a.features).unwrap();
            assert!(back.sub(&b.features).unwrap().max_abs() < 1e-12);
        }
        let mut text = String::new();
        d.normalization.write_kv(&mut text);
        let mut doc = KvDoc::parse("n", &text).unwrap();
        assert_eq!(Normalization::take_kv(&mut doc).unwrap().unwrap(), d.normalization);
        doc.finish().unwrap();
        let mean: f64 = d.samples.iter().map(|s| s.features[0]).sum::<f64>() / d.len() as f64;
        assert!(mean.abs() < 1e-12);
    }
}
