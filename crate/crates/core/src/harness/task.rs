//! Synthetic classification tasks.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::array::DenseArray;
use crate::data::SampleSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    GaussianMixture,
    XorBands,
    Merged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub generator: Generator,
    /// Ignored for merged tasks, whose size is the sum of the sub-tasks.
    #[serde(default)]
    pub n_samples: usize,
    pub input_dim: usize,
    pub classes: usize,
    #[serde(default)]
    pub cluster_overlap: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sub_tasks: Vec<TaskSpec>,
}

impl TaskSpec {
    pub fn gaussian(n_samples: usize, input_dim: usize, classes: usize, overlap: f64, seed: u64) -> Self {
        Self {
            generator: Generator::GaussianMixture,
            n_samples,
            input_dim,
            classes,
            cluster_overlap: overlap,
            seed,
            sub_tasks: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("task input_dim must be positive"));
        }
        if self.classes < 2 {
            return Err(Error::config("task needs at least 2 classes"));
        }
        if !(0.0..=1.0).contains(&self.cluster_overlap) {
            return Err(Error::config(format!(
                "cluster_overlap must lie in [0, 1], got {}",
                self.cluster_overlap
            )));
        }
        match self.generator {
            Generator::Merged => {
                if self.sub_tasks.len() < 2 {
                    return Err(Error::config("a merged task needs at least 2 sub_tasks"));
                }
                for sub in &self.sub_tasks {
                    sub.validate()?;
                    if sub.generator == Generator::Merged {
                        return Err(Error::config("merged tasks cannot nest"));
                    }
                    if sub.input_dim != self.input_dim {
                        return Err(Error::config("merged sub_tasks must share input_dim"));
                    }
                    if sub.classes > self.classes {
                        return Err(Error::config("a sub_task has more classes than the merged task"));
                    }
                }
            }
            _ => {
                if self.n_samples < self.classes {
                    return Err(Error::config("n_samples must be at least the class count"));
                }
                if !self.sub_tasks.is_empty() {
                    return Err(Error::config("sub_tasks are only valid for merged tasks"));
                }
            }
        }
        Ok(())
    }

    /// Copy of this spec with every seed shifted by `offset`.
    pub fn reseeded(&self, offset: u64) -> Self {
        let mut spec = self.clone();
        spec.seed = spec.seed.wrapping_add(offset);
        for sub in &mut spec.sub_tasks {
            *sub = sub.reseeded(offset);
        }
        spec
    }

    /// Noise scale of the gaussian generator.
    pub fn sigma(&self) -> f64 {
        0.02 + 2.0 * self.cluster_overlap
    }
}

/// Generates the task's samples. Classes are exactly balanced up to the
/// remainder of `n_samples / classes`.
pub fn synth_dataset(spec: &TaskSpec) -> Result<SampleSet> {
    Ok(synth_tagged(spec)?.0)
}

/// Like [`synth_dataset`], also returning the sub-task index of every row
/// (all zeros for a plain task).
pub fn synth_tagged(spec: &TaskSpec) -> Result<(SampleSet, Vec<usize>)> {
    spec.validate()?;
    match spec.generator {
        Generator::GaussianMixture => Ok((gaussian_mixture(spec)?, vec![0; spec.n_samples])),
        Generator::XorBands => Ok((xor_bands(spec)?, vec![0; spec.n_samples])),
        Generator::Merged => {
            let mut merged: Option<SampleSet> = None;
            let mut tags = Vec::new();
            for (k, sub) in spec.sub_tasks.iter().enumerate() {
                let set = synth_dataset(sub)?;
                tags.extend(std::iter::repeat_n(k, set.len()));
                merged = Some(match merged {
                    None => set,
                    Some(acc) => acc.concat(&set)?,
                });
            }
            Ok((merged.expect("validated: at least two sub-tasks"), tags))
        }
    }
}

/// Balanced labels in seeded random order.
fn balanced_labels(n: usize, classes: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(rng);
    labels
}

/// Class means on a circle of radius 1 in the first two coordinates, rotated
/// by a seeded phase; isotropic gaussian noise everywhere.
fn gaussian_mixture(spec: &TaskSpec) -> Result<SampleSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let phase = rng.gen_range(0.0..2.0 * PI);
    let c = spec.classes;
    let means: Vec<Vec<f64>> = (0..c)
        .map(|k| {
            let mut mean = vec![0.0; spec.input_dim];
            if spec.input_dim == 1 {
                mean[0] = k as f64 - (c - 1) as f64 / 2.0;
            } else {
                let angle = phase + 2.0 * PI * k as f64 / c as f64;
                mean[0] = angle.cos();
                mean[1] = angle.sin();
            }
            mean
        })
        .collect();
    let noise = Normal::new(0.0, spec.sigma()).expect("sigma is positive");
    let labels = balanced_labels(spec.n_samples, c, &mut rng);
    let mut data = Vec::with_capacity(spec.n_samples * spec.input_dim);
    for &y in &labels {
        for &m in &means[y] {
            data.push(m + noise.sample(&mut rng));
        }
    }
    SampleSet::new(DenseArray::new(vec![spec.n_samples, spec.input_dim], data)?, labels)
}

/// Checkerboard-style bands: the class of a point in `[-1, 1]^d` is the sum of
/// its band indices along the first two axes, modulo the class count. Points
/// are drawn per class by rejection and then jittered by the overlap.
fn xor_bands(spec: &TaskSpec) -> Result<SampleSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let c = spec.classes;
    let band = |x: f64| (((x + 1.0) / 2.0 * c as f64).floor() as usize).min(c - 1);
    let class_of = |p: &[f64]| {
        let b1 = if p.len() > 1 { band(p[1]) } else { 0 };
        (band(p[0]) + b1) % c
    };
    let jitter = Normal::new(0.0, 0.5 * spec.cluster_overlap + 1e-9).expect("positive scale");
    let labels = balanced_labels(spec.n_samples, c, &mut rng);
    let mut data = Vec::with_capacity(spec.n_samples * spec.input_dim);
    let mut point = vec![0.0; spec.input_dim];
    for &y in &labels {
        loop {
            for v in point.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            if class_of(&point) == y {
                break;
            }
        }
        data.extend(point.iter().map(|v| v + jitter.sample(&mut rng)));
    }
    SampleSet::new(DenseArray::new(vec![spec.n_samples, spec.input_dim], data)?, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(set: &SampleSet, classes: usize) -> Vec<usize> {
        let mut c = vec![0; classes];
        for &y in set.labels() {
            c[y] += 1;
        }
        c
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = TaskSpec::gaussian(90, 2, 3, 0.3, 5);
        assert_eq!(synth_dataset(&spec).unwrap(), synth_dataset(&spec).unwrap());
        assert_ne!(synth_dataset(&spec).unwrap(), synth_dataset(&spec.reseeded(1)).unwrap());
    }

    #[test]
    fn classes_are_balanced() {
        for generator in [Generator::GaussianMixture, Generator::XorBands] {
            let spec = TaskSpec {
                generator,
                ..TaskSpec::gaussian(601, 3, 3, 0.3, 2)
            };
            let set = synth_dataset(&spec).unwrap();
            assert_eq!(set.len(), 601);
            for n in counts(&set, 3) {
                assert!((200..=201).contains(&n), "{n}");
            }
        }
    }

    #[test]
    fn merged_concatenates_and_tags() {
        let spec = TaskSpec {
            generator: Generator::Merged,
            n_samples: 0,
            input_dim: 2,
            classes: 3,
            cluster_overlap: 0.0,
            seed: 0,
            sub_tasks: vec![TaskSpec::gaussian(30, 2, 3, 0.2, 1), TaskSpec::gaussian(45, 2, 2, 0.2, 2)],
        };
        let (set, tags) = synth_tagged(&spec).unwrap();
        assert_eq!(set.len(), 75);
        assert_eq!(tags.iter().filter(|&&t| t == 1).count(), 45);
    }

    #[test]
    fn invalid_specs() {
        let mut spec = TaskSpec::gaussian(10, 2, 3, 1.5, 0);
        assert!(synth_dataset(&spec).is_err());
        spec.cluster_overlap = 0.1;
        spec.generator = Generator::Merged;
        assert!(synth_dataset(&spec).is_err());
        let merged = TaskSpec {
            generator: Generator::Merged,
            sub_tasks: vec![TaskSpec::gaussian(10, 2, 2, 0.1, 0), TaskSpec::gaussian(10, 3, 2, 0.1, 0)],
            ..TaskSpec::gaussian(0, 2, 2, 0.0, 0)
        };
        assert!(synth_dataset(&merged).is_err());
    }
}
