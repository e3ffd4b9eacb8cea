//! Gradient similarity between the mastered-set and injection-set losses.
//!
//! Under a step `theta -= eta * g_I`, the first-order change of the mastered
//! loss is `-eta * <g_M, g_I>`. The inner product splits into one term per
//! parameter, `s_j = g_M[j] * g_I[j]`; parameters with `s_j < 0` push the
//! mastered loss up (conflicting), the rest pull it down (collaborative).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::autodiff::loss_and_grad;
use crate::data::SampleSet;
use crate::error::{check_len, Error, Result};
use crate::models::ModelArch;
use crate::params::ParamVector;

/// Per-parameter similarity terms `s_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityVector {
    pub s: Vec<f64>,
}

impl SimilarityVector {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.s.iter().sum()
    }
}

/// `keep[j]` marks a collaborative parameter, i.e. one that may be updated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuronMask {
    pub keep: Vec<bool>,
}

impl NeuronMask {
    pub fn all(len: usize, value: bool) -> Self {
        Self { keep: vec![value; len] }
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn count_kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    /// Fraction of kept entries; 1 for an empty mask.
    pub fn density(&self) -> f64 {
        if self.keep.is_empty() {
            1.0
        } else {
            self.count_kept() as f64 / self.keep.len() as f64
        }
    }
}

/// Split of the similarity terms into collaborative and conflicting parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradSimReport {
    pub prop_collab: f64,
    pub prop_conflict: f64,
    pub grad_collab: f64,
    pub grad_conflict: f64,
    pub total: f64,
}

impl GradSimReport {
    pub const CSV_HEADER: &'static str = "prop_collab,prop_conflict,grad_collab,grad_conflict,total";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.prop_collab, self.prop_conflict, self.grad_collab, self.grad_conflict, self.total
        )
    }
}

/// Writes reports as CSV, one row per checkpoint.
pub fn write_report_csv<W: Write>(mut out: W, reports: &[GradSimReport]) -> std::io::Result<()> {
    writeln!(out, "{}", GradSimReport::CSV_HEADER)?;
    for r in reports {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Mastered samples grouped by how strongly negative their similarity is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimGroupAssignment {
    pub sim_indices: Vec<usize>,
    pub dissim_indices: Vec<usize>,
    pub middle_indices: Vec<usize>,
    pub excluded_indices: Vec<usize>,
}

/// `<g_M, g_I>`.
pub fn global_similarity(g_mastered: &[f64], g_injection: &[f64]) -> Result<f64> {
    check_len(g_mastered.len(), g_injection.len())?;
    Ok(g_mastered.iter().zip(g_injection).map(|(a, b)| a * b).sum())
}

pub fn per_param_similarity(g_mastered: &[f64], g_injection: &[f64]) -> Result<SimilarityVector> {
    check_len(g_mastered.len(), g_injection.len())?;
    Ok(SimilarityVector {
        s: g_mastered.iter().zip(g_injection).map(|(a, b)| a * b).collect(),
    })
}

/// Zero similarity counts as collaborative.
pub fn classify_neurons(s: &SimilarityVector) -> NeuronMask {
    NeuronMask {
        keep: s.s.iter().map(|&v| v >= 0.0).collect(),
    }
}

pub fn neuron_distribution_report(s: &SimilarityVector) -> Result<GradSimReport> {
    if s.is_empty() {
        return Err(Error::config("similarity report needs at least one parameter"));
    }
    let mut n_collab = 0usize;
    let (mut grad_collab, mut grad_conflict) = (0.0, 0.0);
    for &v in &s.s {
        if v >= 0.0 {
            n_collab += 1;
            grad_collab += v;
        } else {
            grad_conflict += v;
        }
    }
    let n = s.len() as f64;
    let prop_collab = n_collab as f64 / n;
    Ok(GradSimReport {
        prop_collab,
        prop_conflict: (s.len() - n_collab) as f64 / n,
        grad_collab,
        grad_conflict,
        total: grad_collab + grad_conflict,
    })
}

/// Similarity between one sample's loss gradient and `g_injection`, both at
/// `params`.
pub fn per_sample_similarity(
    params: &ParamVector,
    sample: &SampleSet,
    g_injection: &[f64],
    arch: &ModelArch,
) -> Result<f64> {
    let (_, g) = loss_and_grad(params, sample, arch)?;
    global_similarity(g.as_slice(), g_injection)
}

/// [`per_sample_similarity`] for every row of `set`.
pub fn per_sample_similarities(
    params: &ParamVector,
    set: &SampleSet,
    g_injection: &[f64],
    arch: &ModelArch,
) -> Result<Vec<f64>> {
    (0..set.len())
        .map(|i| per_sample_similarity(params, &set.sample(i), g_injection, arch))
        .collect()
}

/// Ranks the negative similarities by magnitude. The largest `floor(n/3)`
/// form the sim group, the smallest `floor(n/3)` the dissim group and the
/// rest the middle; nonnegative samples are excluded. Ties keep index order.
pub fn sim_dissim_groups(per_sample_sims: &[f64]) -> Result<SimGroupAssignment> {
    let (mut negative, excluded): (Vec<usize>, Vec<usize>) =
        (0..per_sample_sims.len()).partition(|&i| per_sample_sims[i] < 0.0);
    if negative.len() < 3 {
        return Err(Error::TooFewNegatives { count: negative.len() });
    }
    // stable sort, descending magnitude
    negative.sort_by(|&a, &b| per_sample_sims[b].abs().total_cmp(&per_sample_sims[a].abs()));
    let third = negative.len() / 3;
    let dissim = negative.split_off(negative.len() - third);
    let middle = negative.split_off(third);
    Ok(SimGroupAssignment {
        sim_indices: negative,
        dissim_indices: dissim,
        middle_indices: middle,
        excluded_indices: excluded,
    })
}

/// First-order change of the mastered loss, `-eta * S`.
pub fn predicted_loss_change(eta: f64, similarity: f64) -> f64 {
    -eta * similarity
}

/// First-order change of the mastered loss when only kept parameters move.
pub fn predicted_cnl_loss_change(eta: f64, s: &SimilarityVector, mask: &NeuronMask) -> Result<f64> {
    check_len(s.len(), mask.len())?;
    let kept: f64 = s
        .s
        .iter()
        .zip(&mask.keep)
        .filter(|(_, &k)| k)
        .map(|(v, _)| v)
        .sum();
    Ok(predicted_loss_change(eta, kept))
}
