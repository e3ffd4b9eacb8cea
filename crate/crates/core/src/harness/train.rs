//! Training arms: plain fine-tuning, collaborative-neuron learning and replay.

use std::io::Write;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::split::{count_flips, out_of_set_split, SplitResult};
use crate::autodiff::{loss, loss_and_grad};
use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::models::{evaluate_correctness, init_model, CorrectnessMask, ModelArch};
use crate::optim::{step, Hyper, OptimizerKind, OptimizerState, StepDiagnostics};
use crate::params::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Plain fine-tuning on the injection set.
    Ft,
    /// Masked updates that freeze conflicting parameters.
    Cnl,
    /// Replay: plain fine-tuning on injection plus retained mastered samples.
    Rp,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ft => "ft",
            Method::Cnl => "cnl",
            Method::Rp => "rp",
        }
    }
}

/// How often the mastered-set gradient behind the mask is recomputed. The
/// mask itself is always formed against the current update direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskPolicy {
    #[default]
    PerStep,
    PerEpoch,
    Once,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub optimizer: OptimizerKind,
    /// `hyper.lr` is the step size actually used.
    pub hyper: Hyper,
    pub epochs: usize,
    pub mask_policy: MaskPolicy,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    /// Drives minibatch order and replay interleaving.
    pub seed: u64,
}

/// The sets a run trains on and the sets it is scored on. In-set runs use the
/// same samples for both.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSets {
    pub injection_train: SampleSet,
    pub mastered_train: SampleSet,
    pub injection_eval: SampleSet,
    pub mastered_eval: SampleSet,
}

impl TrainingSets {
    pub fn in_set(split: &SplitResult) -> Self {
        Self {
            injection_train: split.injection.clone(),
            mastered_train: split.mastered.clone(),
            injection_eval: split.injection.clone(),
            mastered_eval: split.mastered.clone(),
        }
    }

    /// Splits both sides of `split` into disjoint train and eval halves.
    /// Indices in the returned [`HoldoutIndices`] refer to the source set.
    pub fn out_of_set(split: &SplitResult, ratio: f64, seed: u64) -> Result<(Self, HoldoutIndices)> {
        let (m_train, m_eval) = out_of_set_split(&split.mastered_indices, ratio, seed)?;
        let (i_train, i_eval) = out_of_set_split(&split.injection_indices, ratio, seed.wrapping_add(1))?;
        let source = |idx: &[usize], part: &SampleSet, part_idx: &[usize]| {
            let local: Vec<usize> = idx
                .iter()
                .map(|i| part_idx.binary_search(i).expect("index comes from this part"))
                .collect();
            part.subset(&local)
        };
        let sets = Self {
            injection_train: source(&i_train, &split.injection, &split.injection_indices),
            mastered_train: source(&m_train, &split.mastered, &split.mastered_indices),
            injection_eval: source(&i_eval, &split.injection, &split.injection_indices),
            mastered_eval: source(&m_eval, &split.mastered, &split.mastered_indices),
        };
        Ok((
            sets,
            HoldoutIndices {
                mastered_train: m_train,
                mastered_eval: m_eval,
                injection_train: i_train,
                injection_eval: i_eval,
            },
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoldoutIndices {
    pub mastered_train: Vec<usize>,
    pub mastered_eval: Vec<usize>,
    pub injection_train: Vec<usize>,
    pub injection_eval: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss_i: f64,
    pub loss_m: f64,
    pub learned: usize,
    pub forgot: usize,
}

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.epoch, self.loss_i, self.loss_m, self.learned, self.forgot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalCounts {
    pub learned: usize,
    pub forgot: usize,
    /// `learned / injection_size`.
    pub learned_rate: f64,
    /// `forgot / mastered_size`.
    pub forgot_rate: f64,
    pub injection_size: usize,
    pub mastered_size: usize,
}

/// Everything a training run measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Metrics before any update.
    pub initial: EpochMetrics,
    /// Metrics after each epoch, epochs `1..=E`.
    pub per_epoch: Vec<EpochMetrics>,
    pub final_counts: FinalCounts,
    /// Mastered-train loss at every refresh of the mastered gradient, followed
    /// by the loss after the last step. Empty for arms without a mask.
    pub mastered_loss_trace: Vec<f64>,
    #[serde(skip)]
    pub steps: Vec<StepDiagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics_path: Option<String>,
}

impl RunRecord {
    pub const CSV_HEADER: &'static str = "epoch,loss_I,loss_M,learned,forgot";

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for m in &self.per_epoch {
            writeln!(out, "{}", m.csv_row())?;
        }
        Ok(())
    }

    /// Largest single-step increase of the mastered loss along the trace.
    pub fn max_mastered_loss_increase(&self) -> f64 {
        self.mastered_loss_trace
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Fixed-epoch plain-SGD pretraining of the reference model. The default runs
/// full-batch long enough to land close to a minimum of the whole-set loss,
/// where mastered and injection gradients pull against each other.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: Option<usize>,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 0.5,
            batch_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pretrained {
    pub params: ParamVector,
    /// Full-set loss before training and after every epoch.
    pub loss_trace: Vec<f64>,
}

/// Plain SGD on the whole set from `init_model(arch, seed)`; no early stop.
pub fn pretrain_reference(set: &SampleSet, arch: &ModelArch, config: &PretrainConfig, seed: u64) -> Result<Pretrained> {
    let mut params = init_model(arch, seed);
    let mut trace = vec![loss(&params, set, arch)?];
    let hyper = Hyper {
        lr: config.lr,
        ..Hyper::default()
    };
    hyper.validate()?;
    let mut state = OptimizerState::new(OptimizerKind::Sgd, hyper, params.len());
    let mut batches = Batcher::new(set.len(), config.batch_size, seed ^ 0x9e37_79b9_7f4a_7c15);
    for epoch in 1..=config.epochs {
        for batch in batches.epoch() {
            let (_, g) = match &batch {
                None => loss_and_grad(&params, set, arch),
                Some(idx) => loss_and_grad(&params, &set.subset(idx), arch),
            }
            .map_err(|e| abort(epoch, e))?;
            params = step(&mut state, &params, None, g.as_slice()).map_err(|e| abort(epoch, e))?.0;
        }
        trace.push(loss(&params, set, arch).map_err(|e| abort(epoch, e))?);
    }
    Ok(Pretrained { params, loss_trace: trace })
}

/// Step size with `lr * max|g| = max_step` for the given gradient; 0 when the
/// gradient vanishes.
pub fn auto_lr(grad: &[f64], max_step: f64) -> f64 {
    let g_inf = grad.iter().fold(0.0_f64, |a, g| a.max(g.abs()));
    if g_inf > 0.0 {
        max_step / g_inf
    } else {
        0.0
    }
}

fn abort(epoch: usize, e: Error) -> Error {
    match e {
        Error::Aborted { .. } => e,
        other => Error::Aborted {
            epoch,
            source: Box::new(other),
        },
    }
}

/// Minibatch order generator; yields `None` for a single full batch.
struct Batcher {
    n: usize,
    batch: Option<usize>,
    rng: ChaCha8Rng,
}

impl Batcher {
    fn new(n: usize, batch: Option<usize>, seed: u64) -> Self {
        let batch = batch.filter(|&b| b > 0 && b < n);
        Self {
            n,
            batch,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn epoch(&mut self) -> Vec<Option<Vec<usize>>> {
        match self.batch {
            None => vec![None],
            Some(b) => {
                let mut order: Vec<usize> = (0..self.n).collect();
                order.shuffle(&mut self.rng);
                order.chunks(b).map(|c| Some(c.to_vec())).collect()
            }
        }
    }
}

/// Injection samples and mastered samples interleaved in a seeded order.
pub fn replay_set(injection: &SampleSet, mastered: &SampleSet, seed: u64) -> Result<SampleSet> {
    let joined = injection.concat(mastered)?;
    let mut order: Vec<usize> = (0..joined.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(joined.subset(&order))
}

struct Evaluator<'a> {
    arch: &'a ModelArch,
    sets: &'a TrainingSets,
    before_i: CorrectnessMask,
    before_m: CorrectnessMask,
}

impl Evaluator<'_> {
    fn measure(&self, params: &ParamVector, epoch: usize) -> Result<EpochMetrics> {
        let after_i = evaluate_correctness(params, &self.sets.injection_eval, self.arch)?;
        let after_m = evaluate_correctness(params, &self.sets.mastered_eval, self.arch)?;
        let (learned, _) = count_flips(&self.before_i, &after_i);
        let (_, forgot) = count_flips(&self.before_m, &after_m);
        Ok(EpochMetrics {
            epoch,
            loss_i: loss(params, &self.sets.injection_eval, self.arch)?,
            loss_m: loss(params, &self.sets.mastered_eval, self.arch)?,
            learned,
            forgot,
        })
    }
}

/// Trains one arm from `params` and records per-epoch metrics on the eval
/// sets. Learned and forgot counts are flips relative to `params`.
pub fn train(config: &TrainConfig, arch: &ModelArch, params: &ParamVector, sets: &TrainingSets) -> Result<(ParamVector, RunRecord)> {
    config.hyper.validate()?;
    arch.check_params(params)?;

    let replay;
    let train_set = match config.method {
        Method::Rp => {
            replay = replay_set(&sets.injection_train, &sets.mastered_train, config.seed)?;
            &replay
        }
        Method::Ft | Method::Cnl => &sets.injection_train,
    };

    let evaluator = Evaluator {
        arch,
        sets,
        before_i: evaluate_correctness(params, &sets.injection_eval, arch)?,
        before_m: evaluate_correctness(params, &sets.mastered_eval, arch)?,
    };
    let initial = evaluator.measure(params, 0)?;

    let mut params = params.clone();
    let mut state = OptimizerState::new(config.optimizer, config.hyper, params.len());
    let mut batches = Batcher::new(train_set.len(), config.batch_size, config.seed);
    let masked = config.method == Method::Cnl;
    let mut g_mastered: Option<ParamVector> = None;
    let mut trace = Vec::new();
    let mut steps = Vec::new();
    let mut per_epoch = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        for (b, batch) in batches.epoch().into_iter().enumerate() {
            let (_, g_i) = match &batch {
                None => loss_and_grad(&params, train_set, arch),
                Some(idx) => loss_and_grad(&params, &train_set.subset(idx), arch),
            }
            .map_err(|e| abort(epoch, e))?;

            if masked {
                let refresh = match config.mask_policy {
                    MaskPolicy::PerStep => true,
                    MaskPolicy::PerEpoch => b == 0,
                    MaskPolicy::Once => g_mastered.is_none(),
                };
                if refresh {
                    let (l_m, g_m) =
                        loss_and_grad(&params, &sets.mastered_train, arch).map_err(|e| abort(epoch, e))?;
                    trace.push(l_m);
                    g_mastered = Some(g_m);
                }
            }

            let gm = g_mastered.as_ref().map(ParamVector::as_slice);
            let (next, diag) = step(&mut state, &params, gm, g_i.as_slice()).map_err(|e| abort(epoch, e))?;
            params = next;
            steps.push(diag);
        }
        per_epoch.push(evaluator.measure(&params, epoch).map_err(|e| abort(epoch, e))?);
    }
    if masked {
        trace.push(loss(&params, &sets.mastered_train, arch)?);
    }

    let last = per_epoch.last().copied().unwrap_or(initial);
    let (n_i, n_m) = (sets.injection_eval.len(), sets.mastered_eval.len());
    let final_counts = FinalCounts {
        learned: last.learned,
        forgot: last.forgot,
        learned_rate: last.learned as f64 / n_i as f64,
        forgot_rate: last.forgot as f64 / n_m as f64,
        injection_size: n_i,
        mastered_size: n_m,
    };
    Ok((
        params,
        RunRecord {
            initial,
            per_epoch,
            final_counts,
            mastered_loss_trace: trace,
            steps,
            diagnostics_path: None,
        },
    ))
}
