//! Config-driven experiment pipeline shared by the CLI and the tests.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::split::{forgetting_by_group, split_mastered_injection, GroupForgetting, SplitResult};
use super::task::{synth_tagged, Generator, TaskSpec};
use super::train::{
    auto_lr, pretrain_reference, train, HoldoutIndices, MaskPolicy, Method, PretrainConfig, RunRecord, TrainConfig,
    TrainingSets,
};
use crate::autodiff::loss_and_grad;
use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::gradsim::{
    neuron_distribution_report, per_param_similarity, per_sample_similarities, sim_dissim_groups, GradSimReport,
    SimGroupAssignment,
};
use crate::models::{evaluate_correctness, ModelArch};
use crate::optim::{Hyper, OptimizerKind};
use crate::params::ParamVector;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    #[default]
    InSet,
    OutOfSet,
    Merged,
}

/// Optimizer choice. `lr = None` picks the step size so that
/// `lr * max|g_I| = auto_lr_max_step` at the start of injection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: Option<f64>,
    pub auto_lr_max_step: f64,
    pub beta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let h = Hyper::default();
        Self {
            kind: OptimizerKind::Sgd,
            lr: None,
            auto_lr_max_step: 1e-4,
            beta: h.beta,
            beta1: h.beta1,
            beta2: h.beta2,
            eps: h.eps,
            weight_decay: h.weight_decay,
        }
    }
}

impl OptimizerConfig {
    pub fn with_kind(kind: OptimizerKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn hyper(&self, lr: f64) -> Hyper {
        Hyper {
            lr,
            beta: self.beta,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

fn default_version() -> u32 {
    CONFIG_VERSION
}
fn default_methods() -> Vec<Method> {
    vec![Method::Ft, Method::Cnl]
}
fn default_epochs() -> usize {
    25
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}
fn default_holdout() -> f64 {
    0.5
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    pub task: TaskSpec,
    pub arch: ModelArch,
    #[serde(default)]
    pub pretrain: PretrainConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default)]
    pub mask_policy: MaskPolicy,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Train fraction of both sets under the out-of-set protocol.
    #[serde(default = "default_holdout")]
    pub holdout_ratio: f64,
}

impl ExperimentConfig {
    /// Default experiment around `task` and `arch`.
    pub fn new(task: TaskSpec, arch: ModelArch) -> Self {
        Self {
            version: CONFIG_VERSION,
            task,
            arch,
            pretrain: PretrainConfig::default(),
            optimizer: OptimizerConfig::default(),
            methods: default_methods(),
            protocol: Protocol::default(),
            mask_policy: MaskPolicy::default(),
            epochs: default_epochs(),
            batch_size: None,
            seeds: default_seeds(),
            output_dir: default_output_dir(),
            holdout_ratio: default_holdout(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.task.validate()?;
        self.arch.validate()?;
        if self.arch.input_dim != self.task.input_dim || self.arch.classes != self.task.classes {
            return Err(Error::config("arch input_dim/classes must match the task"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must not be empty"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods must not be empty"));
        }
        if self.batch_size == Some(0) || self.pretrain.batch_size == Some(0) {
            return Err(Error::config("batch_size must be positive"));
        }
        let merged = self.task.generator == Generator::Merged;
        if (self.protocol == Protocol::Merged) != merged {
            return Err(Error::config("the merged protocol goes with (and only with) a merged task"));
        }
        if !(self.holdout_ratio > 0.0 && self.holdout_ratio < 1.0) {
            return Err(Error::config("holdout_ratio must lie in (0, 1)"));
        }
        if !(self.optimizer.auto_lr_max_step > 0.0) {
            return Err(Error::config("auto_lr_max_step must be positive"));
        }
        self.optimizer.hyper(self.optimizer.lr.unwrap_or(0.0)).validate()?;
        Hyper {
            lr: self.pretrain.lr,
            ..Hyper::default()
        }
        .validate()
    }
}

/// Everything shared by the arms of one seed.
#[derive(Debug, Clone)]
pub struct SeedSetup {
    pub seed: u64,
    pub dataset: SampleSet,
    /// Sub-task of every dataset row.
    pub task_ids: Vec<usize>,
    pub reference: ParamVector,
    pub pretrain_trace: Vec<f64>,
    pub split: SplitResult,
    pub sets: TrainingSets,
    pub holdout: Option<HoldoutIndices>,
    /// Step size used by every arm.
    pub lr: f64,
}

/// Synthesizes the seed's dataset, pretrains the reference model, splits by
/// correctness and resolves the learning rate.
pub fn prepare_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedSetup> {
    config.validate()?;
    let (dataset, task_ids) = synth_tagged(&config.task.reseeded(seed))?;
    let pre = pretrain_reference(&dataset, &config.arch, &config.pretrain, seed)?;
    let split = split_mastered_injection(&pre.params, &dataset, &config.arch)?;
    let (sets, holdout) = match config.protocol {
        Protocol::InSet | Protocol::Merged => (TrainingSets::in_set(&split), None),
        Protocol::OutOfSet => {
            let (sets, idx) = TrainingSets::out_of_set(&split, config.holdout_ratio, seed)?;
            (sets, Some(idx))
        }
    };
    let lr = match config.optimizer.lr {
        Some(lr) => lr,
        None => {
            let (_, g) = loss_and_grad(&pre.params, &sets.injection_train, &config.arch)?;
            auto_lr(g.as_slice(), config.optimizer.auto_lr_max_step)
        }
    };
    Ok(SeedSetup {
        seed,
        dataset,
        task_ids,
        reference: pre.params,
        pretrain_trace: pre.loss_trace,
        split,
        sets,
        holdout,
        lr,
    })
}

pub fn train_config(config: &ExperimentConfig, setup: &SeedSetup, method: Method) -> TrainConfig {
    TrainConfig {
        method,
        optimizer: config.optimizer.kind,
        hyper: config.optimizer.hyper(setup.lr),
        epochs: config.epochs,
        mask_policy: config.mask_policy,
        batch_size: config.batch_size,
        seed: setup.seed,
    }
}

/// Trains one arm from the seed's reference model.
pub fn run_arm(config: &ExperimentConfig, setup: &SeedSetup, method: Method) -> Result<(ParamVector, RunRecord)> {
    train(&train_config(config, setup, method), &config.arch, &setup.reference, &setup.sets)
}

/// Gradient-similarity analysis at `params` plus a plain fine-tuning run from
/// there to tally forgetting per similarity group.
#[derive(Debug, Clone)]
pub struct AnalysisOutcome {
    pub report: GradSimReport,
    pub per_sample: Vec<f64>,
    /// `None` when fewer than three mastered samples have negative similarity.
    pub groups: Option<SimGroupAssignment>,
    pub group_forgetting: Option<GroupForgetting>,
    pub ft_record: RunRecord,
}

pub fn analyze_at(config: &ExperimentConfig, setup: &SeedSetup, params: &ParamVector) -> Result<AnalysisOutcome> {
    let arch = &config.arch;
    let mastered = &setup.sets.mastered_train;
    let (_, g_m) = loss_and_grad(params, mastered, arch)?;
    let (_, g_i) = loss_and_grad(params, &setup.sets.injection_train, arch)?;
    let report = neuron_distribution_report(&per_param_similarity(g_m.as_slice(), g_i.as_slice())?)?;
    let per_sample = per_sample_similarities(params, mastered, g_i.as_slice(), arch)?;
    let groups = match sim_dissim_groups(&per_sample) {
        Ok(g) => Some(g),
        Err(Error::TooFewNegatives { .. }) => None,
        Err(e) => return Err(e),
    };

    let ft = train_config(config, setup, Method::Ft);
    let (after, ft_record) = train(&ft, arch, params, &setup.sets)?;
    let before = evaluate_correctness(params, mastered, arch)?;
    let now = evaluate_correctness(&after, mastered, arch)?;
    let forgot: Vec<bool> = before.flags.iter().zip(&now.flags).map(|(&b, &a)| b && !a).collect();
    let group_forgetting = groups.as_ref().map(|g| forgetting_by_group(g, &forgot)).transpose()?;
    Ok(AnalysisOutcome {
        report,
        per_sample,
        groups,
        group_forgetting,
        ft_record,
    })
}
