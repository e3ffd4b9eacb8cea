//! Experiment harness: synthetic tasks, mastered/injection splits, training
//! arms and learning/forgetting bookkeeping.

mod experiment;
mod split;
mod task;
mod train;

pub use experiment::{
    analyze_at, prepare_seed, run_arm, train_config, AnalysisOutcome, ExperimentConfig, OptimizerConfig, Protocol,
    SeedSetup, CONFIG_VERSION,
};
pub use split::{
    forgetting_by_group, measure_learning_forgetting, out_of_set_split, split_by_mask, split_mastered_injection,
    GroupForgetting, GroupTally, SplitResult,
};
pub use task::{synth_dataset, synth_tagged, Generator, TaskSpec};
pub use train::{
    auto_lr, pretrain_reference, replay_set, train, EpochMetrics, FinalCounts, HoldoutIndices, MaskPolicy, Method,
    PretrainConfig, Pretrained, RunRecord, TrainConfig, TrainingSets,
};
