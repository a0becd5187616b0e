//! Experiment runner: configuration, training loop, evaluation in both
//! modes, attention export, checkpoints and multi-seed comparison.

mod checkpoint;
mod compare;
mod config;
mod metrics;
mod rollout;
mod run;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use compare::{compare, format_csv, format_table, summarize_run, GroupSummary, MeanStd, RunSummary, COMPARE_HEADER};
pub use config::{split_pair, AgentKind, OptimizerChoice, TrainConfig, KEYS};
pub use metrics::{read_metrics, MetricsRow, MetricsWriter, METRICS_HEADER};
pub use rollout::{collect_episode, evaluate, greedy_episode, EvalSummary, GreedyEpisode, Mode};
pub use run::{
    checkpoint_path, export_attention, resume_train, run_eval, run_name, run_root, run_train, Trainer,
    ATTENTION_HEADER, RUN_ROOT_ENV,
};
