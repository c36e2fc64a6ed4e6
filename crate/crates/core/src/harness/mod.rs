//! Experiment harness: configuration, metrics, artifact writing, and the
//! partition and bound diagnostics behind the CLI subcommands.

mod config;
mod experiment;
mod metrics;
mod stats;

pub use config::{
    DatasetConfig, DistillSettings, DropWorst, ExperimentConfig, FederationConfig, OutputConfig, PartitionConfig,
    PoolConfig, PrototypeConfig, SplitConfig, StrategyConfig, StrategyKind, TargetConfig, OUTPUT_ROOT_ENV,
    SCHEMA_VERSION,
};
pub use experiment::{
    build_fl_config, build_pool, centralized_accuracy, prepare_seed, run_experiment, run_seed, run_strategy,
    write_seed_artifacts, ExperimentSummary, SeedData, SeedResult, SeedSummary, StrategyRun, StrategySummary,
};
pub use metrics::{
    accuracy_from_logits, decision_boundary_grid, read_jsonl, rounds_to_target, top1_accuracy, write_jsonl,
    BoundaryGrid, GridSpec, MetricsRow, PrototypeAccuracy,
};
pub use stats::{partition_stats, PartitionStats};
