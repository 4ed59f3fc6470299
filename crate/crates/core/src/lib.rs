#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autotune;
pub mod blocked;
pub mod config;
pub mod energy;
pub mod error;
pub mod kernel;
pub mod matrix;
pub mod measurements;
pub mod pack;
pub mod parallel;
pub mod partition;
pub mod pool;
pub mod simulate;

pub use blocked::{default_params, gemm_blocked, gemm_blocked_with_stats, BlockingParams, GemmStats};
pub use config::{
    env_overrides, validate_config, ConfigWarning, CoreClass, CoreTopology, EnvOverrides, FineChunk,
    FineLoops, ParallelConfig, PerfRatio,
};
pub use error::{Error, LoopId, Result};
pub use kernel::{macro_kernel, micro_kernel, TileRange};
pub use matrix::{flop_count, gemm_reference, GemmProblem, Matrix};
pub use pack::{pack_a, pack_b, PackedBlockA, PackedBlockB};
pub use parallel::{gemm_parallel, AsymGemm, ParallelStats};
pub use partition::{partition_weighted, plan_coarse, plan_fine, PartitionPlan};
pub use pool::{AsymPool, WorkerInfo};
pub use energy::{
    assemble_metrics, efficiency, gflops, measure, measure_sampled, model_power, trace_average, Component,
    ComponentWatts, PowerModel, PowerSource, PowerTrace, RunMetrics, Sampler,
};
pub use simulate::{
    ideal_throughput, optimal_ratio, predict_makespan, predict_quantized, ClusterProfile, Prediction,
};
pub use autotune::{calibrate_ratio, tune_blocking, BlockingBench, Calibration, ClusterBench, TuneReport, TuneSpace};
