//! Instance generators, condition checkers against the true MDP, and the
//! end-to-end experiment runner.

pub mod conditions;
pub mod experiment;
pub mod generators;

pub use conditions::{check_condition2, check_condition3, check_condition3_with, oracle_partition, CheckMode, ConditionReport, TierRecord};
pub use experiment::{
    replicate_seed, reward_seed, rows_to_csv, run_experiment, run_experiment_with, splitmix64, suboptimality_gap,
    write_experiment_csv, ExperimentConfig, ExperimentRow, MdpSpec, CSV_HEADER, THREADS_ENV,
};
pub use generators::{
    baseline_uniform_explore, generate_hard_instance, generate_random_mdp, generate_reward, saturated_dataset, RewardStyle,
};
