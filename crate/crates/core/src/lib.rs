//! Reward-free exploration for episodic tabular MDPs with horizon-free
//! sample complexity: exploration with truncated visitation targets, an
//! absorbing soft-truncation of the empirical model, and optimistic planning
//! for arbitrary rewards afterwards.

pub mod dataset;
pub mod error;
pub mod explore;
pub mod extended;
pub mod harness;
pub mod mdp;
pub mod plan;

pub use dataset::{Dataset, EmpiricalModel};
pub use error::{Result, SstpError};
pub use explore::{
    compute_stage_params, exploration_budget, staged_sampling, trvrl, ExplorationOutcome, ExploreConfig, NiVariant,
    StageParams, StageReport, TrvrlLearner,
};
pub use extended::{
    build_absorbing_mdp, build_counter_mdp, exceed_probability, extend_reward, num_stages, truncated_visit_value,
    z_level, AbsorbingMdp, CounterMdp, CounterSolution, PairSet, Partition, TransitionRows,
};
pub use mdp::{
    argmax, max_total_reward, occupancy_measure, policy_evaluation, sample_episode, value_iteration, Occupancy, Policy,
    PolicyValue, RewardFunction, Step, TabularMdp, Trajectory, ValueTables,
};
pub use plan::{plan_without_truncation, q_computing, truncated_planning, PlanConfig, ZeroCountRule};
