//! Planning from a fixed dataset: optimistic backward induction on the
//! soft-truncated empirical model.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{dim_err, Result, SstpError};
use crate::explore::{eps1, iota, iota1};
use crate::extended::{build_absorbing_mdp, extend_reward, AbsorbingMdp, Partition};
use crate::mdp::{mean_and_variance, Policy, RewardFunction, ValueTables};

/// How pairs with no observations enter the bonus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroCountRule {
    /// Divide by `max{N, 1}`.
    #[default]
    ClampToOne,
    /// Skip the backup and assign the ceiling directly.
    Optimistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub eps1: f64,
    pub iota1: f64,
    pub clip_ceiling: f64,
    pub zero_count_rule: ZeroCountRule,
}

impl PlanConfig {
    pub fn new(eps1: f64, iota1: f64) -> Result<Self> {
        let cfg = Self {
            eps1,
            iota1,
            clip_ceiling: 1.0,
            zero_count_rule: ZeroCountRule::ClampToOne,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `ε₁` and `ι₁` from the failure probability and the per-stage episode
    /// count `t0`.
    pub fn from_budget(delta: f64, num_states: usize, horizon: usize, t0: u64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(SstpError::Config(format!("delta must lie in (0,1), got {delta}")));
        }
        let io = iota(delta);
        let e1 = eps1(io, t0.max(1) as f64, horizon);
        Self::new(e1, iota1(io, num_states, e1))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps1 > 0.0 && self.eps1.is_finite()) {
            return Err(SstpError::Config(format!("eps1 must be positive, got {}", self.eps1)));
        }
        if !(self.iota1 > 0.0 && self.iota1.is_finite()) {
            return Err(SstpError::Config(format!("iota1 must be positive, got {}", self.iota1)));
        }
        if self.clip_ceiling.is_nan() || self.clip_ceiling <= 0.0 {
            return Err(SstpError::Config("clip ceiling must be positive".into()));
        }
        Ok(())
    }
}

/// `2·sqrt(var·ι₁/max{N,1}) + 14·ι₁/(3·max{N,1})`.
pub fn planning_bonus(var: f64, iota1: f64, n: u64) -> f64 {
    let n = n.max(1) as f64;
    2.0 * (var * iota1 / n).sqrt() + 14.0 * iota1 / (3.0 * n)
}

/// Optimistic backward induction on an absorbing model.
///
/// `counts` is the `S×A` table of observations behind the original states;
/// `reward` spans all `S + 1` states and must vanish on `s_end`.
pub fn q_computing(model: &AbsorbingMdp, counts: &[u64], reward: &RewardFunction, cfg: &PlanConfig) -> Result<ValueTables> {
    cfg.validate()?;
    let mdp = model.as_mdp();
    let (n_states, a_count, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let end = model.end_state();
    if counts.len() != end * a_count {
        return Err(dim_err(format!("counts cover {} pairs, expected {}", counts.len(), end * a_count)));
    }
    if reward.horizon() != horizon || reward.num_states() != n_states || reward.num_actions() != a_count {
        return Err(dim_err("reward does not match the absorbing model"));
    }
    for h in 0..horizon {
        for a in 0..a_count {
            if reward.get(h, end, a) != 0.0 {
                return Err(SstpError::Reward(format!("nonzero reward at the absorbing state (h={h}, a={a})")));
            }
        }
    }
    let mut tables = ValueTables::zeros(horizon, n_states, a_count);
    for h in (0..horizon).rev() {
        let next_v = tables.v_level(h + 1).to_vec();
        for s in 0..end {
            let mut best = f64::NEG_INFINITY;
            for a in 0..a_count {
                let n = counts[s * a_count + a];
                let q = if n == 0 && cfg.zero_count_rule == ZeroCountRule::Optimistic {
                    cfg.clip_ceiling + 3.0 * cfg.eps1
                } else {
                    let (mean, var) = mean_and_variance(mdp.row(s, a), &next_v);
                    let b = planning_bonus(var, cfg.iota1, n);
                    (reward.get(h, s, a) + mean + b).min(cfg.clip_ceiling) + 3.0 * cfg.eps1
                };
                tables.q_row_mut(h, s)[a] = q;
                best = best.max(q);
            }
            tables.set_v(h, s, best);
        }
    }
    Ok(tables)
}

fn check_inputs(dataset: &Dataset, reward: &RewardFunction) -> Result<()> {
    if reward.num_states() != dataset.num_states() || reward.num_actions() != dataset.num_actions() {
        return Err(dim_err(format!(
            "reward is over S={} A={}, dataset over S={} A={}",
            reward.num_states(),
            reward.num_actions(),
            dataset.num_states(),
            dataset.num_actions()
        )));
    }
    Ok(())
}

fn plan_on(model: &AbsorbingMdp, dataset: &Dataset, reward: &RewardFunction, cfg: &PlanConfig) -> Result<(ValueTables, Policy)> {
    let tables = q_computing(model, dataset.pair_counts(), &extend_reward(reward), cfg)?;
    let policy = Policy::greedy(&tables).restrict(dataset.num_states())?;
    Ok((tables, policy))
}

/// Q tables (over `S + 1` states) and greedy policy from the truncated model.
pub fn truncated_planning_tables(
    dataset: &Dataset,
    partition: &Partition,
    reward: &RewardFunction,
    cfg: &PlanConfig,
) -> Result<(ValueTables, Policy)> {
    check_inputs(dataset, reward)?;
    let s = dataset.num_states();
    let model = build_absorbing_mdp(&dataset.empirical_model(), partition, reward.horizon(), &vec![1.0 / s as f64; s])?;
    plan_on(&model, dataset, reward, cfg)
}

pub fn truncated_planning(dataset: &Dataset, partition: &Partition, reward: &RewardFunction, cfg: &PlanConfig) -> Result<Policy> {
    truncated_planning_tables(dataset, partition, reward, cfg).map(|(_, p)| p)
}

/// Same backup on the plain empirical model; `s_end` exists but is never reached.
pub fn plan_without_truncation_tables(dataset: &Dataset, reward: &RewardFunction, cfg: &PlanConfig) -> Result<(ValueTables, Policy)> {
    check_inputs(dataset, reward)?;
    let (s, a) = (dataset.num_states(), dataset.num_actions());
    let model = AbsorbingMdp::with_leak(&dataset.empirical_model(), &vec![0.0; s * a], reward.horizon(), &vec![1.0 / s as f64; s])?;
    plan_on(&model, dataset, reward, cfg)
}

pub fn plan_without_truncation(dataset: &Dataset, reward: &RewardFunction, cfg: &PlanConfig) -> Result<Policy> {
    plan_without_truncation_tables(dataset, reward, cfg).map(|(_, p)| p)
}
