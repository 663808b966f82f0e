//! Episodic tabular MDPs with stationary transitions.
//!
//! States and actions are dense indices `0..S` and `0..A`. Levels are
//! zero-based inside the crate: level `h` runs over `0..H`, and value tables
//! carry an extra terminal row `H` that is identically zero.
//!
//! Everything here is exact dynamic programming except [`sample_episode`],
//! which draws trajectories from a caller-owned random source.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result, SstpError};

/// Absolute tolerance on probability-vector sums.
pub const PROB_TOLERANCE: f64 = 1e-9;

/// Tolerance used when checking the bounded-total-reward assumption.
pub const REWARD_TOTAL_TOLERANCE: f64 = 1e-9;

/// Checks a probability vector and renormalizes it when the sum is off by at
/// most [`PROB_TOLERANCE`]. Anything further off is rejected.
pub(crate) fn normalize_probabilities(v: &mut [f64], context: impl FnOnce() -> String) -> Result<()> {
    let mut sum = 0.0;
    for &p in v.iter() {
        if !p.is_finite() || p < 0.0 {
            return Err(SstpError::Probability {
                context: context(),
                reason: format!("entry {p} is negative or not finite"),
            });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PROB_TOLERANCE {
        return Err(SstpError::Probability {
            context: context(),
            reason: format!("sums to {sum}"),
        });
    }
    if sum != 1.0 {
        v.iter_mut().for_each(|p| *p /= sum);
    }
    Ok(())
}

/// Draws an index from a probability vector by inverse-CDF lookup.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    // u landed in the rounding slack above the final cumulative sum.
    last_positive
}

/// An episodic MDP with a stationary transition kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpFile", into = "MdpFile")]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    /// Row-major `[s][a][s']`.
    transition: Vec<f64>,
    initial: Vec<f64>,
}

impl TabularMdp {
    /// Builds an MDP from nested `[s][a][s']` transition rows.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        transition: Vec<Vec<Vec<f64>>>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if transition.len() != num_states {
            return Err(dim_err(format!(
                "transition has {} state rows, expected {num_states}",
                transition.len()
            )));
        }
        let mut flat = Vec::with_capacity(num_states * num_actions * num_states);
        for (s, per_action) in transition.into_iter().enumerate() {
            if per_action.len() != num_actions {
                return Err(dim_err(format!(
                    "state {s} has {} action rows, expected {num_actions}",
                    per_action.len()
                )));
            }
            for (a, row) in per_action.into_iter().enumerate() {
                if row.len() != num_states {
                    return Err(dim_err(format!(
                        "row ({s},{a}) has length {}, expected {num_states}",
                        row.len()
                    )));
                }
                flat.extend(row);
            }
        }
        Self::from_flat(num_states, num_actions, horizon, flat, initial)
    }

    /// Builds an MDP from a flat row-major `[s][a][s']` table.
    pub fn from_flat(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        mut transition: Vec<f64>,
        mut initial: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(SstpError::Config(format!(
                "S, A, H must be positive (got S={num_states}, A={num_actions}, H={horizon})"
            )));
        }
        if transition.len() != num_states * num_actions * num_states {
            return Err(dim_err(format!(
                "flat transition has {} entries, expected {}",
                transition.len(),
                num_states * num_actions * num_states
            )));
        }
        if initial.len() != num_states {
            return Err(dim_err(format!(
                "initial distribution has {} entries, expected {num_states}",
                initial.len()
            )));
        }
        for (idx, row) in transition.chunks_mut(num_states).enumerate() {
            let (s, a) = (idx / num_actions, idx % num_actions);
            normalize_probabilities(row, || format!("transition row ({s},{a})"))?;
        }
        normalize_probabilities(&mut initial, || "initial distribution".to_string())?;
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            transition,
            initial,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial
    }

    /// `P(· | s, a)`.
    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.row(s, a)[next]
    }

    /// Same kernel and initial distribution, different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(SstpError::Config("horizon must be positive".into()));
        }
        Ok(Self {
            horizon,
            ..self.clone()
        })
    }

    /// Same kernel, different initial distribution.
    pub fn with_initial(&self, initial: Vec<f64>) -> Result<Self> {
        Self::from_flat(
            self.num_states,
            self.num_actions,
            self.horizon,
            self.transition.clone(),
            initial,
        )
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.initial, rng)
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        sample_index(self.row(s, a), rng)
    }

    pub(crate) fn check_policy(&self, policy: &Policy) -> Result<()> {
        if policy.horizon() != self.horizon || policy.num_states() != self.num_states {
            return Err(dim_err(format!(
                "policy is {}x{} (HxS), mdp is {}x{}",
                policy.horizon(),
                policy.num_states(),
                self.horizon,
                self.num_states
            )));
        }
        if policy.actions.iter().any(|&a| a >= self.num_actions) {
            return Err(dim_err(format!(
                "policy uses an action outside 0..{}",
                self.num_actions
            )));
        }
        Ok(())
    }

    pub(crate) fn check_reward(&self, reward: &RewardFunction) -> Result<()> {
        if reward.horizon() != self.horizon
            || reward.num_states() != self.num_states
            || reward.num_actions() != self.num_actions
        {
            return Err(dim_err(format!(
                "reward is {}x{}x{} (HxSxA), mdp is {}x{}x{}",
                reward.horizon(),
                reward.num_states(),
                reward.num_actions(),
                self.horizon,
                self.num_states,
                self.num_actions
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct MdpFile {
    #[serde(rename = "S")]
    s: usize,
    #[serde(rename = "A")]
    a: usize,
    #[serde(rename = "H")]
    h: usize,
    mu: Vec<f64>,
    #[serde(rename = "P")]
    p: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<MdpFile> for TabularMdp {
    type Error = SstpError;

    fn try_from(f: MdpFile) -> Result<Self> {
        TabularMdp::new(f.s, f.a, f.h, f.p, f.mu)
    }
}

impl From<TabularMdp> for MdpFile {
    fn from(m: TabularMdp) -> Self {
        let p = (0..m.num_states)
            .map(|s| (0..m.num_actions).map(|a| m.row(s, a).to_vec()).collect())
            .collect();
        MdpFile {
            s: m.num_states,
            a: m.num_actions,
            h: m.horizon,
            mu: m.initial,
            p,
        }
    }
}

/// Deterministic mean rewards `r_h(s, a)`, one table per level.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardFunction {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    /// Row-major `[h][s][a]`.
    rewards: Vec<f64>,
}

impl RewardFunction {
    pub fn from_flat(horizon: usize, num_states: usize, num_actions: usize, rewards: Vec<f64>) -> Result<Self> {
        if rewards.len() != horizon * num_states * num_actions {
            return Err(dim_err(format!(
                "reward table has {} entries, expected {}",
                rewards.len(),
                horizon * num_states * num_actions
            )));
        }
        if let Some(bad) = rewards.iter().find(|r| !r.is_finite() || **r < 0.0) {
            return Err(SstpError::Reward(format!("entry {bad} is negative or not finite")));
        }
        Ok(Self {
            horizon,
            num_states,
            num_actions,
            rewards,
        })
    }

    /// From a nested `[h][s][a]` table.
    pub fn new(table: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let horizon = table.len();
        let num_states = table.first().map_or(0, Vec::len);
        let num_actions = table.first().and_then(|l| l.first()).map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(horizon * num_states * num_actions);
        for level in table {
            if level.len() != num_states {
                return Err(dim_err("ragged reward table"));
            }
            for row in level {
                if row.len() != num_actions {
                    return Err(dim_err("ragged reward table"));
                }
                flat.extend(row);
            }
        }
        Self::from_flat(horizon, num_states, num_actions, flat)
    }

    /// The same `[s][a]` table at every level.
    pub fn broadcast(horizon: usize, table: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(vec![table; horizon])
    }

    pub fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            rewards: vec![0.0; horizon * num_states * num_actions],
        }
    }

    pub fn constant(horizon: usize, num_states: usize, num_actions: usize, value: f64) -> Result<Self> {
        Self::from_flat(
            horizon,
            num_states,
            num_actions,
            vec![value; horizon * num_states * num_actions],
        )
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.rewards[(h * self.num_states + s) * self.num_actions + a]
    }

    pub fn set(&mut self, h: usize, s: usize, a: usize, value: f64) -> Result<()> {
        if !value.is_finite() || value < 0.0 {
            return Err(SstpError::Reward(format!("entry {value} is negative or not finite")));
        }
        self.rewards[(h * self.num_states + s) * self.num_actions + a] = value;
        Ok(())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rewards
    }

    /// Multiplies every entry by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_flat(
            self.horizon,
            self.num_states,
            self.num_actions,
            self.rewards.iter().map(|r| r * factor).collect(),
        )
    }

    /// Pointwise `self ≥ other`.
    pub fn dominates(&self, other: &Self) -> bool {
        self.rewards.len() == other.rewards.len()
            && self.rewards.iter().zip(&other.rewards).all(|(a, b)| a >= b)
    }

    /// Errors unless every positive-probability trajectory of `mdp` collects
    /// total reward at most `1 + REWARD_TOTAL_TOLERANCE`.
    pub fn check_total_bound(&self, mdp: &TabularMdp) -> Result<()> {
        let total = max_total_reward(mdp, self)?;
        if total > 1.0 + REWARD_TOTAL_TOLERANCE {
            return Err(SstpError::Reward(format!(
                "maximum total reward {total} exceeds 1"
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let table: Vec<Vec<Vec<f64>>> = (0..self.horizon)
            .map(|h| {
                (0..self.num_states)
                    .map(|s| (0..self.num_actions).map(|a| self.get(h, s, a)).collect())
                    .collect()
            })
            .collect();
        serde_json::json!({ "r": table })
    }

    /// Parses `{"r": [H][S][A]}` or the level-broadcast form `{"r": [S][A]}`.
    pub fn from_json_str(text: &str, horizon: usize) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Table {
            PerLevel(Vec<Vec<Vec<f64>>>),
            Broadcast(Vec<Vec<f64>>),
        }
        #[derive(Deserialize)]
        struct RewardFile {
            r: Table,
        }
        let file: RewardFile = serde_json::from_str(text)?;
        let reward = match file.r {
            Table::PerLevel(t) => Self::new(t)?,
            Table::Broadcast(t) => Self::broadcast(horizon, t)?,
        };
        if reward.horizon != horizon {
            return Err(dim_err(format!(
                "reward has {} levels, expected {horizon}",
                reward.horizon
            )));
        }
        Ok(reward)
    }
}

/// A deterministic nonstationary policy `π_h(s)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Policy {
    horizon: usize,
    num_states: usize,
    /// Row-major `[h][s]`.
    actions: Vec<usize>,
}

impl Policy {
    pub fn from_flat(horizon: usize, num_states: usize, actions: Vec<usize>) -> Result<Self> {
        if actions.len() != horizon * num_states {
            return Err(dim_err(format!(
                "policy has {} entries, expected {}",
                actions.len(),
                horizon * num_states
            )));
        }
        Ok(Self {
            horizon,
            num_states,
            actions,
        })
    }

    pub fn new(table: Vec<Vec<usize>>) -> Result<Self> {
        let horizon = table.len();
        let num_states = table.first().map_or(0, Vec::len);
        if table.iter().any(|row| row.len() != num_states) {
            return Err(dim_err("ragged policy table"));
        }
        Self::from_flat(horizon, num_states, table.concat())
    }

    pub fn constant(horizon: usize, num_states: usize, action: usize) -> Self {
        Self {
            horizon,
            num_states,
            actions: vec![action; horizon * num_states],
        }
    }

    pub fn random<R: Rng + ?Sized>(horizon: usize, num_states: usize, num_actions: usize, rng: &mut R) -> Self {
        Self {
            horizon,
            num_states,
            actions: (0..horizon * num_states)
                .map(|_| rng.random_range(0..num_actions))
                .collect(),
        }
    }

    /// Greedy with respect to a Q table; ties go to the lowest action index.
    pub fn greedy(values: &ValueTables) -> Self {
        let actions = (0..values.horizon)
            .flat_map(|h| (0..values.num_states).map(move |s| (h, s)))
            .map(|(h, s)| argmax(values.q_row(h, s)))
            .collect();
        Self {
            horizon: values.horizon,
            num_states: values.num_states,
            actions,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[h * self.num_states + s]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.actions
    }

    /// Keeps only the first `num_states` states.
    pub fn restrict(&self, num_states: usize) -> Result<Self> {
        if num_states > self.num_states {
            return Err(dim_err("cannot restrict a policy to more states"));
        }
        let actions = (0..self.horizon)
            .flat_map(|h| (0..num_states).map(move |s| (h, s)))
            .map(|(h, s)| self.action(h, s))
            .collect();
        Ok(Self {
            horizon: self.horizon,
            num_states,
            actions,
        })
    }

    /// Appends states that always play action 0.
    pub fn extend(&self, extra_states: usize) -> Self {
        let num_states = self.num_states + extra_states;
        let actions = (0..self.horizon)
            .flat_map(|h| {
                (0..num_states).map(move |s| if s < self.num_states { self.action(h, s) } else { 0 })
            })
            .collect();
        Self {
            horizon: self.horizon,
            num_states,
            actions,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let table: Vec<&[usize]> = self.actions.chunks(self.num_states.max(1)).collect();
        serde_json::json!({ "H": self.horizon, "S": self.num_states, "actions": table })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct PolicyFile {
            #[serde(rename = "H")]
            h: usize,
            #[serde(rename = "S")]
            s: usize,
            actions: Vec<Vec<usize>>,
        }
        let file: PolicyFile = serde_json::from_str(text)?;
        let policy = Self::new(file.actions)?;
        if policy.horizon != file.h || policy.num_states != file.s {
            return Err(dim_err("policy header disagrees with its action table"));
        }
        Ok(policy)
    }
}

/// Lowest index among the maximal entries.
#[inline]
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub episode_index: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Checks that consecutive steps chain together.
    pub fn is_consistent(&self) -> bool {
        self.steps.windows(2).all(|w| w[0].next_state == w[1].state)
    }
}

/// Q and V tables for levels `0..H`, with `V_H ≡ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    /// `[h][s][a]`, `h < H`.
    q: Vec<f64>,
    /// `[h][s]`, `h ≤ H`.
    v: Vec<f64>,
}

impl ValueTables {
    pub(crate) fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            q: vec![0.0; horizon * num_states * num_actions],
            v: vec![0.0; (horizon + 1) * num_states],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[(h * self.num_states + s) * self.num_actions + a]
    }

    #[inline]
    pub fn q_row(&self, h: usize, s: usize) -> &[f64] {
        let start = (h * self.num_states + s) * self.num_actions;
        &self.q[start..start + self.num_actions]
    }

    #[inline]
    pub(crate) fn q_row_mut(&mut self, h: usize, s: usize) -> &mut [f64] {
        let start = (h * self.num_states + s) * self.num_actions;
        &mut self.q[start..start + self.num_actions]
    }

    #[inline]
    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.num_states + s]
    }

    #[inline]
    pub fn v_level(&self, h: usize) -> &[f64] {
        &self.v[h * self.num_states..(h + 1) * self.num_states]
    }

    #[inline]
    pub(crate) fn set_v(&mut self, h: usize, s: usize, value: f64) {
        self.v[h * self.num_states + s] = value;
    }

    pub fn q_values(&self) -> &[f64] {
        &self.q
    }

    /// `Σ_s μ(s) V_0(s)`.
    pub fn initial_value(&self, mu: &[f64]) -> f64 {
        dot(mu, self.v_level(0))
    }
}

#[inline]
pub(crate) fn dot(p: &[f64], v: &[f64]) -> f64 {
    p.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Mean and variance of `v` under distribution `p`.
#[inline]
pub(crate) fn mean_and_variance(p: &[f64], v: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut second = 0.0;
    for (&pi, &vi) in p.iter().zip(v) {
        mean += pi * vi;
        second += pi * vi * vi;
    }
    (mean, (second - mean * mean).max(0.0))
}

/// Values `V^π_h(s)` of a fixed policy, levels `0..=H`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValue {
    horizon: usize,
    num_states: usize,
    v: Vec<f64>,
}

impl PolicyValue {
    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.num_states + s]
    }

    pub fn level(&self, h: usize) -> &[f64] {
        &self.v[h * self.num_states..(h + 1) * self.num_states]
    }

    /// `V^π_1` over states.
    pub fn initial(&self) -> &[f64] {
        self.level(0)
    }

    pub fn expected(&self, mu: &[f64]) -> f64 {
        dot(mu, self.initial())
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

/// Optimal values and a greedy optimal policy by backward induction.
pub fn value_iteration(mdp: &TabularMdp, reward: &RewardFunction) -> Result<(ValueTables, Policy)> {
    mdp.check_reward(reward)?;
    let (s_count, a_count, horizon) = (mdp.num_states, mdp.num_actions, mdp.horizon);
    let mut tables = ValueTables::zeros(horizon, s_count, a_count);
    for h in (0..horizon).rev() {
        for s in 0..s_count {
            let mut best = f64::NEG_INFINITY;
            for a in 0..a_count {
                let q = reward.get(h, s, a) + dot(mdp.row(s, a), tables.v_level(h + 1));
                tables.q_row_mut(h, s)[a] = q;
                best = best.max(q);
            }
            tables.set_v(h, s, best);
        }
    }
    let policy = Policy::greedy(&tables);
    Ok((tables, policy))
}

/// Exact evaluation of a deterministic policy.
pub fn policy_evaluation(mdp: &TabularMdp, reward: &RewardFunction, policy: &Policy) -> Result<PolicyValue> {
    mdp.check_reward(reward)?;
    mdp.check_policy(policy)?;
    let s_count = mdp.num_states;
    let mut v = vec![0.0; (mdp.horizon + 1) * s_count];
    for h in (0..mdp.horizon).rev() {
        let (head, tail) = v.split_at_mut((h + 1) * s_count);
        let next = &tail[..s_count];
        for s in 0..s_count {
            let a = policy.action(h, s);
            head[h * s_count + s] = reward.get(h, s, a) + dot(mdp.row(s, a), next);
        }
    }
    Ok(PolicyValue {
        horizon: mdp.horizon,
        num_states: s_count,
        v,
    })
}

/// One episode under `policy`. Reproducible for a fixed random stream.
pub fn sample_episode<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &Policy,
    rng: &mut R,
    episode_index: u64,
) -> Trajectory {
    let mut state = mdp.sample_initial(rng);
    let steps = (0..mdp.horizon)
        .map(|h| {
            let action = policy.action(h, state);
            let next_state = mdp.sample_next(state, action, rng);
            let step = Step {
                state,
                action,
                next_state,
            };
            state = next_state;
            step
        })
        .collect();
    Trajectory {
        steps,
        episode_index,
    }
}

/// Largest total reward over trajectories with positive probability.
///
/// Backward DP that maximizes over actions and over successors reachable with
/// positive probability; the start state ranges over the support of `μ`.
pub fn max_total_reward(mdp: &TabularMdp, reward: &RewardFunction) -> Result<f64> {
    mdp.check_reward(reward)?;
    let s_count = mdp.num_states;
    let mut next = vec![0.0; s_count];
    let mut cur = vec![0.0; s_count];
    for h in (0..mdp.horizon).rev() {
        for (s, slot) in cur.iter_mut().enumerate() {
            *slot = (0..mdp.num_actions)
                .map(|a| {
                    let future = mdp
                        .row(s, a)
                        .iter()
                        .zip(&next)
                        .filter(|(p, _)| **p > 0.0)
                        .map(|(_, v)| *v)
                        .fold(f64::NEG_INFINITY, f64::max);
                    reward.get(h, s, a) + future
                })
                .fold(f64::NEG_INFINITY, f64::max);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(mdp
        .initial
        .iter()
        .zip(&next)
        .filter(|(p, _)| **p > 0.0)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Occupancy measure `w_h(s, a, π) = P_π[(s_h, a_h) = (s, a)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupancy {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    w: Vec<f64>,
}

impl Occupancy {
    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.w[(h * self.num_states + s) * self.num_actions + a]
    }

    pub fn level(&self, h: usize) -> &[f64] {
        let n = self.num_states * self.num_actions;
        &self.w[h * n..(h + 1) * n]
    }

    /// `Σ_h w_h(s, a)`: expected number of visits to `(s, a)`.
    pub fn expected_visits(&self, s: usize, a: usize) -> f64 {
        (0..self.horizon).map(|h| self.get(h, s, a)).sum()
    }

    /// Expected number of steps spent in state `s`.
    pub fn expected_state_visits(&self, s: usize) -> f64 {
        (0..self.num_actions).map(|a| self.expected_visits(s, a)).sum()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

/// Forward propagation of the state distribution under `policy`.
pub fn occupancy_measure(mdp: &TabularMdp, policy: &Policy) -> Result<Occupancy> {
    mdp.check_policy(policy)?;
    let (s_count, a_count) = (mdp.num_states, mdp.num_actions);
    let mut w = vec![0.0; mdp.horizon * s_count * a_count];
    let mut dist = mdp.initial.clone();
    for h in 0..mdp.horizon {
        let mut next = vec![0.0; s_count];
        for (s, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let a = policy.action(h, s);
            w[(h * s_count + s) * a_count + a] += mass;
            for (n, p) in next.iter_mut().zip(mdp.row(s, a)) {
                *n += mass * p;
            }
        }
        dist = next;
    }
    Ok(Occupancy {
        horizon: mdp.horizon,
        num_states: s_count,
        num_actions: a_count,
        w,
    })
}
