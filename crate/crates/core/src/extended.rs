//! MDP transformations used by the sampler, the planner, and the condition
//! checkers.
//!
//! * [`CounterMdp`] augments each state with a visit counter `z` for a target
//!   set of pairs. Its transitions are computed on the fly from the base
//!   kernel, so nothing of size `S²(Z+1)` is ever materialized.
//! * [`AbsorbingMdp`] adds an absorbing zero-reward state `s_end` and leaks
//!   mass `1/Z_i` into it from every pair of partition cell `i`.
//! * [`Partition`] is the tiered cover of `S×A` that ties the two together.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::EmpiricalModel;
use crate::error::{dim_err, Result, SstpError};
use crate::mdp::{argmax, dot, RewardFunction, TabularMdp};

/// A set of state-action pairs over a fixed `S×A` grid.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PairSet {
    num_states: usize,
    num_actions: usize,
    members: Vec<bool>,
}

impl PairSet {
    pub fn empty(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            members: vec![false; num_states * num_actions],
        }
    }

    pub fn full(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            members: vec![true; num_states * num_actions],
        }
    }

    pub fn from_pairs(num_states: usize, num_actions: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = Self::empty(num_states, num_actions);
        for (s, a) in pairs {
            if s >= num_states || a >= num_actions {
                return Err(dim_err(format!("pair ({s},{a}) outside S={num_states} A={num_actions}")));
            }
            set.insert(s, a);
        }
        Ok(set)
    }

    /// Pairs whose predicate holds.
    pub fn from_fn(num_states: usize, num_actions: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let members = (0..num_states)
            .flat_map(|s| (0..num_actions).map(move |a| (s, a)))
            .map(|(s, a)| f(s, a))
            .collect();
        Self {
            num_states,
            num_actions,
            members,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn contains(&self, s: usize, a: usize) -> bool {
        self.members[s * self.num_actions + a]
    }

    pub fn insert(&mut self, s: usize, a: usize) {
        self.members[s * self.num_actions + a] = true;
    }

    pub fn remove(&mut self, s: usize, a: usize) {
        self.members[s * self.num_actions + a] = false;
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.members.iter().any(|&m| m)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let a_count = self.num_actions;
        self.members
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(move |(i, _)| (i / a_count, i % a_count))
    }

    pub fn is_subset(&self, other: &PairSet) -> bool {
        self.same_grid(other) && self.members.iter().zip(&other.members).all(|(a, b)| !a || *b)
    }

    pub fn is_disjoint(&self, other: &PairSet) -> bool {
        self.members.iter().zip(&other.members).all(|(a, b)| !(*a && *b))
    }

    /// `self \ other`.
    pub fn difference(&self, other: &PairSet) -> PairSet {
        let members = self.members.iter().zip(&other.members).map(|(a, b)| *a && !b).collect();
        PairSet { members, ..self.clone() }
    }

    pub fn union(&self, other: &PairSet) -> PairSet {
        let members = self.members.iter().zip(&other.members).map(|(a, b)| *a || *b).collect();
        PairSet { members, ..self.clone() }
    }

    fn same_grid(&self, other: &PairSet) -> bool {
        self.num_states == other.num_states && self.num_actions == other.num_actions
    }

    pub(crate) fn check_grid(&self, num_states: usize, num_actions: usize) -> Result<()> {
        if self.num_states != num_states || self.num_actions != num_actions {
            return Err(dim_err(format!(
                "pair set is over S={} A={}, expected S={num_states} A={num_actions}",
                self.num_states, self.num_actions
            )));
        }
        Ok(())
    }
}

impl fmt::Debug for PairSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// The base MDP with a visit counter for `target`, capped at `cap + 1`.
///
/// Counter levels are `z ∈ 1..=cap+1` and start at 1. Visiting a target pair
/// at level `z ≤ cap` moves to `z + 1`; level `cap + 1` is absorbing for the
/// counter. So `z - 1 = min(visits so far, cap)`.
#[derive(Debug, Clone)]
pub struct CounterMdp<'a> {
    base: &'a TabularMdp,
    target: &'a PairSet,
    cap: usize,
}

impl<'a> CounterMdp<'a> {
    pub fn new(base: &'a TabularMdp, target: &'a PairSet, cap: usize) -> Result<Self> {
        if cap < 1 {
            return Err(SstpError::Config("counter cap Z must be at least 1".into()));
        }
        target.check_grid(base.num_states(), base.num_actions())?;
        Ok(Self { base, target, cap })
    }

    pub fn base(&self) -> &TabularMdp {
        self.base
    }

    pub fn target(&self) -> &PairSet {
        self.target
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// Number of counter levels, `cap + 1`.
    pub fn num_levels(&self) -> usize {
        self.cap + 1
    }

    /// Counter level after playing `a` in `s` at level `z` (levels are 1-based).
    #[inline]
    pub fn next_level(&self, s: usize, a: usize, z: usize) -> usize {
        if self.target.contains(s, a) && z <= self.cap {
            z + 1
        } else {
            z
        }
    }

    /// `μ(s) · I[z = 1]`.
    pub fn initial(&self, s: usize, z: usize) -> f64 {
        if z == 1 {
            self.base.initial_dist()[s]
        } else {
            0.0
        }
    }

    /// Positive-probability successors `((s', z'), p)` of `(s, z, a)`.
    pub fn transitions(&self, s: usize, z: usize, a: usize) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        let next_z = self.next_level(s, a, z);
        self.base
            .row(s, a)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(move |(next, &p)| ((next, next_z), p))
    }

    /// Backward induction with reward `reward(h, s, z, a)`; `h` is zero-based
    /// and `z` one-based.
    pub fn solve(&self, reward: impl Fn(usize, usize, usize, usize) -> f64) -> CounterSolution {
        let (s_count, a_count, horizon) = (self.base.num_states(), self.base.num_actions(), self.base.horizon());
        let levels = self.num_levels();
        let mut sol = CounterSolution {
            num_states: s_count,
            num_levels: levels,
            horizon,
            v: vec![0.0; (horizon + 1) * s_count * levels],
            policy: vec![0; horizon * s_count * levels],
            initial_value: 0.0,
        };
        let mut scratch = vec![0.0; s_count];
        let mut q = vec![0.0; a_count];
        for h in (0..horizon).rev() {
            for s in 0..s_count {
                for z in 1..=levels {
                    for (a, qa) in q.iter_mut().enumerate() {
                        let nz = self.next_level(s, a, z);
                        for (next, slot) in scratch.iter_mut().enumerate() {
                            *slot = sol.v(h + 1, next, nz);
                        }
                        *qa = reward(h, s, z, a) + dot(self.base.row(s, a), &scratch);
                    }
                    let best = argmax(&q);
                    let idx = sol.index(h, s, z);
                    sol.v[idx] = q[best];
                    sol.policy[idx] = best;
                }
            }
        }
        sol.initial_value = (0..s_count).map(|s| self.initial(s, 1) * sol.v(0, s, 1)).sum();
        sol
    }

    /// `sup_π E[min{visits to target, cap}]` as a full solution.
    pub fn truncated_visit_solution(&self) -> CounterSolution {
        let cap = self.cap;
        self.solve(|_, s, z, a| if self.target.contains(s, a) && z <= cap { 1.0 } else { 0.0 })
    }

    /// Rewards only the step that moves the counter from `cap` to `cap + 1`,
    /// so the value is `sup_π P[visits ≥ cap]`.
    pub fn crossing_solution(&self) -> CounterSolution {
        let cap = self.cap;
        self.solve(|_, s, z, a| if self.target.contains(s, a) && z == cap { 1.0 } else { 0.0 })
    }
}

/// Optimal values and a greedy counter-dependent policy on a [`CounterMdp`].
#[derive(Debug, Clone)]
pub struct CounterSolution {
    num_states: usize,
    num_levels: usize,
    horizon: usize,
    v: Vec<f64>,
    policy: Vec<usize>,
    initial_value: f64,
}

impl CounterSolution {
    #[inline]
    fn index(&self, h: usize, s: usize, z: usize) -> usize {
        (h * self.num_states + s) * self.num_levels + (z - 1)
    }

    /// `V_h(s, z)`, zero-based `h`, one-based `z`.
    #[inline]
    pub fn v(&self, h: usize, s: usize, z: usize) -> f64 {
        self.v[self.index(h, s, z)]
    }

    pub fn action(&self, h: usize, s: usize, z: usize) -> usize {
        self.policy[self.index(h, s, z)]
    }

    /// `Σ_s μ(s) V_0(s, 1)`.
    pub fn initial_value(&self) -> f64 {
        self.initial_value
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_levels(&self) -> usize {
        self.num_levels
    }
}

pub fn build_counter_mdp<'a>(base: &'a TabularMdp, target: &'a PairSet, cap: usize) -> Result<CounterMdp<'a>> {
    CounterMdp::new(base, target, cap)
}

/// `sup_π E_π[min{Σ_h I[(s_h,a_h) ∈ target], cap}]`.
pub fn truncated_visit_value(base: &TabularMdp, target: &PairSet, cap: usize) -> Result<f64> {
    Ok(CounterMdp::new(base, target, cap)?.truncated_visit_solution().initial_value())
}

/// `sup_π P_π[Σ_h I[(s_h,a_h) ∈ target] > cap]`.
///
/// Solved on the counter MDP with cap `cap + 1`, rewarding the single step on
/// which the counter crosses into its absorbing level.
pub fn exceed_probability(base: &TabularMdp, target: &PairSet, cap: usize) -> Result<f64> {
    if cap < 1 {
        return Err(SstpError::Config("counter cap Z must be at least 1".into()));
    }
    Ok(CounterMdp::new(base, target, cap + 1)?.crossing_solution().initial_value())
}

/// `K = ⌊log₂(2H/ε)⌋`, computed without floating-point `log2`.
pub fn num_stages(horizon: usize, eps: f64) -> usize {
    let limit = 2.0 * horizon as f64;
    let mut k = 0;
    while 2f64.powi(k as i32 + 1) * eps <= limit {
        k += 1;
    }
    k
}

/// `Z_i = max{min{H/(2^i ε), H}, 1}` rounded down, for 1-based stage `i`.
pub fn z_level(stage: usize, horizon: usize, eps: f64) -> u64 {
    let h = horizon as f64;
    let raw = (h / (2f64.powi(stage as i32) * eps)).min(h).max(1.0);
    // Guard against quotients like 7.999999999 that should be 8.
    (raw * (1.0 + 1e-12)).floor() as u64
}

/// The tiers `X_1, …, X_{K+1}` with their truncation levels and thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    sets: Vec<PairSet>,
    z_levels: Vec<u64>,
    thresholds: Vec<u64>,
    eps: f64,
    /// Episodes per exploration stage, when known.
    pub t0: Option<u64>,
    /// Failure probability the thresholds were computed for, when known.
    pub delta: Option<f64>,
}

impl Partition {
    /// Validates `K+1` disjoint covering sets, `K+1` levels, and `K` thresholds.
    pub fn new(sets: Vec<PairSet>, z_levels: Vec<u64>, thresholds: Vec<u64>, eps: f64) -> Result<Self> {
        let first = sets
            .first()
            .ok_or_else(|| SstpError::Partition("a partition needs at least one set".into()))?;
        let (s_count, a_count) = (first.num_states(), first.num_actions());
        if z_levels.len() != sets.len() {
            return Err(SstpError::Partition(format!(
                "{} sets but {} truncation levels",
                sets.len(),
                z_levels.len()
            )));
        }
        if thresholds.len() + 1 != sets.len() {
            return Err(SstpError::Partition(format!(
                "{} sets but {} thresholds (expected one fewer)",
                sets.len(),
                thresholds.len()
            )));
        }
        if z_levels.iter().any(|&z| z < 1) {
            return Err(SstpError::Partition("truncation levels must be at least 1".into()));
        }
        let mut seen = vec![0usize; s_count * a_count];
        for set in &sets {
            if set.num_states() != s_count || set.num_actions() != a_count {
                return Err(SstpError::Partition("sets live on different grids".into()));
            }
            for (s, a) in set.iter() {
                seen[s * a_count + a] += 1;
            }
        }
        if let Some(i) = seen.iter().position(|&c| c > 1) {
            return Err(SstpError::Partition(format!(
                "pair ({},{}) appears in more than one set",
                i / a_count,
                i % a_count
            )));
        }
        if let Some(i) = seen.iter().position(|&c| c == 0) {
            return Err(SstpError::Partition(format!(
                "pair ({},{}) is not covered",
                i / a_count,
                i % a_count
            )));
        }
        Ok(Self {
            sets,
            z_levels,
            thresholds,
            eps,
            t0: None,
            delta: None,
        })
    }

    /// Everything in a single tier with truncation level `z`.
    pub fn single(num_states: usize, num_actions: usize, z: u64, eps: f64) -> Result<Self> {
        Self::new(vec![PairSet::full(num_states, num_actions)], vec![z], Vec::new(), eps)
    }

    pub fn num_states(&self) -> usize {
        self.sets[0].num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.sets[0].num_actions()
    }

    /// `K`, one less than the number of tiers.
    pub fn k(&self) -> usize {
        self.sets.len() - 1
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn sets(&self) -> &[PairSet] {
        &self.sets
    }

    pub fn z_levels(&self) -> &[u64] {
        &self.z_levels
    }

    pub fn thresholds(&self) -> &[u64] {
        &self.thresholds
    }

    /// Zero-based tier index containing `(s, a)`.
    pub fn tier_of(&self, s: usize, a: usize) -> usize {
        self.sets
            .iter()
            .position(|set| set.contains(s, a))
            .expect("partition covers every pair")
    }

    /// `1/Z_i` for every pair, as a flat `[s][a]` table.
    pub fn leak_weights(&self) -> Vec<f64> {
        let (s_count, a_count) = (self.num_states(), self.num_actions());
        let mut w = vec![0.0; s_count * a_count];
        for (set, &z) in self.sets.iter().zip(&self.z_levels) {
            for (s, a) in set.iter() {
                w[s * a_count + a] = 1.0 / z as f64;
            }
        }
        w
    }

    pub fn to_json(&self) -> serde_json::Value {
        let file = PartitionFile {
            k: self.k(),
            eps: self.eps,
            sets: self
                .sets
                .iter()
                .map(|set| set.iter().map(|(s, a)| [s, a]).collect())
                .collect(),
            z: self.z_levels.clone(),
            n: self.thresholds.clone(),
            s: Some(self.num_states()),
            a: Some(self.num_actions()),
            t0: self.t0,
            delta: self.delta,
        };
        serde_json::to_value(file).expect("partition serializes")
    }

    /// Parses the partition schema. `S` and `A` default to the extent of the
    /// listed pairs when absent.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: PartitionFile = serde_json::from_str(text)?;
        let max_pair = file.sets.iter().flatten().fold((0, 0), |(ms, ma), &[s, a]| (ms.max(s + 1), ma.max(a + 1)));
        let s_count = file.s.unwrap_or(max_pair.0);
        let a_count = file.a.unwrap_or(max_pair.1);
        if file.k + 1 != file.sets.len() {
            return Err(SstpError::Partition(format!(
                "K={} but {} sets listed",
                file.k,
                file.sets.len()
            )));
        }
        let sets = file
            .sets
            .into_iter()
            .map(|pairs| PairSet::from_pairs(s_count, a_count, pairs.into_iter().map(|[s, a]| (s, a))))
            .collect::<Result<Vec<_>>>()?;
        let mut p = Self::new(sets, file.z, file.n, file.eps)?;
        p.t0 = file.t0;
        p.delta = file.delta;
        Ok(p)
    }
}

#[derive(Serialize, Deserialize)]
struct PartitionFile {
    #[serde(rename = "K")]
    k: usize,
    eps: f64,
    sets: Vec<Vec<[usize; 2]>>,
    #[serde(rename = "Z")]
    z: Vec<u64>,
    #[serde(rename = "N")]
    n: Vec<u64>,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    s: Option<usize>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    a: Option<usize>,
    #[serde(rename = "T0", default, skip_serializing_if = "Option::is_none")]
    t0: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
}

/// Anything that provides transition rows over `S` states.
pub trait TransitionRows {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn row(&self, s: usize, a: usize) -> &[f64];
}

impl TransitionRows for TabularMdp {
    fn num_states(&self) -> usize {
        TabularMdp::num_states(self)
    }
    fn num_actions(&self) -> usize {
        TabularMdp::num_actions(self)
    }
    fn row(&self, s: usize, a: usize) -> &[f64] {
        TabularMdp::row(self, s, a)
    }
}

impl TransitionRows for EmpiricalModel {
    fn num_states(&self) -> usize {
        EmpiricalModel::num_states(self)
    }
    fn num_actions(&self) -> usize {
        EmpiricalModel::num_actions(self)
    }
    fn row(&self, s: usize, a: usize) -> &[f64] {
        EmpiricalModel::row(self, s, a)
    }
}

/// The soft-truncated MDP over `S + 1` states; state `S` is `s_end`.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbingMdp {
    mdp: TabularMdp,
    base_states: usize,
    leak: Vec<f64>,
}

impl AbsorbingMdp {
    /// Mixes row `(s, a)` with weight `leak[s·A + a]` toward `s_end`.
    pub fn with_leak(rows: &impl TransitionRows, leak: &[f64], horizon: usize, initial: &[f64]) -> Result<Self> {
        let (s_count, a_count) = (rows.num_states(), rows.num_actions());
        if leak.len() != s_count * a_count {
            return Err(dim_err("leak weights do not match S×A"));
        }
        if initial.len() != s_count {
            return Err(dim_err("initial distribution does not match S"));
        }
        if let Some(w) = leak.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(SstpError::Config(format!("leak weight {w} outside [0,1]")));
        }
        let n = s_count + 1;
        let mut flat = Vec::with_capacity(n * a_count * n);
        for s in 0..s_count {
            for a in 0..a_count {
                let w = leak[s * a_count + a];
                flat.extend(rows.row(s, a).iter().map(|p| (1.0 - w) * p));
                flat.push(w);
            }
        }
        for _ in 0..a_count {
            flat.extend(std::iter::repeat_n(0.0, s_count));
            flat.push(1.0);
        }
        let mut mu = initial.to_vec();
        mu.push(0.0);
        let mdp = TabularMdp::from_flat(n, a_count, horizon, flat, mu)?;
        Ok(Self {
            mdp,
            base_states: s_count,
            leak: leak.to_vec(),
        })
    }

    pub fn as_mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn into_mdp(self) -> TabularMdp {
        self.mdp
    }

    pub fn end_state(&self) -> usize {
        self.base_states
    }

    pub fn base_states(&self) -> usize {
        self.base_states
    }

    pub fn leak(&self, s: usize, a: usize) -> f64 {
        self.leak[s * self.mdp.num_actions() + a]
    }
}

/// `P†_{s,a} = (1 − 1/Z_i) P_{s,a} + (1/Z_i) 1_{s_end}` for `(s, a) ∈ X_i`.
pub fn build_absorbing_mdp(
    rows: &impl TransitionRows,
    partition: &Partition,
    horizon: usize,
    initial: &[f64],
) -> Result<AbsorbingMdp> {
    if partition.num_states() != rows.num_states() || partition.num_actions() != rows.num_actions() {
        return Err(SstpError::Partition(format!(
            "partition is over S={} A={}, model is S={} A={}",
            partition.num_states(),
            partition.num_actions(),
            rows.num_states(),
            rows.num_actions()
        )));
    }
    AbsorbingMdp::with_leak(rows, &partition.leak_weights(), horizon, initial)
}

/// Copies `reward` and appends a zero-reward `s_end`.
pub fn extend_reward(reward: &RewardFunction) -> RewardFunction {
    let (h_count, s_count, a_count) = (reward.horizon(), reward.num_states(), reward.num_actions());
    let mut flat = Vec::with_capacity(h_count * (s_count + 1) * a_count);
    for level in reward.as_slice().chunks(s_count * a_count) {
        flat.extend_from_slice(level);
        flat.extend(std::iter::repeat_n(0.0, a_count));
    }
    RewardFunction::from_flat(h_count, s_count + 1, a_count, flat).expect("extended reward keeps its shape")
}
