//! Reward-free exploration: the truncated visitation learner run stage by
//! stage, producing a dataset and a tiered partition of `S×A`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Result, SstpError};
use crate::extended::{num_stages, z_level, PairSet, Partition};
use crate::mdp::{argmax, mean_and_variance, Step, TabularMdp, Trajectory};

/// Which visit-threshold formula to use for `N_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NiVariant {
    /// `4SHι / (2^i ε²)`.
    Cond2,
    /// `4H(ι + 6S ln(SAH/ε)) / (2^i ε²)`.
    #[default]
    Cond3,
    /// `4SιH / (2^i ε²)`.
    Alg3,
}

impl FromStr for NiVariant {
    type Err = SstpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cond2" => Ok(Self::Cond2),
            "cond3" => Ok(Self::Cond3),
            "alg3" => Ok(Self::Alg3),
            other => Err(SstpError::Config(format!("unknown N_i variant {other:?}"))),
        }
    }
}

impl fmt::Display for NiVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cond2 => "cond2",
            Self::Cond3 => "cond3",
            Self::Alg3 => "alg3",
        })
    }
}

/// Knobs shared by every stage of an exploration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploreConfig {
    pub eps: f64,
    pub delta: f64,
    pub c1: f64,
    /// Multiplies both `N_i` and `T_0`.
    pub scale: f64,
    pub ni_variant: NiVariant,
    /// A pair becomes known once its stage count reaches `known_multiplier · N_i`.
    pub known_multiplier: u64,
}

impl ExploreConfig {
    pub fn new(eps: f64, delta: f64) -> Self {
        Self {
            eps,
            delta,
            c1: 16.0,
            scale: 1.0,
            ni_variant: NiVariant::Cond3,
            known_multiplier: 1,
        }
    }

    pub fn with_c1(mut self, c1: f64) -> Self {
        self.c1 = c1;
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(SstpError::Config(format!("eps must lie in (0,1), got {}", self.eps)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(SstpError::Config(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if !(self.c1 > 0.0 && self.c1.is_finite()) {
            return Err(SstpError::Config(format!("C1 must be positive, got {}", self.c1)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(SstpError::Config(format!("scale must be positive, got {}", self.scale)));
        }
        if self.known_multiplier == 0 {
            return Err(SstpError::Config("known multiplier must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything one exploration stage needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageParams {
    /// One-based stage index `i`.
    pub stage: usize,
    pub num_stages: usize,
    pub horizon: usize,
    /// Scaled visit threshold.
    pub n_i: u64,
    pub z_i: u64,
    /// Scaled episodes per stage.
    pub t0: u64,
    /// `T_0` before scaling, as a real number.
    pub t0_unscaled: f64,
    pub eps1: f64,
    pub iota: f64,
    pub iota1: f64,
    pub scale: f64,
    pub known_multiplier: u64,
}

impl StageParams {
    /// Whether a stage count of `count` refreshes the empirical row: counts
    /// `2^{j-1}` with `2^j ≤ T_0 H`.
    pub fn is_trigger(&self, count: u64) -> bool {
        count.is_power_of_two() && count.saturating_mul(2) <= self.t0.saturating_mul(self.horizon as u64)
    }

    /// The full trigger set in increasing order.
    pub fn trigger_set(&self) -> Vec<u64> {
        let limit = self.t0.saturating_mul(self.horizon as u64);
        let mut out = Vec::new();
        let mut c: u64 = 1;
        while c.saturating_mul(2) <= limit {
            out.push(c);
            if c > u64::MAX / 2 {
                break;
            }
            c *= 2;
        }
        out
    }

    /// Stage count at which a pair stops being unknown.
    pub fn known_threshold(&self) -> u64 {
        self.n_i.saturating_mul(self.known_multiplier)
    }
}

fn ceil_at_least_one(x: f64) -> u64 {
    if x <= 1.0 {
        1
    } else if x >= u64::MAX as f64 {
        u64::MAX
    } else {
        x.ceil() as u64
    }
}

/// `ι = ln(2/δ)`.
pub fn iota(delta: f64) -> f64 {
    (2.0 / delta).ln()
}

/// `ε₁ = min{ι/(T₀H), ι²/(T₀²H³)}`.
pub fn eps1(iota: f64, t0: f64, horizon: usize) -> f64 {
    let h = horizon as f64;
    (iota / (t0 * h)).min(iota * iota / (t0 * t0 * h * h * h))
}

/// `ι₁ = ι + S ln(1/ε₁)`.
pub fn iota1(iota: f64, num_states: usize, eps1: f64) -> f64 {
    iota + num_states as f64 * (1.0 / eps1).ln()
}

/// Unscaled `N_i` for the chosen variant.
pub fn raw_threshold(variant: NiVariant, stage: usize, s: usize, a: usize, h: usize, eps: f64, delta: f64) -> f64 {
    let (sf, af, hf) = (s as f64, a as f64, h as f64);
    let io = iota(delta);
    let denom = 2f64.powi(stage as i32) * eps * eps;
    match variant {
        NiVariant::Cond2 | NiVariant::Alg3 => 4.0 * sf * hf * io / denom,
        NiVariant::Cond3 => 4.0 * hf * (io + 6.0 * sf * (sf * af * hf / eps).ln()) / denom,
    }
}

/// Unscaled `T_0 = C1·S·A·(ι + 6S ln(SAH/ε))·⌈log₂ H⌉/ε²`.
pub fn raw_episodes_per_stage(s: usize, a: usize, h: usize, cfg: &ExploreConfig) -> f64 {
    let (sf, af, hf) = (s as f64, a as f64, h as f64);
    let log_h = if h <= 1 { 0 } else { (usize::BITS - (h - 1).leading_zeros()) as usize };
    cfg.c1 * sf * af * (iota(cfg.delta) + 6.0 * sf * (sf * af * hf / cfg.eps).ln()) * log_h as f64
        / (cfg.eps * cfg.eps)
}

pub fn compute_stage_params(stage: usize, s: usize, a: usize, h: usize, cfg: &ExploreConfig) -> Result<StageParams> {
    cfg.validate()?;
    if s == 0 || a == 0 || h == 0 {
        return Err(SstpError::Config("S, A and H must be positive".into()));
    }
    let k = num_stages(h, cfg.eps);
    if stage < 1 || stage > k {
        return Err(SstpError::Config(format!("stage {stage} outside 1..={k}")));
    }
    let io = iota(cfg.delta);
    let t0_unscaled = raw_episodes_per_stage(s, a, h, cfg);
    let e1 = eps1(io, t0_unscaled.max(1.0), h);
    Ok(StageParams {
        stage,
        num_stages: k,
        horizon: h,
        n_i: ceil_at_least_one(cfg.scale * raw_threshold(cfg.ni_variant, stage, s, a, h, cfg.eps, cfg.delta)),
        z_i: z_level(stage, h, cfg.eps),
        t0: ceil_at_least_one(cfg.scale * t0_unscaled),
        t0_unscaled,
        eps1: e1,
        iota: io,
        iota1: iota1(io, s, e1),
        scale: cfg.scale,
        known_multiplier: cfg.known_multiplier,
    })
}

/// Total exploration episodes `K · T_0`.
pub fn exploration_budget(s: usize, a: usize, h: usize, cfg: &ExploreConfig) -> Result<u64> {
    let p = compute_stage_params(1, s, a, h, cfg)?;
    Ok(p.t0.saturating_mul(p.num_stages as u64))
}

/// Bonus used by the learner:
/// `sqrt(4·var·ι₁/max{n,1}) + 14·Z·ι₁/(3·max{n,1}) + 3ε₁`.
pub fn exploration_bonus(var: f64, n: u64, z: f64, iota1: f64, eps1: f64) -> f64 {
    let n = n.max(1) as f64;
    (4.0 * var * iota1 / n).sqrt() + 14.0 * z * iota1 / (3.0 * n) + 3.0 * eps1
}

/// What happened during one learner episode.
#[derive(Debug, Clone)]
pub struct EpisodeSummary {
    pub trajectory: Trajectory,
    /// `Σ_h r^k(s_h, z_h, a_h)` collected under the unknown set of this episode.
    pub internal_reward: f64,
    pub triggered: bool,
    pub unknown_changed: bool,
}

/// Optimistic learner for one stage, maximizing truncated visits to the
/// unknown set.
#[derive(Debug, Clone)]
pub struct TrvrlLearner {
    params: StageParams,
    num_states: usize,
    num_actions: usize,
    levels: usize,
    unknown: PairSet,
    data: Dataset,
    snapshot_counts: Vec<u64>,
    p_hat: Vec<f64>,
    q: Vec<f64>,
    v: Vec<f64>,
    episodes_done: u64,
}

impl TrvrlLearner {
    pub fn new(params: StageParams, num_states: usize, num_actions: usize, unknown_in: PairSet) -> Result<Self> {
        unknown_in.check_grid(num_states, num_actions)?;
        if params.z_i < 1 {
            return Err(SstpError::Config("Z_i must be at least 1".into()));
        }
        let h = params.horizon;
        let levels = params.z_i as usize + 1;
        let z = params.z_i as f64;
        let mut v = vec![z; (h + 1) * num_states * levels];
        v[h * num_states * levels..].fill(0.0);
        Ok(Self {
            num_states,
            num_actions,
            levels,
            unknown: unknown_in,
            data: Dataset::new(num_states, num_actions),
            snapshot_counts: vec![0; num_states * num_actions],
            p_hat: vec![0.0; num_states * num_actions * num_states],
            q: vec![z; h * num_states * levels * num_actions],
            v,
            episodes_done: 0,
            params,
        })
    }

    pub fn params(&self) -> &StageParams {
        &self.params
    }

    pub fn unknown(&self) -> &PairSet {
        &self.unknown
    }

    pub fn episodes_done(&self) -> u64 {
        self.episodes_done
    }

    pub fn stage_data(&self) -> &Dataset {
        &self.data
    }

    /// Snapshot count `n(s,a)` behind the current empirical row.
    pub fn snapshot_count(&self, s: usize, a: usize) -> u64 {
        self.snapshot_counts[s * self.num_actions + a]
    }

    #[inline]
    fn qi(&self, h: usize, s: usize, z: usize) -> usize {
        ((h * self.num_states + s) * self.levels + (z - 1)) * self.num_actions
    }

    #[inline]
    fn vi(&self, h: usize, s: usize, z: usize) -> usize {
        (h * self.num_states + s) * self.levels + (z - 1)
    }

    /// `Q_h(s, z, ·)`; zero-based `h`, one-based `z`.
    pub fn q_row(&self, h: usize, s: usize, z: usize) -> &[f64] {
        let i = self.qi(h, s, z);
        &self.q[i..i + self.num_actions]
    }

    pub fn v(&self, h: usize, s: usize, z: usize) -> f64 {
        self.v[self.vi(h, s, z)]
    }

    /// Counter level after `(s, a)` at level `z` under the current unknown set.
    fn next_level(&self, s: usize, a: usize, z: usize) -> usize {
        if self.unknown.contains(s, a) && z as u64 <= self.params.z_i {
            z + 1
        } else {
            z
        }
    }

    /// Plays one episode against `env`, then updates the unknown set and,
    /// if anything changed, recomputes `Q`.
    pub fn run_episode<R: Rng + ?Sized>(&mut self, env: &TabularMdp, rng: &mut R) -> Result<EpisodeSummary> {
        if env.num_states() != self.num_states || env.num_actions() != self.num_actions || env.horizon() != self.params.horizon {
            return Err(SstpError::Dimension("environment does not match the learner".into()));
        }
        let mut state = env.sample_initial(rng);
        let mut z = 1;
        let mut steps = Vec::with_capacity(self.params.horizon);
        let mut triggered = false;
        let mut internal_reward = 0.0;
        for h in 0..self.params.horizon {
            let action = argmax(self.q_row(h, state, z));
            let next = env.sample_next(state, action, rng);
            if self.unknown.contains(state, action) && z as u64 <= self.params.z_i {
                internal_reward += 1.0;
            }
            self.data.add_transition(state, action, next, 1)?;
            let count = self.data.pair_count(state, action);
            if self.params.is_trigger(count) {
                self.refresh_row(state, action);
                triggered = true;
            }
            z = self.next_level(state, action, z);
            steps.push(Step {
                state,
                action,
                next_state: next,
            });
            state = next;
        }
        let trajectory = Trajectory {
            steps,
            episode_index: self.episodes_done,
        };
        self.data.record_episode_count();
        self.episodes_done += 1;

        let threshold = self.params.known_threshold();
        let before = self.unknown.len();
        let data = &self.data;
        self.unknown = PairSet::from_fn(self.num_states, self.num_actions, |s, a| {
            self.unknown.contains(s, a) && data.pair_count(s, a) < threshold
        });
        let unknown_changed = self.unknown.len() != before;
        if triggered || unknown_changed {
            self.recompute();
        }
        Ok(EpisodeSummary {
            trajectory,
            internal_reward,
            triggered,
            unknown_changed,
        })
    }

    fn refresh_row(&mut self, s: usize, a: usize) {
        let pair = s * self.num_actions + a;
        let n = self.data.pair_count(s, a);
        self.snapshot_counts[pair] = n;
        for next in 0..self.num_states {
            self.p_hat[pair * self.num_states + next] = self.data.count(s, a, next) as f64 / n as f64;
        }
    }

    /// Full backward induction over `(h, s, z, a)`.
    fn recompute(&mut self) {
        let (s_count, a_count) = (self.num_states, self.num_actions);
        let cap = self.params.z_i as f64;
        let mut x = vec![0.0; s_count];
        for h in (0..self.params.horizon).rev() {
            for s in 0..s_count {
                for z in 1..=self.levels {
                    let mut best = f64::NEG_INFINITY;
                    for a in 0..a_count {
                        let nz = self.next_level(s, a, z);
                        for (next, slot) in x.iter_mut().enumerate() {
                            *slot = self.v[self.vi(h + 1, next, nz)];
                        }
                        let pair = s * a_count + a;
                        let row = &self.p_hat[pair * s_count..(pair + 1) * s_count];
                        let (mean, var) = mean_and_variance(row, &x);
                        let reward = if self.unknown.contains(s, a) && z as u64 <= self.params.z_i {
                            1.0
                        } else {
                            0.0
                        };
                        let bonus =
                            exploration_bonus(var, self.snapshot_counts[pair], cap, self.params.iota1, self.params.eps1);
                        let q = (reward + mean + bonus).min(cap);
                        let qi = self.qi(h, s, z) + a;
                        self.q[qi] = q;
                        best = best.max(q);
                    }
                    let vi = self.vi(h, s, z);
                    self.v[vi] = best;
                }
            }
        }
    }

    /// The stage dataset and the final unknown set.
    pub fn finish(self) -> (Dataset, PairSet) {
        (self.data, self.unknown)
    }
}

/// Runs `T_0` learner episodes and returns the stage dataset and `Y_out`.
pub fn trvrl<R: Rng + ?Sized>(env: &TabularMdp, params: &StageParams, unknown_in: PairSet, rng: &mut R) -> Result<(Dataset, PairSet)> {
    let mut learner = TrvrlLearner::new(params.clone(), env.num_states(), env.num_actions(), unknown_in)?;
    for _ in 0..params.t0 {
        learner.run_episode(env, rng)?;
    }
    Ok(learner.finish())
}

/// Per-stage progress record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    pub t0: u64,
    pub n_i: u64,
    pub z_i: u64,
    pub unknown_out: usize,
}

impl fmt::Display for StageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "stage i={} T0={} Ni={} Zi={} |Y_out|={}",
            self.stage, self.t0, self.n_i, self.z_i, self.unknown_out
        )
    }
}

/// Result of a full exploration run.
#[derive(Debug, Clone)]
pub struct ExplorationOutcome {
    pub dataset: Dataset,
    pub partition: Partition,
    pub stages: Vec<StageReport>,
    /// Parameters of each stage, in order.
    pub params: Vec<StageParams>,
}

impl ExplorationOutcome {
    pub fn episodes(&self) -> u64 {
        self.dataset.num_episodes()
    }
}

/// Runs every stage `i = 1..=K`, shrinking the unknown set, and assembles
/// `X_i = Y_i \ Y_{i+1}` with `X_{K+1} = Y_{K+1}`.
pub fn staged_sampling<R: Rng + ?Sized>(
    env: &TabularMdp,
    cfg: &ExploreConfig,
    rng: &mut R,
    mut progress: impl FnMut(&StageReport),
) -> Result<ExplorationOutcome> {
    let (s, a, h) = (env.num_states(), env.num_actions(), env.horizon());
    let k = {
        cfg.validate()?;
        num_stages(h, cfg.eps)
    };
    let mut dataset = Dataset::new(s, a);
    let mut unknown = PairSet::full(s, a);
    let mut sets = Vec::with_capacity(k + 1);
    let mut z_levels = Vec::with_capacity(k + 1);
    let mut thresholds = Vec::with_capacity(k);
    let mut stages = Vec::with_capacity(k);
    let mut all_params = Vec::with_capacity(k);
    for stage in 1..=k {
        let params = compute_stage_params(stage, s, a, h, cfg)?;
        let (stage_data, unknown_out) = trvrl(env, &params, unknown.clone(), rng)?;
        dataset.merge_from(&stage_data)?;
        sets.push(unknown.difference(&unknown_out));
        z_levels.push(params.z_i);
        thresholds.push(params.n_i);
        let report = StageReport {
            stage,
            t0: params.t0,
            n_i: params.n_i,
            z_i: params.z_i,
            unknown_out: unknown_out.len(),
        };
        progress(&report);
        stages.push(report);
        all_params.push(params);
        unknown = unknown_out;
    }
    sets.push(unknown);
    z_levels.push(z_level(k + 1, h, cfg.eps));
    let mut partition = Partition::new(sets, z_levels, thresholds, cfg.eps)?;
    partition.t0 = all_params.first().map(|p| p.t0);
    partition.delta = Some(cfg.delta);
    Ok(ExplorationOutcome {
        dataset,
        partition,
        stages,
        params: all_params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(n_i: u64, z_i: u64, t0: u64, horizon: usize) -> StageParams {
        StageParams {
            stage: 1,
            num_stages: 1,
            horizon,
            n_i,
            z_i,
            t0,
            t0_unscaled: t0 as f64,
            eps1: 1e-6,
            iota: 3.0,
            iota1: 3.0,
            scale: 1.0,
            known_multiplier: 1,
        }
    }

    #[test]
    fn formula_examples() {
        assert_eq!(num_stages(8, 0.5), 5);
        let cfg = ExploreConfig::new(0.25, 0.1);
        let p = compute_stage_params(3, 2, 2, 16, &cfg).unwrap();
        assert_eq!(p.z_i, 8);
        assert_eq!(compute_stage_params(1, 2, 2, 16, &cfg).unwrap().z_i, 16);
    }

    #[test]
    fn rejects_out_of_range_inputs() {
        let good = ExploreConfig::new(0.25, 0.1);
        assert!(compute_stage_params(1, 2, 2, 4, &ExploreConfig::new(1.0, 0.1)).is_err());
        assert!(compute_stage_params(1, 2, 2, 4, &ExploreConfig::new(0.2, 0.0)).is_err());
        assert!(compute_stage_params(0, 2, 2, 4, &good).is_err());
        assert!(compute_stage_params(99, 2, 2, 4, &good).is_err());
    }

    #[test]
    fn trigger_set_is_doubling() {
        let p = params(1, 1, 3, 4);
        assert_eq!(p.trigger_set(), vec![1, 2, 4]);
        assert!(p.is_trigger(4));
        assert!(!p.is_trigger(8));
        assert!(!p.is_trigger(3));
    }

    #[test]
    fn eps1_uses_unscaled_budget() {
        let cfg = ExploreConfig::new(0.2, 0.1).with_scale(0.01);
        let p = compute_stage_params(1, 3, 2, 5, &cfg).unwrap();
        assert_eq!(p.eps1, eps1(p.iota, p.t0_unscaled, 5));
        assert!(p.iota1 > p.iota);
    }

    #[test]
    fn bonus_formula() {
        let b = exploration_bonus(0.25, 100, 2.0, 10.0, 0.0);
        assert!((b - ((4.0 * 0.25 * 10.0 / 100.0f64).sqrt() + 280.0 / 300.0)).abs() < 1e-15);
        assert_eq!(exploration_bonus(0.0, 0, 1.0, 3.0, 0.0), exploration_bonus(0.0, 1, 1.0, 3.0, 0.0));
    }

    #[test]
    fn empty_unknown_set_still_runs_all_episodes() {
        let env = TabularMdp::new(2, 2, 3, vec![vec![vec![0.5, 0.5]; 2]; 2], vec![1.0, 0.0]).unwrap();
        let p = params(5, 2, 7, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (data, out) = trvrl(&env, &p, PairSet::empty(2, 2), &mut rng).unwrap();
        assert_eq!(data.num_episodes(), 7);
        assert!(out.is_empty());
    }

    #[test]
    fn single_state_pair_becomes_known() {
        let env = TabularMdp::new(1, 1, 3, vec![vec![vec![1.0]]], vec![1.0]).unwrap();
        let p = params(3, 2, 1, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (data, out) = trvrl(&env, &p, PairSet::full(1, 1), &mut rng).unwrap();
        assert_eq!(data.pair_count(0, 0), 3);
        assert!(out.is_empty());
    }

    #[test]
    fn one_stage_run_builds_two_sets() {
        let env = TabularMdp::new(2, 1, 1, vec![vec![vec![0.5, 0.5]]; 2], vec![0.5, 0.5]).unwrap();
        let cfg = ExploreConfig::new(0.9, 0.5).with_scale(1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = staged_sampling(&env, &cfg, &mut rng, |_| {}).unwrap();
        assert_eq!(out.partition.sets().len(), 2);
        assert_eq!(out.episodes(), out.stages[0].t0);
    }

    #[test]
    fn progress_line_format() {
        let r = StageReport {
            stage: 2,
            t0: 10,
            n_i: 4,
            z_i: 3,
            unknown_out: 1,
        };
        assert_eq!(r.to_string(), "stage i=2 T0=10 Ni=4 Zi=3 |Y_out|=1");
    }
}
