use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Result, SstpError};
use crate::mdp::{max_total_reward, sample_episode, Policy, RewardFunction, TabularMdp};

/// Symmetric Dirichlet(1) draw of length `n`.
fn flat_dirichlet<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1) + f64::MIN_POSITIVE).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Random MDP whose rows put Dirichlet(1) mass on `⌈sparsity·S⌉` successors.
pub fn generate_random_mdp(s: usize, a: usize, h: usize, seed: u64, sparsity: f64) -> Result<TabularMdp> {
    if s == 0 || a == 0 || h == 0 {
        return Err(SstpError::Config("S, A and H must be at least 1".into()));
    }
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(SstpError::Config(format!("sparsity must lie in (0,1], got {sparsity}")));
    }
    let support = ((sparsity * s as f64 - 1e-9).ceil() as usize).clamp(1, s);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flat = vec![0.0; s * a * s];
    for row in flat.chunks_mut(s) {
        let idx = sample(&mut rng, s, support);
        for (i, w) in idx.iter().zip(flat_dirichlet(support, &mut rng)) {
            row[i] = w;
        }
    }
    let mu = flat_dirichlet(s, &mut rng);
    TabularMdp::from_flat(s, a, h, flat, mu)
}

/// A designated absorbing state `s̃ = S−1` entered with probability `eps1`
/// from every other pair; the rest of each row is uniform over the other
/// states. Episodes start uniformly outside `s̃`.
pub fn generate_hard_instance(s: usize, a: usize, h: usize, eps1: f64) -> Result<TabularMdp> {
    if s < 2 {
        return Err(SstpError::Config("the hard instance needs S ≥ 2".into()));
    }
    if a == 0 || h == 0 {
        return Err(SstpError::Config("A and H must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&eps1) {
        return Err(SstpError::Config(format!("eps1 must lie in [0,1), got {eps1}")));
    }
    let trap = s - 1;
    let spread = (1.0 - eps1) / (s - 1) as f64;
    let mut flat = Vec::with_capacity(s * a * s);
    for state in 0..s {
        for _ in 0..a {
            if state == trap {
                flat.extend((0..s).map(|n| if n == trap { 1.0 } else { 0.0 }));
            } else {
                flat.extend((0..s).map(|n| if n == trap { eps1 } else { spread }));
            }
        }
    }
    let mut mu = vec![1.0 / (s - 1) as f64; s];
    mu[trap] = 0.0;
    TabularMdp::from_flat(s, a, h, flat, mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardStyle {
    /// Reward 1 at a single reachable `(h, s, a)`.
    SparseGoal,
    /// `r ≡ 1/H`.
    DenseUniform,
    /// Uniform draws rescaled so the best trajectory earns exactly 1.
    #[default]
    RandomTotalOne,
    Zero,
}

impl FromStr for RewardStyle {
    type Err = SstpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "sparse_goal" => Ok(Self::SparseGoal),
            "dense_uniform" => Ok(Self::DenseUniform),
            "random_total_one" => Ok(Self::RandomTotalOne),
            "zero" => Ok(Self::Zero),
            other => Err(SstpError::Config(format!("unknown reward style {other:?}"))),
        }
    }
}

impl fmt::Display for RewardStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SparseGoal => "sparse_goal",
            Self::DenseUniform => "dense_uniform",
            Self::RandomTotalOne => "random_total_one",
            Self::Zero => "zero",
        })
    }
}

/// States with positive probability at each level, `[h][s]`.
fn reachable_states(mdp: &TabularMdp) -> Vec<Vec<bool>> {
    let (s_count, a_count) = (mdp.num_states(), mdp.num_actions());
    let mut levels = Vec::with_capacity(mdp.horizon());
    let mut cur: Vec<bool> = mdp.initial_dist().iter().map(|&p| p > 0.0).collect();
    for _ in 0..mdp.horizon() {
        let mut next = vec![false; s_count];
        for s in (0..s_count).filter(|&s| cur[s]) {
            for a in 0..a_count {
                for (n, &p) in mdp.row(s, a).iter().enumerate() {
                    next[n] |= p > 0.0;
                }
            }
        }
        levels.push(std::mem::replace(&mut cur, next));
    }
    levels
}

/// A reward satisfying the total-reward bound on `mdp`.
pub fn generate_reward(mdp: &TabularMdp, seed: u64, style: RewardStyle) -> Result<RewardFunction> {
    let (h, s, a) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match style {
        RewardStyle::Zero => Ok(RewardFunction::zeros(h, s, a)),
        RewardStyle::DenseUniform => RewardFunction::constant(h, s, a, 1.0 / h as f64),
        RewardStyle::SparseGoal => {
            let reach = reachable_states(mdp);
            let triples: Vec<(usize, usize)> = reach
                .iter()
                .enumerate()
                .flat_map(|(lvl, states)| states.iter().enumerate().filter(|(_, &r)| r).map(move |(st, _)| (lvl, st)))
                .collect();
            let (lvl, st) = triples[rng.random_range(0..triples.len())];
            let mut r = RewardFunction::zeros(h, s, a);
            r.set(lvl, st, rng.random_range(0..a), 1.0)?;
            Ok(r)
        }
        RewardStyle::RandomTotalOne => {
            let raw = RewardFunction::from_flat(h, s, a, (0..h * s * a).map(|_| rng.random::<f64>()).collect())?;
            let total = max_total_reward(mdp, &raw)?;
            if total <= 0.0 {
                return Ok(RewardFunction::zeros(h, s, a));
            }
            raw.scaled(1.0 / total)
        }
    }
}

/// Dataset of `episodes` trajectories under uniformly random actions.
pub fn baseline_uniform_explore<R: Rng + ?Sized>(env: &TabularMdp, episodes: u64, rng: &mut R) -> Result<Dataset> {
    let mut d = Dataset::new(env.num_states(), env.num_actions());
    for k in 0..episodes {
        let pi = Policy::random(env.horizon(), env.num_states(), env.num_actions(), rng);
        let traj = sample_episode(env, &pi, rng, k);
        d.record_episode(&traj, env.horizon())?;
    }
    Ok(d)
}

/// Counts `round(n · P(s'|s,a))` for every pair, so the empirical model
/// matches `mdp` up to rounding.
pub fn saturated_dataset(mdp: &TabularMdp, per_pair: u64) -> Result<Dataset> {
    let (s_count, a_count) = (mdp.num_states(), mdp.num_actions());
    let mut d = Dataset::new(s_count, a_count);
    for s in 0..s_count {
        for a in 0..a_count {
            for (next, &p) in mdp.row(s, a).iter().enumerate() {
                let n = (per_pair as f64 * p).round() as u64;
                if n > 0 {
                    d.add_transition(s, a, next, n)?;
                }
            }
        }
    }
    Ok(d)
}
