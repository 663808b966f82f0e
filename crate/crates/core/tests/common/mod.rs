//! Brute-force oracles and instance helpers shared by the integration tests.
//! Nothing here calls the dynamic-programming code under test.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sstp_core::harness::{generate_random_mdp, generate_reward, RewardStyle};
use sstp_core::{PairSet, Policy, RewardFunction, TabularMdp};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small random MDP with a seed-dependent sparsity.
pub fn small_mdp(seed: u64, s: usize, a: usize, h: usize) -> TabularMdp {
    let sparsity = [1.0, 0.7, 0.5][(seed % 3) as usize];
    generate_random_mdp(s, a, h, seed, sparsity).unwrap()
}

/// Arbitrary nonnegative reward in `[0, 1)` per entry (not total-bounded).
pub fn raw_reward(seed: u64, h: usize, s: usize, a: usize) -> RewardFunction {
    let mut r = rng(seed ^ 0xA5A5);
    RewardFunction::from_flat(h, s, a, (0..h * s * a).map(|_| r.random::<f64>()).collect()).unwrap()
}

pub fn valid_reward(mdp: &TabularMdp, seed: u64) -> RewardFunction {
    generate_reward(mdp, seed, RewardStyle::RandomTotalOne).unwrap()
}

/// Nonempty random subset of `S×A` (each pair kept with probability 1/2).
pub fn random_target(seed: u64, s: usize, a: usize) -> PairSet {
    let mut r = rng(seed ^ 0x5EED);
    let mut set = PairSet::from_fn(s, a, |_, _| r.random::<bool>());
    if set.is_empty() {
        set.insert(r.random_range(0..s), r.random_range(0..a));
    }
    set
}

/// All `A^(S·H)` deterministic Markov policies.
pub fn all_markov_policies(h: usize, s: usize, a: usize) -> impl Iterator<Item = Policy> {
    let slots = (h * s) as u32;
    (0..(a as u64).pow(slots)).map(move |mut code| {
        let actions = (0..h * s)
            .map(|_| {
                let x = (code % a as u64) as usize;
                code /= a as u64;
                x
            })
            .collect();
        Policy::from_flat(h, s, actions).unwrap()
    })
}

/// `E[Σ_h r_h]` from state `s` at level `h`, by expanding the trajectory tree.
pub fn tree_value(mdp: &TabularMdp, reward: &RewardFunction, policy: &Policy, h: usize, s: usize) -> f64 {
    if h == mdp.horizon() {
        return 0.0;
    }
    let a = policy.action(h, s);
    let mut total = reward.get(h, s, a);
    for (next, &p) in mdp.row(s, a).iter().enumerate() {
        if p > 0.0 {
            total += p * tree_value(mdp, reward, policy, h + 1, next);
        }
    }
    total
}

/// Per-start-state maximum over all Markov policies.
pub fn brute_optimal_values(mdp: &TabularMdp, reward: &RewardFunction) -> Vec<f64> {
    let (s, a, h) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut best = vec![f64::NEG_INFINITY; s];
    for pi in all_markov_policies(h, s, a) {
        for (start, b) in best.iter_mut().enumerate() {
            *b = b.max(tree_value(mdp, reward, &pi, 0, start));
        }
    }
    best
}

/// Largest reward sum over positive-probability trajectories, by DFS.
pub fn brute_max_total_reward(mdp: &TabularMdp, reward: &RewardFunction) -> f64 {
    fn dfs(mdp: &TabularMdp, reward: &RewardFunction, h: usize, s: usize) -> f64 {
        if h == mdp.horizon() {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for a in 0..mdp.num_actions() {
            for (next, &p) in mdp.row(s, a).iter().enumerate() {
                if p > 0.0 {
                    best = best.max(reward.get(h, s, a) + dfs(mdp, reward, h + 1, next));
                }
            }
        }
        best
    }
    mdp.initial_dist()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(s, _)| dfs(mdp, reward, 0, s))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Maximum over deterministic policies that see `(h, s, min(count, memory))`
/// of `E[payoff(final count)]`, where `count` is the number of target visits.
/// Returns the per-start-state maxima.
pub fn brute_counter_value(
    mdp: &TabularMdp,
    target: &PairSet,
    memory: usize,
    payoff: impl Fn(usize) -> f64,
) -> Vec<f64> {
    let (s_count, a_count, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    // A count seen at level h is at most h.
    let mut offsets = Vec::with_capacity(horizon + 1);
    let mut total = 0;
    for h in 0..horizon {
        offsets.push(total);
        total += s_count * (h.min(memory) + 1);
    }
    let slot = |h: usize, s: usize, c: usize| offsets[h] + s * (h.min(memory) + 1) + c.min(memory);

    fn eval(
        mdp: &TabularMdp,
        target: &PairSet,
        actions: &[usize],
        slot: &dyn Fn(usize, usize, usize) -> usize,
        payoff: &dyn Fn(usize) -> f64,
        h: usize,
        s: usize,
        count: usize,
    ) -> f64 {
        if h == mdp.horizon() {
            return payoff(count);
        }
        let a = actions[slot(h, s, count)];
        let next_count = count + usize::from(target.contains(s, a));
        mdp.row(s, a)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(next, &p)| p * eval(mdp, target, actions, slot, payoff, h + 1, next, next_count))
            .sum()
    }

    let mut best = vec![f64::NEG_INFINITY; s_count];
    let mut actions = vec![0usize; total];
    let combos = (a_count as u64).pow(total as u32);
    for mut code in 0..combos {
        for x in actions.iter_mut() {
            *x = (code % a_count as u64) as usize;
            code /= a_count as u64;
        }
        for (start, b) in best.iter_mut().enumerate() {
            *b = b.max(eval(mdp, target, &actions, &slot, &payoff, 0, start, 0));
        }
    }
    best
}

pub fn mu_weighted(mdp: &TabularMdp, per_state: &[f64]) -> f64 {
    mdp.initial_dist().iter().zip(per_state).map(|(m, v)| m * v).sum()
}

/// Mean and standard error of a sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean and standard error of a Bernoulli frequency.
pub fn freq_se(hits: u64, n: u64) -> (f64, f64) {
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}
