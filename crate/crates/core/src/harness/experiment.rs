use std::io::Write;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conditions::check_condition3;
use super::generators::{generate_random_mdp, generate_reward, RewardStyle};
use crate::error::{Result, SstpError};
use crate::explore::{staged_sampling, ExploreConfig};
use crate::mdp::{policy_evaluation, value_iteration, Policy, RewardFunction, TabularMdp};
use crate::plan::{truncated_planning, PlanConfig};

pub const CSV_HEADER: [&str; 7] = ["seed", "reward_seed", "episodes", "gap", "eps", "passed_cond3", "wall_ms"];

/// Environment variable capping the worker pool width.
pub const THREADS_ENV: &str = "SSTP_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MdpSpec {
    Given(TabularMdp),
    Random {
        s: usize,
        a: usize,
        h: usize,
        sparsity: f64,
        seed: u64,
    },
}

impl MdpSpec {
    pub fn build(&self) -> Result<TabularMdp> {
        match self {
            Self::Given(m) => Ok(m.clone()),
            Self::Random { s, a, h, sparsity, seed } => generate_random_mdp(*s, *a, *h, *seed, *sparsity),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mdp: MdpSpec,
    pub explore: ExploreConfig,
    pub reward_style: RewardStyle,
    pub num_reward_draws: usize,
    pub num_replicates: usize,
    pub master_seed: u64,
    pub timeout: Duration,
    /// Pool width; `None` defers to `SSTP_THREADS`, then to rayon's default.
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(mdp: MdpSpec, explore: ExploreConfig) -> Self {
        Self {
            mdp,
            explore,
            reward_style: RewardStyle::RandomTotalOne,
            num_reward_draws: 1,
            num_replicates: 1,
            master_seed: 0,
            timeout: Duration::from_secs(300),
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.explore.validate()?;
        if self.num_reward_draws < 1 {
            return Err(SstpError::Config("num_reward_draws must be at least 1".into()));
        }
        Ok(())
    }
}

/// One CSV row; `gap` is `None` when the cell timed out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub seed: u64,
    pub reward_seed: u64,
    pub episodes: u64,
    pub gap: Option<f64>,
    pub eps: f64,
    pub passed_cond3: bool,
    pub wall_ms: u128,
}

impl ExperimentRow {
    fn record(&self) -> [String; 7] {
        [
            self.seed.to_string(),
            self.reward_seed.to_string(),
            self.episodes.to_string(),
            self.gap.map(|g| g.to_string()).unwrap_or_default(),
            self.eps.to_string(),
            self.passed_cond3.to_string(),
            self.wall_ms.to_string(),
        ]
    }
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Exploration seed of replicate `r`.
pub fn replicate_seed(master: u64, replicate: usize) -> u64 {
    splitmix64(splitmix64(master) ^ replicate as u64)
}

/// Reward seed of draw `j` inside a replicate.
pub fn reward_seed(replicate_seed: u64, draw: usize) -> u64 {
    splitmix64(replicate_seed ^ splitmix64(draw as u64 + 1))
}

/// `V*_1 − V^π_1`, both averaged under the initial distribution.
pub fn suboptimality_gap(mdp: &TabularMdp, reward: &RewardFunction, policy: &Policy) -> Result<f64> {
    let (star, _) = value_iteration(mdp, reward)?;
    let value = policy_evaluation(mdp, reward, policy)?;
    let mu = mdp.initial_dist();
    Ok(star.initial_value(mu) - value.expected(mu))
}

fn run_replicate(mdp: &TabularMdp, cfg: &ExperimentConfig, replicate: usize) -> Result<Vec<ExperimentRow>> {
    let seed = replicate_seed(cfg.master_seed, replicate);
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outcome = staged_sampling(mdp, &cfg.explore, &mut rng, |_| {})?;
    let passed = check_condition3(mdp, &outcome.dataset, &outcome.partition, cfg.explore.eps)?.passed();
    let plan_cfg = PlanConfig::from_budget(cfg.explore.delta, mdp.num_states(), mdp.horizon(), outcome.params[0].t0)?;
    let explore_time = start.elapsed();
    let mut rows = Vec::with_capacity(cfg.num_reward_draws);
    for draw in 0..cfg.num_reward_draws {
        let cell_start = Instant::now();
        let rseed = reward_seed(seed, draw);
        let reward = generate_reward(mdp, rseed, cfg.reward_style)?;
        let policy = truncated_planning(&outcome.dataset, &outcome.partition, &reward, &plan_cfg)?;
        let gap = suboptimality_gap(mdp, &reward, &policy)?;
        let wall = explore_time + cell_start.elapsed();
        rows.push(ExperimentRow {
            seed,
            reward_seed: rseed,
            episodes: outcome.episodes(),
            gap: (wall <= cfg.timeout).then_some(gap),
            eps: cfg.explore.eps,
            passed_cond3: passed,
            wall_ms: wall.as_millis(),
        });
    }
    Ok(rows)
}

fn pool_width(cfg: &ExperimentConfig) -> Option<usize> {
    cfg.threads
        .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()))
        .filter(|&n| n > 0)
}

/// Runs every replicate and returns the rows in replicate order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    let mut rows = Vec::new();
    run_experiment_with(cfg, |r| {
        rows.push(r.clone());
        Ok(())
    })?;
    Ok(rows)
}

/// Runs every replicate on a worker pool and hands rows to `sink` in
/// replicate order. Rows of successful replicates reach the sink even when
/// another replicate fails; the first failure is returned afterwards.
pub fn run_experiment_with(cfg: &ExperimentConfig, mut sink: impl FnMut(&ExperimentRow) -> Result<()>) -> Result<()> {
    cfg.validate()?;
    let mdp = cfg.mdp.build()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = pool_width(cfg) {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| SstpError::Config(format!("cannot build worker pool: {e}")))?;
    let results: Vec<Result<Vec<ExperimentRow>>> =
        pool.install(|| (0..cfg.num_replicates).into_par_iter().map(|r| run_replicate(&mdp, cfg, r)).collect());
    let mut first_err = None;
    for result in results {
        match result {
            Ok(rows) => rows.iter().try_for_each(&mut sink)?,
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

/// Streams rows as CSV with a fixed header, flushing after each row.
pub fn write_experiment_csv<W: Write>(cfg: &ExperimentConfig, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER)?;
    writer.flush()?;
    let result = run_experiment_with(cfg, |row| {
        writer.write_record(row.record())?;
        writer.flush()?;
        Ok(())
    });
    writer.flush()?;
    result
}

pub fn rows_to_csv<W: Write>(rows: &[ExperimentRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER)?;
    for row in rows {
        writer.write_record(row.record())?;
    }
    writer.flush()?;
    Ok(())
}
