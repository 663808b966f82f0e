//! Command-line front end: generate instances, explore, plan, evaluate,
//! check partition conditions and run batch experiments.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sstp_core::harness::{
    check_condition2, check_condition3_with, generate_hard_instance, generate_random_mdp, generate_reward,
    suboptimality_gap, write_experiment_csv, CheckMode, ExperimentConfig, MdpSpec, RewardStyle,
};
use sstp_core::{
    plan_without_truncation, policy_evaluation, staged_sampling, truncated_planning, value_iteration, Dataset,
    ExploreConfig, NiVariant, Partition, PlanConfig, Policy, RewardFunction, TabularMdp,
};

#[derive(Parser)]
#[command(name = "sstp", version, about = "Reward-free exploration and truncated planning for tabular MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random or hard MDP, or a reward for an MDP
    #[command(subcommand)]
    Generate(GenerateCommand),
    /// Run staged exploration and write the dataset and partition
    Explore(ExploreArgs),
    /// Plan a policy for a reward from a dataset and partition
    Plan(PlanArgs),
    /// Compare a policy with the exact optimum
    Evaluate(EvaluateArgs),
    /// Check a partition condition against the true MDP and print JSON
    Check(CheckArgs),
    /// Run replicated end-to-end experiments and write CSV rows
    Experiment(ExperimentArgs),
}

#[derive(Subcommand)]
enum GenerateCommand {
    Mdp(GenerateMdpArgs),
    Reward(GenerateRewardArgs),
}

#[derive(Args)]
struct GenerateMdpArgs {
    #[arg(long)]
    states: usize,
    #[arg(long)]
    actions: usize,
    #[arg(long)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of next states in each transition's support
    #[arg(long, default_value_t = 1.0)]
    sparsity: f64,
    /// Build the trap instance with this per-level entry probability instead
    #[arg(long)]
    hard_eps1: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateRewardArgs {
    #[arg(long)]
    mdp: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = RewardStyle::RandomTotalOne)]
    style: RewardStyle,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExplorationFlags {
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 16.0)]
    c1: f64,
    /// Multiplies both the visit thresholds and the episodes per stage
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = NiVariant::Cond3)]
    ni_variant: NiVariant,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..=2))]
    known_multiplier: u64,
}

impl ExplorationFlags {
    fn config(&self) -> anyhow::Result<ExploreConfig> {
        let mut cfg = ExploreConfig::new(self.eps, self.delta).with_c1(self.c1).with_scale(self.scale);
        cfg.ni_variant = self.ni_variant;
        cfg.known_multiplier = self.known_multiplier;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct ExploreArgs {
    #[arg(long)]
    mdp: PathBuf,
    #[command(flatten)]
    flags: ExplorationFlags,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dataset: PathBuf,
    #[arg(long)]
    out_partition: PathBuf,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    partition: PathBuf,
    #[arg(long)]
    reward: PathBuf,
    #[arg(long)]
    out_policy: PathBuf,
    /// Overrides the failure probability stored in the partition file
    #[arg(long)]
    delta: Option<f64>,
    /// Overrides the episodes per stage stored in the partition file
    #[arg(long)]
    t0: Option<u64>,
    /// Needed only when the reward file uses the level-broadcast form
    #[arg(long)]
    horizon: Option<usize>,
    /// Plan on the plain empirical model without absorbing transitions
    #[arg(long)]
    no_truncation: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    mdp: PathBuf,
    #[arg(long)]
    reward: PathBuf,
    #[arg(long)]
    policy: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConditionArg {
    #[value(name = "2")]
    Two,
    #[value(name = "3")]
    Three,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    mdp: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    partition: PathBuf,
    #[arg(long, value_enum, default_value = "3")]
    condition: ConditionArg,
    /// Defaults to the accuracy stored in the partition file
    #[arg(long)]
    eps: Option<f64>,
    /// Use the literal bounds instead of the relaxed ones
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    /// MDP file; a random MDP is drawn when absent
    #[arg(long, conflicts_with_all = ["states", "actions", "horizon"])]
    mdp: Option<PathBuf>,
    #[arg(long, required_unless_present = "mdp")]
    states: Option<usize>,
    #[arg(long, required_unless_present = "mdp")]
    actions: Option<usize>,
    #[arg(long, required_unless_present = "mdp")]
    horizon: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    sparsity: f64,
    #[arg(long, default_value_t = 0)]
    mdp_seed: u64,
    #[command(flatten)]
    flags: ExplorationFlags,
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    #[arg(long, default_value_t = 1)]
    rewards: usize,
    #[arg(long, default_value_t = RewardStyle::RandomTotalOne)]
    reward_style: RewardStyle,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    timeout_secs: u64,
    /// Worker threads; falls back to SSTP_THREADS
    #[arg(long)]
    threads: Option<usize>,
    /// CSV destination; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load_mdp(path: &Path) -> anyhow::Result<TabularMdp> {
    serde_json::from_str(&read(path)?).with_context(|| format!("parsing MDP {}", path.display()))
}

fn load_dataset(path: &Path) -> anyhow::Result<Dataset> {
    Dataset::from_json_str(&read(path)?).with_context(|| format!("parsing dataset {}", path.display()))
}

fn load_partition(path: &Path) -> anyhow::Result<Partition> {
    Partition::from_json_str(&read(path)?).with_context(|| format!("parsing partition {}", path.display()))
}

/// Reads a reward file, taking the horizon from the per-level form when no
/// horizon is given.
fn load_reward(path: &Path, horizon: Option<usize>) -> anyhow::Result<RewardFunction> {
    let text = read(path)?;
    let horizon = match horizon {
        Some(h) => h,
        None => {
            let value: serde_json::Value = serde_json::from_str(&text)?;
            let table = value["r"].as_array().context("reward file needs an \"r\" array")?;
            let per_level = table
                .first()
                .and_then(|row| row.as_array())
                .and_then(|row| row.first())
                .is_some_and(|entry| entry.is_array());
            if !per_level {
                bail!("{} uses the level-broadcast form; pass --horizon", path.display());
            }
            table.len()
        }
    };
    RewardFunction::from_json_str(&text, horizon).with_context(|| format!("parsing reward {}", path.display()))
}

fn generate(cmd: GenerateCommand) -> anyhow::Result<()> {
    match cmd {
        GenerateCommand::Mdp(args) => {
            let mdp = match args.hard_eps1 {
                Some(e) => generate_hard_instance(args.states, args.actions, args.horizon, e)?,
                None => generate_random_mdp(args.states, args.actions, args.horizon, args.seed, args.sparsity)?,
            };
            write_json(&args.out, &serde_json::to_value(&mdp)?)
        }
        GenerateCommand::Reward(args) => {
            let mdp = load_mdp(&args.mdp)?;
            let reward = generate_reward(&mdp, args.seed, args.style)?;
            write_json(&args.out, &reward.to_json())
        }
    }
}

fn explore(args: ExploreArgs) -> anyhow::Result<()> {
    let mdp = load_mdp(&args.mdp)?;
    let cfg = args.flags.config()?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let outcome = staged_sampling(&mdp, &cfg, &mut rng, |report| eprintln!("{report}"))?;
    write_json(&args.out_dataset, &outcome.dataset.to_json())?;
    write_json(&args.out_partition, &outcome.partition.to_json())
}

fn plan(args: PlanArgs) -> anyhow::Result<()> {
    let dataset = load_dataset(&args.dataset)?;
    let partition = load_partition(&args.partition)?;
    let reward = load_reward(&args.reward, args.horizon)?;
    let delta = args.delta.or(partition.delta).unwrap_or(0.1);
    let t0 = match args.t0.or(partition.t0) {
        Some(t0) => t0,
        None => dataset.num_episodes() / partition.k().max(1) as u64,
    };
    let cfg = PlanConfig::from_budget(delta, dataset.num_states(), reward.horizon(), t0)?;
    let policy = if args.no_truncation {
        plan_without_truncation(&dataset, &reward, &cfg)?
    } else {
        truncated_planning(&dataset, &partition, &reward, &cfg)?
    };
    write_json(&args.out_policy, &policy.to_json())
}

fn evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let mdp = load_mdp(&args.mdp)?;
    let reward = load_reward(&args.reward, Some(mdp.horizon()))?;
    let policy = Policy::from_json_str(&read(&args.policy)?)?;
    let mu = mdp.initial_dist();
    let value = policy_evaluation(&mdp, &reward, &policy)?.expected(mu);
    let (optimal, _) = value_iteration(&mdp, &reward)?;
    let report = serde_json::json!({
        "value": value,
        "optimal": optimal.initial_value(mu),
        "gap": suboptimality_gap(&mdp, &reward, &policy)?,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn check(args: CheckArgs) -> anyhow::Result<()> {
    let mdp = load_mdp(&args.mdp)?;
    let dataset = load_dataset(&args.dataset)?;
    let partition = load_partition(&args.partition)?;
    let report = match args.condition {
        ConditionArg::Two => check_condition2(&mdp, &dataset, &partition)?,
        ConditionArg::Three => {
            let mode = if args.strict { CheckMode::Strict } else { CheckMode::Relaxed };
            let eps = args.eps.unwrap_or(partition.eps());
            check_condition3_with(&mdp, &dataset, &partition, eps, mode)?
        }
    };
    let mut value = serde_json::to_value(&report)?;
    value["passed"] = report.passed().into();
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn experiment(args: ExperimentArgs) -> anyhow::Result<()> {
    let mdp = match (&args.mdp, args.states, args.actions, args.horizon) {
        (Some(path), ..) => MdpSpec::Given(load_mdp(path)?),
        (None, Some(s), Some(a), Some(h)) => MdpSpec::Random {
            s,
            a,
            h,
            sparsity: args.sparsity,
            seed: args.mdp_seed,
        },
        _ => bail!("pass --mdp or all of --states, --actions, --horizon"),
    };
    let mut cfg = ExperimentConfig::new(mdp, args.flags.config()?);
    cfg.num_replicates = args.replicates;
    cfg.num_reward_draws = args.rewards;
    cfg.reward_style = args.reward_style;
    cfg.master_seed = args.seed;
    cfg.timeout = Duration::from_secs(args.timeout_secs);
    cfg.threads = args.threads;
    match &args.out {
        Some(path) => {
            let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_experiment_csv(&cfg, file)?;
        }
        None => {
            let stdout = io::stdout();
            write_experiment_csv(&cfg, stdout.lock())?;
            io::stdout().flush()?;
        }
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Generate(cmd) => generate(cmd),
        Command::Explore(args) => explore(args),
        Command::Plan(args) => plan(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Check(args) => check(args),
        Command::Experiment(args) => experiment(args),
    }
}
