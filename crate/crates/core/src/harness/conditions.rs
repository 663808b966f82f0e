use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Result, SstpError};
use crate::explore::{compute_stage_params, ExploreConfig};
use crate::extended::{exceed_probability, num_stages, truncated_visit_value, z_level, PairSet, Partition};
use crate::mdp::TabularMdp;

const CHECK_TOLERANCE: f64 = 1e-12;

/// Which bounds the item-2 checks use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckMode {
    /// Exceedance `≤ (K+1)ε`, truncated visits `≤ H/2^{i−1}`.
    #[default]
    Relaxed,
    /// Exceedance `≤ ε`, truncated visits `≤ H/2^i`.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierRecord {
    /// One-based tier index.
    pub i: usize,
    /// Threshold `N_i`, absent for the last tier.
    pub n_i: Option<u64>,
    pub z_i: u64,
    pub size: usize,
    /// Smallest dataset count over the tier, absent when the tier is empty.
    pub min_count: Option<u64>,
    pub truncated_value: f64,
    /// Absent for checks that have no exceedance item.
    pub exceed_probability: Option<f64>,
    pub visit_bound: f64,
    pub exceed_bound: Option<f64>,
    pub item1_pass: bool,
    pub item2a_pass: bool,
    pub item2b_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: u8,
    pub mode: CheckMode,
    pub eps: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub tiers: Vec<TierRecord>,
    pub item1_pass: bool,
    pub item2a_pass: bool,
    pub item2b_pass: bool,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.item1_pass && self.item2a_pass && self.item2b_pass
    }

    fn from_tiers(condition: u8, mode: CheckMode, eps: f64, k: usize, tiers: Vec<TierRecord>) -> Self {
        Self {
            condition,
            mode,
            eps,
            k,
            item1_pass: tiers.iter().all(|t| t.item1_pass),
            item2a_pass: tiers.iter().all(|t| t.item2a_pass),
            item2b_pass: tiers.iter().all(|t| t.item2b_pass),
            tiers,
        }
    }
}

fn check_dims(mdp: &TabularMdp, dataset: &Dataset, partition: &Partition) -> Result<()> {
    let dims = (mdp.num_states(), mdp.num_actions());
    if (dataset.num_states(), dataset.num_actions()) != dims || (partition.num_states(), partition.num_actions()) != dims {
        return Err(SstpError::Dimension("MDP, dataset and partition disagree on S or A".into()));
    }
    Ok(())
}

fn min_count(dataset: &Dataset, set: &PairSet) -> Option<u64> {
    set.iter().map(|(s, a)| dataset.pair_count(s, a)).min()
}

fn item1(i: usize, partition: &Partition, min: Option<u64>) -> (Option<u64>, bool) {
    let n_i = partition.thresholds().get(i - 1).copied();
    let pass = match (n_i, min) {
        (Some(n), Some(m)) => m >= n,
        _ => true,
    };
    (n_i, pass)
}

pub fn check_condition3(true_mdp: &TabularMdp, dataset: &Dataset, partition: &Partition, eps: f64) -> Result<ConditionReport> {
    check_condition3_with(true_mdp, dataset, partition, eps, CheckMode::Relaxed)
}

/// Counts against `N_i`, then exceedance and truncated visitation of each
/// tier on the true MDP.
pub fn check_condition3_with(
    true_mdp: &TabularMdp,
    dataset: &Dataset,
    partition: &Partition,
    eps: f64,
    mode: CheckMode,
) -> Result<ConditionReport> {
    check_dims(true_mdp, dataset, partition)?;
    let k = partition.k();
    let h = true_mdp.horizon() as f64;
    let mut tiers = Vec::with_capacity(k + 1);
    for (idx, (set, &z)) in partition.sets().iter().zip(partition.z_levels()).enumerate() {
        let i = idx + 1;
        let min = min_count(dataset, set);
        let (n_i, item1_pass) = item1(i, partition, min);
        let trunc = truncated_visit_value(true_mdp, set, z as usize)?;
        let exceed = exceed_probability(true_mdp, set, z as usize)?;
        let (exceed_bound, visit_bound) = match mode {
            CheckMode::Relaxed => ((k + 1) as f64 * eps, h / 2f64.powi(i as i32 - 1)),
            CheckMode::Strict => (eps, h / 2f64.powi(i as i32)),
        };
        tiers.push(TierRecord {
            i,
            n_i,
            z_i: z,
            size: set.len(),
            min_count: min,
            truncated_value: trunc,
            exceed_probability: Some(exceed),
            visit_bound,
            exceed_bound: Some(exceed_bound),
            item1_pass,
            item2a_pass: exceed <= exceed_bound + CHECK_TOLERANCE,
            item2b_pass: trunc <= visit_bound + CHECK_TOLERANCE,
        });
    }
    Ok(ConditionReport::from_tiers(3, mode, eps, k, tiers))
}

/// Untruncated expected visits (`Z = H`) against `H/2^i`, counts against
/// the partition's thresholds.
pub fn check_condition2(true_mdp: &TabularMdp, dataset: &Dataset, partition: &Partition) -> Result<ConditionReport> {
    check_dims(true_mdp, dataset, partition)?;
    let k = partition.k();
    let h = true_mdp.horizon();
    let mut tiers = Vec::with_capacity(k + 1);
    for (idx, set) in partition.sets().iter().enumerate() {
        let i = idx + 1;
        let min = min_count(dataset, set);
        let (n_i, item1_pass) = item1(i, partition, min);
        let visits = truncated_visit_value(true_mdp, set, h)?;
        let visit_bound = h as f64 / 2f64.powi(i as i32);
        tiers.push(TierRecord {
            i,
            n_i,
            z_i: h as u64,
            size: set.len(),
            min_count: min,
            truncated_value: visits,
            exceed_probability: None,
            visit_bound,
            exceed_bound: None,
            item1_pass,
            item2a_pass: true,
            item2b_pass: visits <= visit_bound + CHECK_TOLERANCE,
        });
    }
    Ok(ConditionReport::from_tiers(2, CheckMode::Strict, partition.eps(), k, tiers))
}

/// Builds a partition from exact oracles on the true MDP.
///
/// Tiers are filled from `K+1` downward. Pairs are offered in increasing
/// order of their individual maximal expected visits, and a pair joins a
/// tier when the relaxed item-2 checks still hold with it included. Tier 1
/// takes whatever is left, which always passes since `Z_1 = H` for `ε ≤ 1/2`.
pub fn oracle_partition(true_mdp: &TabularMdp, cfg: &ExploreConfig) -> Result<Partition> {
    cfg.validate()?;
    let (s_count, a_count, h) = (true_mdp.num_states(), true_mdp.num_actions(), true_mdp.horizon());
    let k = num_stages(h, cfg.eps);
    let mut order = Vec::with_capacity(s_count * a_count);
    for s in 0..s_count {
        for a in 0..a_count {
            let single = PairSet::from_pairs(s_count, a_count, [(s, a)])?;
            order.push((truncated_visit_value(true_mdp, &single, h)?, s, a));
        }
    }
    order.sort_by(|x, y| x.0.total_cmp(&y.0));

    let exceed_bound = (k + 1) as f64 * cfg.eps;
    let mut remaining = PairSet::full(s_count, a_count);
    let mut sets = vec![PairSet::empty(s_count, a_count); k + 1];
    for i in (2..=k + 1).rev() {
        let z = z_level(i, h, cfg.eps) as usize;
        let visit_bound = h as f64 / 2f64.powi(i as i32 - 1);
        for &(_, s, a) in &order {
            if !remaining.contains(s, a) {
                continue;
            }
            let mut candidate = sets[i - 1].clone();
            candidate.insert(s, a);
            if exceed_probability(true_mdp, &candidate, z)? <= exceed_bound
                && truncated_visit_value(true_mdp, &candidate, z)? <= visit_bound
            {
                sets[i - 1] = candidate;
                remaining.remove(s, a);
            }
        }
    }
    sets[0] = remaining;
    let z_levels = (1..=k + 1).map(|i| z_level(i, h, cfg.eps)).collect();
    let thresholds = (1..=k)
        .map(|i| compute_stage_params(i, s_count, a_count, h, cfg).map(|p| p.n_i))
        .collect::<Result<Vec<_>>>()?;
    let mut p = Partition::new(sets, z_levels, thresholds, cfg.eps)?;
    p.delta = Some(cfg.delta);
    Ok(p)
}
