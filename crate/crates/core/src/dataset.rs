//! Visit counts collected during exploration, and the empirical model they
//! induce.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result, SstpError};
use crate::mdp::{Trajectory, PROB_TOLERANCE};

/// Transition counts `N_{s,a,s'}` plus the derived pair counts `N_{s,a}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    num_states: usize,
    num_actions: usize,
    counts: Vec<u64>,
    pair_counts: Vec<u64>,
    num_episodes: u64,
    trajectories: Option<Vec<Trajectory>>,
}

impl Dataset {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            counts: vec![0; num_states * num_actions * num_states],
            pair_counts: vec![0; num_states * num_actions],
            num_episodes: 0,
            trajectories: None,
        }
    }

    /// Like [`Dataset::new`], but also keeps every recorded trajectory.
    pub fn with_trajectory_retention(num_states: usize, num_actions: usize) -> Self {
        Self {
            trajectories: Some(Vec::new()),
            ..Self::new(num_states, num_actions)
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_episodes(&self) -> u64 {
        self.num_episodes
    }

    #[inline]
    pub fn count(&self, s: usize, a: usize, next: usize) -> u64 {
        self.counts[(s * self.num_actions + a) * self.num_states + next]
    }

    #[inline]
    pub fn pair_count(&self, s: usize, a: usize) -> u64 {
        self.pair_counts[s * self.num_actions + a]
    }

    /// `N_{s,a}` as a flat `[s][a]` table.
    pub fn pair_counts(&self) -> &[u64] {
        &self.pair_counts
    }

    pub fn total_steps(&self) -> u64 {
        self.pair_counts.iter().sum()
    }

    pub fn trajectories(&self) -> Option<&[Trajectory]> {
        self.trajectories.as_deref()
    }

    /// Adds `n` observations of `(s, a, s')`.
    pub fn add_transition(&mut self, s: usize, a: usize, next: usize, n: u64) -> Result<()> {
        if s >= self.num_states || next >= self.num_states || a >= self.num_actions {
            return Err(dim_err(format!(
                "transition ({s},{a},{next}) outside S={} A={}",
                self.num_states, self.num_actions
            )));
        }
        self.counts[(s * self.num_actions + a) * self.num_states + next] += n;
        self.pair_counts[s * self.num_actions + a] += n;
        Ok(())
    }

    /// Records a full episode of `horizon` steps.
    pub fn record_episode(&mut self, traj: &Trajectory, horizon: usize) -> Result<()> {
        if traj.len() != horizon {
            return Err(SstpError::TrajectoryLength {
                got: traj.len(),
                expected: horizon,
            });
        }
        for step in &traj.steps {
            if step.state >= self.num_states || step.next_state >= self.num_states || step.action >= self.num_actions {
                return Err(dim_err("trajectory step outside the dataset dimensions"));
            }
        }
        for step in &traj.steps {
            self.add_transition(step.state, step.action, step.next_state, 1)?;
        }
        self.num_episodes += 1;
        if let Some(kept) = self.trajectories.as_mut() {
            kept.push(traj.clone());
        }
        Ok(())
    }

    /// Counts one more episode whose steps were added one transition at a time.
    pub(crate) fn record_episode_count(&mut self) {
        self.num_episodes += 1;
    }

    /// Elementwise sum of counts and episode totals.
    pub fn merge(&self, other: &Dataset) -> Result<Dataset> {
        let mut out = self.clone();
        out.merge_from(other)?;
        Ok(out)
    }

    pub fn merge_from(&mut self, other: &Dataset) -> Result<()> {
        if self.num_states != other.num_states || self.num_actions != other.num_actions {
            return Err(dim_err(format!(
                "cannot merge S={} A={} with S={} A={}",
                self.num_states, self.num_actions, other.num_states, other.num_actions
            )));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        self.pair_counts
            .iter_mut()
            .zip(&other.pair_counts)
            .for_each(|(a, b)| *a += b);
        self.num_episodes += other.num_episodes;
        if let (Some(mine), Some(theirs)) = (self.trajectories.as_mut(), other.trajectories.as_ref()) {
            mine.extend(theirs.iter().cloned());
        }
        Ok(())
    }

    /// Maximum-likelihood transition rows; unvisited pairs get the uniform row.
    pub fn empirical_model(&self) -> EmpiricalModel {
        let s_count = self.num_states;
        let mut transitions = Vec::with_capacity(self.counts.len());
        for (pair, &n) in self.pair_counts.iter().enumerate() {
            let row = &self.counts[pair * s_count..(pair + 1) * s_count];
            if n == 0 {
                transitions.extend(std::iter::repeat_n(1.0 / s_count as f64, s_count));
            } else {
                transitions.extend(row.iter().map(|&c| c as f64 / n as f64));
            }
        }
        EmpiricalModel {
            num_states: s_count,
            num_actions: self.num_actions,
            transitions,
            source_counts: self.pair_counts.clone(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(DatasetFile::from(self)).expect("dataset serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: DatasetFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    #[serde(rename = "S")]
    s: usize,
    #[serde(rename = "A")]
    a: usize,
    episodes: u64,
    /// Sparse `[s, a, s', n]` entries, zero counts omitted.
    counts: Vec<[u64; 4]>,
}

impl From<&Dataset> for DatasetFile {
    fn from(d: &Dataset) -> Self {
        let mut counts = Vec::new();
        for s in 0..d.num_states {
            for a in 0..d.num_actions {
                for next in 0..d.num_states {
                    let n = d.count(s, a, next);
                    if n > 0 {
                        counts.push([s as u64, a as u64, next as u64, n]);
                    }
                }
            }
        }
        DatasetFile {
            s: d.num_states,
            a: d.num_actions,
            episodes: d.num_episodes,
            counts,
        }
    }
}

impl TryFrom<DatasetFile> for Dataset {
    type Error = SstpError;

    fn try_from(f: DatasetFile) -> Result<Self> {
        let mut d = Dataset::new(f.s, f.a);
        for [s, a, next, n] in f.counts {
            d.add_transition(s as usize, a as usize, next as usize, n)?;
        }
        d.num_episodes = f.episodes;
        Ok(d)
    }
}

/// Empirical transition rows `P̂_{s,a}` with the counts they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalModel {
    num_states: usize,
    num_actions: usize,
    transitions: Vec<f64>,
    source_counts: Vec<u64>,
}

impl EmpiricalModel {
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    pub fn source_counts(&self) -> &[u64] {
        &self.source_counts
    }

    pub fn flat_transitions(&self) -> &[f64] {
        &self.transitions
    }

    /// Every row sums to one within [`PROB_TOLERANCE`].
    pub fn is_normalized(&self) -> bool {
        self.transitions
            .chunks(self.num_states)
            .all(|row| (row.iter().sum::<f64>() - 1.0).abs() <= PROB_TOLERANCE)
    }
}
