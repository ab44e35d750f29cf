//! Frozen-network rollouts and score statistics.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{mean_sd, run_episode, AgentConfig, Checkpoint, HarnessError, Phase, Task};
use crate::algorithms::{EpisodeRecord, Learner, LearnerConfig};
use crate::network::Network;
use crate::policy::PolicySpec;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalStats {
    pub policy: String,
    pub mean: f64,
    pub sd: f64,
    pub scores: Vec<u64>,
    pub steps: Vec<usize>,
    pub exploratory: Vec<usize>,
}

impl EvalStats {
    pub fn from_records(policy: &str, records: &[EpisodeRecord]) -> Self {
        let scores: Vec<u64> = records.iter().map(|r| r.score()).collect();
        let (mean, sd) = mean_sd(&scores.iter().map(|&s| s as f64).collect::<Vec<_>>());
        EvalStats {
            policy: policy.to_string(),
            mean,
            sd,
            scores,
            steps: records.iter().map(|r| r.len()).collect(),
            exploratory: records.iter().map(|r| r.exploratory_actions()).collect(),
        }
    }

    pub fn exploratory_mean(&self) -> f64 {
        mean_sd(
            &self
                .exploratory
                .iter()
                .map(|&x| x as f64)
                .collect::<Vec<_>>(),
        )
        .0
    }

    pub fn mean_steps(&self) -> f64 {
        mean_sd(&self.steps.iter().map(|&x| x as f64).collect::<Vec<_>>()).0
    }

    /// Writes `episode,score,steps,exploratory_actions`.
    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        #[derive(Serialize)]
        struct Row {
            episode: usize,
            score: u64,
            steps: usize,
            exploratory_actions: usize,
        }
        let mut w = csv::Writer::from_path(path).map_err(HarnessError::csv(path))?;
        for (i, ((&score, &steps), &exploratory_actions)) in self
            .scores
            .iter()
            .zip(&self.steps)
            .zip(&self.exploratory)
            .enumerate()
        {
            w.serialize(Row {
                episode: i,
                score,
                steps,
                exploratory_actions,
            })
            .map_err(HarnessError::csv(path))?;
        }
        w.flush().map_err(HarnessError::io(path))
    }
}

/// `n` episodes with learning switched off, episode `i` drawing from the
/// evaluation streams of `seed` at index `i`. Episodes run in parallel and
/// come back in index order.
pub fn rollouts(
    config: &AgentConfig,
    net: &Network,
    n: u64,
    policy: PolicySpec,
    seed: u64,
) -> Result<Vec<EpisodeRecord>, HarnessError> {
    let frozen = LearnerConfig {
        alpha: 0.0,
        ..config.learner_config()
    };
    let learner = Learner::new(net.clone(), frozen)?;
    let task = Task::new(config);
    task.check(&learner)?;
    let selection = policy.resolve(config.final_tau());
    let max_steps = config.max_steps();
    (0..n)
        .into_par_iter()
        .map_init(
            || (learner.clone(), task.clone()),
            |(learner, task), i| {
                run_episode(learner, task, &selection, seed, Phase::Eval, i, max_steps)
                    .map_err(|source| HarnessError::Diverged { episode: i, source })
            },
        )
        .collect()
}

pub fn evaluate(
    checkpoint: &Checkpoint,
    n: u64,
    policy: PolicySpec,
    seed: u64,
) -> Result<EvalStats, HarnessError> {
    let net = checkpoint.network()?;
    let records = rollouts(&checkpoint.config, &net, n, policy, seed)?;
    Ok(EvalStats::from_records(&policy.to_string(), &records))
}
