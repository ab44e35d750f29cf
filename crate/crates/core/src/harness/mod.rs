//! Experiment orchestration: configs, checkpoints, training and evaluation
//! runs, and the command-line interface.
//!
//! Every random draw comes from a [`crate::rng::stream_rng`] stream indexed
//! by episode, so a run is a pure function of its config and seed.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod evaluate;
pub mod train;

use std::path::PathBuf;

use crate::algorithms::{
    run_episode_sarsa, run_episode_td, Algorithm, EpisodeError, EpisodeRecord, Learner,
    LearnerError,
};
use crate::env::{TabularMdp, TetrisEnv};
use crate::policy::Selection;
use crate::rng::{stream_rng, Stream};

pub use checkpoint::{Checkpoint, CheckpointError};
pub use config::{AgentConfig, Architecture, ConfigError, Variant};
pub use evaluate::{evaluate, rollouts, EvalStats};
pub use train::{train, train_seeds, TrainOutcome};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("episode {episode}: {source}")]
    Diverged { episode: u64, source: EpisodeError },
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>) -> impl FnOnce(csv::Error) -> HarnessError {
        let path = path.into();
        move |source| HarnessError::Csv { path, source }
    }
}

/// The environment a config trains on.
#[derive(Debug, Clone)]
pub enum Task {
    Tetris(TetrisEnv),
    Mdp(TabularMdp),
}

impl Task {
    pub fn new(config: &AgentConfig) -> Self {
        match (config.variant.tetris(), config.board_encoding()) {
            (Some(tv), Some(enc)) => Task::Tetris(TetrisEnv::new(tv, enc, config.reward_divisor)),
            _ => Task::Mdp(config::test_mdp()),
        }
    }

    /// Fails when the network does not fit this task under `algorithm`.
    pub fn check(&self, learner: &Learner) -> Result<(), LearnerError> {
        use crate::algorithms::{check_sarsa_shapes, check_td_shapes};
        match (self, learner.config().algorithm) {
            (Task::Tetris(env), Algorithm::TdLambda) => check_td_shapes(learner, env),
            (Task::Tetris(env), Algorithm::SarsaLambda) => check_sarsa_shapes(learner, env),
            (Task::Mdp(env), Algorithm::TdLambda) => check_td_shapes(learner, env),
            (Task::Mdp(env), Algorithm::SarsaLambda) => check_sarsa_shapes(learner, env),
        }
    }
}

/// Which pair of streams an episode draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// Runs episode `index` of a phase with its own spawn and policy streams.
pub fn run_episode(
    learner: &mut Learner,
    task: &mut Task,
    selection: &Selection,
    seed: u64,
    phase: Phase,
    index: u64,
    max_steps: Option<usize>,
) -> Result<EpisodeRecord, EpisodeError> {
    let (spawn, policy) = match phase {
        Phase::Train => (Stream::Spawn, Stream::Policy),
        Phase::Eval => (Stream::EvalSpawn, Stream::EvalPolicy),
    };
    let mut env_rng = stream_rng(seed, spawn, index);
    let mut policy_rng = stream_rng(seed, policy, index);
    let algorithm = learner.config().algorithm;
    match (task, algorithm) {
        (Task::Tetris(env), Algorithm::TdLambda) => run_episode_td(
            learner,
            env,
            selection,
            &mut env_rng,
            &mut policy_rng,
            max_steps,
        ),
        (Task::Tetris(env), Algorithm::SarsaLambda) => run_episode_sarsa(
            learner,
            env,
            selection,
            &mut env_rng,
            &mut policy_rng,
            max_steps,
        ),
        (Task::Mdp(env), Algorithm::TdLambda) => run_episode_td(
            learner,
            env,
            selection,
            &mut env_rng,
            &mut policy_rng,
            max_steps,
        ),
        (Task::Mdp(env), Algorithm::SarsaLambda) => run_episode_sarsa(
            learner,
            env,
            selection,
            &mut env_rng,
            &mut policy_rng,
            max_steps,
        ),
    }
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
