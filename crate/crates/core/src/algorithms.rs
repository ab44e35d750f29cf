//! TD(lambda) over afterstates and Sarsa(lambda), online with accumulating
//! eligibility traces.
//!
//! Per step the learner computes
//!
//! ```text
//! delta = r + gamma * V(next) - V(cur)        (V(next) = 0 at episode end)
//! e     = gamma * lambda * e + grad V(cur)
//! theta = theta + alpha * delta * e
//! ```
//!
//! with both values taken from the network before the step's update.
//!
//! For TD(lambda) the value of an afterstate includes the reward earned by
//! entering it, so `r` is the reward attached to the current afterstate and
//! `next` is the afterstate chosen after the following spawn. A terminal
//! afterstate is therefore trained towards its own reward.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Deref, DerefMut};
use std::str::FromStr;

use crate::env::{ActionValueEnv, AfterstateEnv, Candidate};
use crate::network::{ForwardCache, Network};
use crate::policy::ActionSelector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    TdLambda,
    SarsaLambda,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::TdLambda => "td-lambda",
            Algorithm::SarsaLambda => "sarsa-lambda",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("unknown algorithm `{0}` (expected td-lambda or sarsa-lambda)")]
pub struct ParseAlgorithmError(pub String);

impl FromStr for Algorithm {
    type Err = ParseAlgorithmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "td-lambda" | "td" => Ok(Algorithm::TdLambda),
            "sarsa-lambda" | "sarsa" => Ok(Algorithm::SarsaLambda),
            other => Err(ParseAlgorithmError(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnerError {
    #[error("{name} = {value} is out of range ({range})")]
    Range {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("network takes {network} inputs but the environment writes {env}")]
    InputMismatch { network: usize, env: usize },
    #[error("network has {network} outputs but the environment needs {env}")]
    OutputMismatch { network: usize, env: usize },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EpisodeError {
    #[error("learning diverged at step {step}: non-finite {what}")]
    Diverged { step: usize, what: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub algorithm: Algorithm,
}

impl LearnerConfig {
    /// `alpha = 0` is allowed and turns every update off.
    pub fn validate(&self) -> Result<(), LearnerError> {
        let check = |name, value: f64, ok: bool, range| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(LearnerError::Range { name, value, range })
            }
        };
        check("alpha", self.alpha, self.alpha >= 0.0, ">= 0")?;
        check(
            "gamma",
            self.gamma,
            (0.0..=1.0).contains(&self.gamma),
            "[0, 1]",
        )?;
        check(
            "lambda",
            self.lambda,
            (0.0..=1.0).contains(&self.lambda),
            "[0, 1]",
        )
    }
}

pub fn td_error_v(r: f64, gamma: f64, v_next: f64, v_cur: f64, terminal: bool) -> f64 {
    let bootstrap = if terminal { 0.0 } else { gamma * v_next };
    r + bootstrap - v_cur
}

/// Same as [`td_error_v`]; `q_next` is the value of the action actually
/// selected in the next state.
pub fn td_error_q(r: f64, gamma: f64, q_next: f64, q_cur: f64, terminal: bool) -> f64 {
    td_error_v(r, gamma, q_next, q_cur, terminal)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceVector(Vec<f64>);

impl TraceVector {
    pub fn zeros(len: usize) -> Self {
        TraceVector(vec![0.0; len])
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        TraceVector(v)
    }

    pub fn reset(&mut self) {
        self.0.fill(0.0);
    }

    pub fn decay(&mut self, factor: f64) {
        if factor == 0.0 {
            self.reset();
        } else if factor != 1.0 {
            self.0.iter_mut().for_each(|e| *e *= factor);
        }
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for TraceVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for TraceVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// `e = gamma * lambda * e + grad`.
pub fn update_traces(e: &mut TraceVector, gamma: f64, lambda: f64, grad: &[f64]) {
    assert_eq!(e.len(), grad.len(), "trace length mismatch");
    e.decay(gamma * lambda);
    for (x, g) in e.iter_mut().zip(grad) {
        *x += g;
    }
}

/// `theta = theta + alpha * delta * e`.
pub fn apply_td_update(params: &mut [f64], alpha: f64, delta: f64, e: &[f64]) {
    assert_eq!(params.len(), e.len(), "trace length mismatch");
    let step = alpha * delta;
    if step == 0.0 {
        return;
    }
    for (p, x) in params.iter_mut().zip(e) {
        *p += step * x;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub reward: f64,
    /// Value the network assigned to the chosen afterstate or action when
    /// it was selected.
    pub value: f64,
    pub exploratory: bool,
    pub points: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeRecord {
    pub steps: Vec<StepRecord>,
    /// True when the episode reached a terminal state rather than a step cap.
    pub terminated: bool,
}

impl EpisodeRecord {
    pub fn score(&self) -> u64 {
        self.steps.iter().map(|s| s.points as u64).sum()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.value).collect()
    }

    /// Undiscounted sum of rewards.
    pub fn shaped_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn mean_value(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().map(|s| s.value).sum::<f64>() / self.steps.len() as f64
    }

    pub fn exploratory_actions(&self) -> usize {
        self.steps.iter().filter(|s| s.exploratory).count()
    }
}

/// A network together with its traces and scratch buffers.
#[derive(Debug, Clone)]
pub struct Learner {
    net: Network,
    config: LearnerConfig,
    trace: TraceVector,
    cache: ForwardCache,
    cur: Vec<f64>,
    next: Vec<f64>,
    values: Vec<f64>,
}

impl Learner {
    pub fn new(net: Network, config: LearnerConfig) -> Result<Self, LearnerError> {
        config.validate()?;
        let n = net.param_count();
        let k = net.input_len();
        Ok(Learner {
            net,
            config,
            trace: TraceVector::zeros(n),
            cache: ForwardCache::default(),
            cur: vec![0.0; k],
            next: vec![0.0; k],
            values: Vec::new(),
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn into_network(self) -> Network {
        self.net
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn trace(&self) -> &TraceVector {
        &self.trace
    }

    fn learning(&self) -> bool {
        self.config.alpha != 0.0
    }

    /// Recomputes the value at `self.cur`, folds its gradient into the
    /// traces and applies the update. Returns the TD error.
    fn update(
        &mut self,
        output: usize,
        reward: f64,
        next_value: f64,
        terminal: bool,
        step: usize,
    ) -> Result<f64, EpisodeError> {
        let LearnerConfig {
            alpha,
            gamma,
            lambda,
            ..
        } = self.config;
        let v_cur = self.net.forward_into(&self.cur, &mut self.cache)[output];
        let delta = td_error_v(reward, gamma, next_value, v_cur, terminal);
        if !delta.is_finite() {
            return Err(EpisodeError::Diverged {
                step,
                what: "TD error",
            });
        }
        self.trace.decay(gamma * lambda);
        self.net
            .accumulate_gradient(&self.cur, &mut self.cache, output, 1.0, &mut self.trace);
        apply_td_update(self.net.params_mut(), alpha, delta, &self.trace);
        Ok(delta)
    }
}

fn check_finite(values: &[f64], step: usize) -> Result<(), EpisodeError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(EpisodeError::Diverged {
            step,
            what: "value estimate",
        })
    }
}

pub fn check_td_shapes<E: AfterstateEnv>(learner: &Learner, env: &E) -> Result<(), LearnerError> {
    let net = learner.network();
    if net.input_len() != env.input_len() {
        return Err(LearnerError::InputMismatch {
            network: net.input_len(),
            env: env.input_len(),
        });
    }
    if net.output_len() != 1 {
        return Err(LearnerError::OutputMismatch {
            network: net.output_len(),
            env: 1,
        });
    }
    Ok(())
}

pub fn check_sarsa_shapes<E: ActionValueEnv>(
    learner: &Learner,
    env: &E,
) -> Result<(), LearnerError> {
    let net = learner.network();
    if net.input_len() != env.input_len() {
        return Err(LearnerError::InputMismatch {
            network: net.input_len(),
            env: env.input_len(),
        });
    }
    if net.output_len() != env.output_len() {
        return Err(LearnerError::OutputMismatch {
            network: net.output_len(),
            env: env.output_len(),
        });
    }
    Ok(())
}

/// Scores every candidate afterstate into `learner.values`.
fn score_candidates<E: AfterstateEnv>(
    learner: &mut Learner,
    env: &E,
    cands: &[Candidate<E::Afterstate>],
    step: usize,
) -> Result<(), EpisodeError> {
    learner.values.clear();
    for c in cands {
        env.encode(&c.afterstate, &mut learner.next);
        let v = learner.net.forward_into(&learner.next, &mut learner.cache)[0];
        learner.values.push(v);
    }
    check_finite(&learner.values, step)
}

/// One episode of model-based TD(lambda) over afterstates. `max_steps`
/// caps the episode length; a capped episode skips its last update.
///
/// `env_rng` drives the environment and `policy_rng` the action choices.
pub fn run_episode_td<E, S, R1, R2>(
    learner: &mut Learner,
    env: &mut E,
    selector: &S,
    env_rng: &mut R1,
    policy_rng: &mut R2,
    max_steps: Option<usize>,
) -> Result<EpisodeRecord, EpisodeError>
where
    E: AfterstateEnv,
    S: ActionSelector,
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    debug_assert!(check_td_shapes(learner, env).is_ok());
    env.reset(env_rng);
    learner.trace.reset();
    let mut record = EpisodeRecord::default();
    let mut cands = Vec::new();
    env.candidates(&mut cands);
    score_candidates(learner, env, &cands, 0)?;
    let mut choice = selector.select(&learner.values, policy_rng);
    let mut chosen = cands.swap_remove(choice.index);
    let mut value = learner.values[choice.index];

    loop {
        let step = record.steps.len();
        record.steps.push(StepRecord {
            reward: chosen.reward,
            value,
            exploratory: choice.exploratory,
            points: chosen.points,
        });
        let capped = max_steps.is_some_and(|m| record.steps.len() >= m);
        if chosen.terminal {
            record.terminated = true;
        } else if capped {
            return Ok(record);
        }
        if learner.learning() {
            env.encode(&chosen.afterstate, &mut learner.cur);
        }
        let mut next = None;
        if !chosen.terminal {
            env.advance(&chosen.afterstate, env_rng);
            env.candidates(&mut cands);
            score_candidates(learner, env, &cands, step + 1)?;
            choice = selector.select(&learner.values, policy_rng);
            value = learner.values[choice.index];
            next = Some(cands.swap_remove(choice.index));
        }
        if learner.learning() {
            learner.update(0, chosen.reward, value, chosen.terminal, step)?;
        }
        match next {
            Some(n) => chosen = n,
            None => return Ok(record),
        }
    }
}

/// One episode of Sarsa(lambda). The network has one output per action
/// slot of the environment; only the slots valid in the current state are
/// offered to the selector.
pub fn run_episode_sarsa<E, S, R1, R2>(
    learner: &mut Learner,
    env: &mut E,
    selector: &S,
    env_rng: &mut R1,
    policy_rng: &mut R2,
    max_steps: Option<usize>,
) -> Result<EpisodeRecord, EpisodeError>
where
    E: ActionValueEnv,
    S: ActionSelector,
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    debug_assert!(check_sarsa_shapes(learner, env).is_ok());
    env.reset(env_rng);
    learner.trace.reset();
    let mut record = EpisodeRecord::default();

    let select = |learner: &mut Learner, env: &E, policy_rng: &mut R2, step| {
        env.encode_state(&mut learner.next);
        let slots = env.action_slots();
        let q = learner.net.forward_into(&learner.next, &mut learner.cache);
        learner.values.clear();
        learner.values.extend_from_slice(&q[slots.clone()]);
        check_finite(&learner.values, step)?;
        let choice = selector.select(&learner.values, policy_rng);
        Ok::<_, EpisodeError>((
            choice,
            slots.start + choice.index,
            learner.values[choice.index],
        ))
    };

    let (mut choice, mut slot, mut value) = select(learner, env, policy_rng, 0)?;
    loop {
        let step = record.steps.len();
        std::mem::swap(&mut learner.cur, &mut learner.next);
        let out = env.step(choice.index, env_rng);
        record.steps.push(StepRecord {
            reward: out.reward,
            value,
            exploratory: choice.exploratory,
            points: out.points,
        });
        record.terminated = out.terminal;
        if !out.terminal && max_steps.is_some_and(|m| record.steps.len() >= m) {
            return Ok(record);
        }
        let cur_slot = slot;
        let mut next_value = 0.0;
        if !out.terminal {
            (choice, slot, value) = select(learner, env, policy_rng, step + 1)?;
            next_value = value;
        }
        if learner.learning() {
            learner.update(cur_slot, out.reward, next_value, out.terminal, step)?;
        }
        if out.terminal {
            return Ok(record);
        }
    }
}
