//! Action selection: Boltzmann softmax with hyperbolic temperature
//! annealing, and epsilon-greedy for comparison.
//!
//! An action counts as exploratory when it differs from the greedy argmax
//! of the values it was chosen from. Argmax ties go to the lowest index.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// `tau(i) = tau0 / (1 + tau_k * i)` for episode index `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxSchedule {
    pub tau0: f64,
    pub tau_k: f64,
}

impl SoftmaxSchedule {
    pub fn new(tau0: f64, tau_k: f64) -> Self {
        assert!(
            tau0 > 0.0 && tau_k >= 0.0,
            "tau0 must be positive and tau_k non-negative"
        );
        SoftmaxSchedule { tau0, tau_k }
    }

    pub fn tau(&self, episode: u64) -> f64 {
        anneal_tau(self, episode)
    }
}

pub fn anneal_tau(schedule: &SoftmaxSchedule, episode: u64) -> f64 {
    schedule.tau0 / (1.0 + schedule.tau_k * episode as f64)
}

/// Boltzmann probabilities `exp(v / tau) / sum exp(v / tau)`, computed
/// after subtracting the maximum value.
pub fn softmax_probs(values: &[f64], tau: f64) -> Vec<f64> {
    assert!(!values.is_empty(), "softmax over an empty action set");
    assert!(tau > 0.0, "temperature must be positive");
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = values.iter().map(|&v| ((v - max) / tau).exp()).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p
}

/// Inverse-CDF draw over `dist` in index order.
pub fn sample<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the final cumulative sum
    dist.iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(dist.len() - 1)
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Greedy with probability `1 - epsilon`, otherwise uniform over all
/// actions. Returns the index and whether it was exploratory.
pub fn epsilon_greedy<R: Rng + ?Sized>(values: &[f64], epsilon: f64, rng: &mut R) -> (usize, bool) {
    assert!(
        !values.is_empty(),
        "epsilon-greedy over an empty action set"
    );
    let greedy = argmax(values);
    let u: f64 = rng.random();
    if u < epsilon {
        let i = rng.random_range(0..values.len());
        (i, i != greedy)
    } else {
        (greedy, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Choice {
    pub index: usize,
    pub exploratory: bool,
}

pub trait ActionSelector {
    fn select<R: Rng + ?Sized>(&self, values: &[f64], rng: &mut R) -> Choice;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Selection {
    Softmax { tau: f64 },
    EpsilonGreedy { epsilon: f64 },
}

impl ActionSelector for Selection {
    fn select<R: Rng + ?Sized>(&self, values: &[f64], rng: &mut R) -> Choice {
        match *self {
            Selection::Softmax { tau } => {
                let index = sample(&softmax_probs(values, tau), rng);
                Choice {
                    index,
                    exploratory: index != argmax(values),
                }
            }
            Selection::EpsilonGreedy { epsilon } => {
                let (index, exploratory) = epsilon_greedy(values, epsilon, rng);
                Choice { index, exploratory }
            }
        }
    }
}

/// Evaluation-time policy description. `SoftmaxFinal` resolves to the
/// temperature the annealing schedule reached at the end of training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicySpec {
    SoftmaxFinal,
    Softmax(f64),
    EpsilonGreedy(f64),
}

impl PolicySpec {
    pub fn resolve(&self, final_tau: f64) -> Selection {
        match *self {
            PolicySpec::SoftmaxFinal => Selection::Softmax { tau: final_tau },
            PolicySpec::Softmax(tau) => Selection::Softmax { tau },
            PolicySpec::EpsilonGreedy(epsilon) => Selection::EpsilonGreedy { epsilon },
        }
    }

    /// The comparison set: softmax at the final temperature and epsilon in
    /// {0, 0.001, 0.01, 0.05}.
    pub fn comparison_set() -> Vec<PolicySpec> {
        vec![
            PolicySpec::SoftmaxFinal,
            PolicySpec::EpsilonGreedy(0.0),
            PolicySpec::EpsilonGreedy(0.001),
            PolicySpec::EpsilonGreedy(0.01),
            PolicySpec::EpsilonGreedy(0.05),
        ]
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::SoftmaxFinal => write!(f, "softmax"),
            PolicySpec::Softmax(t) => write!(f, "softmax:{t}"),
            PolicySpec::EpsilonGreedy(e) => write!(f, "epsilon:{e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("bad policy `{0}` (expected softmax, softmax:<tau>, greedy or epsilon:<e>)")]
pub struct ParsePolicyError(pub String);

impl FromStr for PolicySpec {
    type Err = ParsePolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParsePolicyError(s.to_string());
        let s = s.trim();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a.parse::<f64>().map_err(|_| bad())?)),
            None => (s, None),
        };
        match (head, arg) {
            ("softmax", None) => Ok(PolicySpec::SoftmaxFinal),
            ("softmax", Some(t)) if t > 0.0 => Ok(PolicySpec::Softmax(t)),
            ("greedy", None) => Ok(PolicySpec::EpsilonGreedy(0.0)),
            ("epsilon", Some(e)) if (0.0..=1.0).contains(&e) => Ok(PolicySpec::EpsilonGreedy(e)),
            _ => Err(bad()),
        }
    }
}
