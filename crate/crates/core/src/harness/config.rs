//! Run configuration, presets and the flat `key = value` config format.
//!
//! Every key in a config file is also a `train` flag, and the manifest
//! written into each run directory uses the same format, so a manifest can
//! be fed back in to repeat a run.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::algorithms::{Algorithm, LearnerConfig};
use crate::env::{BoardEncoding, TabularMdp, TetrisVariant};
use crate::features::EncodingLayout;
use crate::network::{ArchitectureSpec, Shape};
use crate::policy::{PolicySpec, SoftmaxSchedule};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: String, line: usize },
    #[error("unknown preset `{0}` (expected sz-shallow, sz-deep, tetris10, test-mdp or sz-sarsa)")]
    UnknownPreset(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Sz,
    Tetris10,
    TestMdp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Linear,
    Shallow,
    Deep,
}

macro_rules! named_enum {
    ($t:ty, $err:literal, $($v:path => $s:literal),+ $(,)?) => {
        impl $t {
            pub fn name(self) -> &'static str {
                match self { $($v => $s),+ }
            }
        }

        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $t {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s.trim() {
                    $($s => Ok($v),)+
                    _ => Err(format!($err)),
                }
            }
        }
    };
}

named_enum!(Variant, "expected sz, tetris10 or test-mdp",
    Variant::Sz => "sz", Variant::Tetris10 => "tetris10", Variant::TestMdp => "test-mdp");
named_enum!(Architecture, "expected linear, shallow or deep",
    Architecture::Linear => "linear", Architecture::Shallow => "shallow", Architecture::Deep => "deep");

impl Variant {
    pub fn tetris(self) -> Option<TetrisVariant> {
        match self {
            Variant::Sz => Some(TetrisVariant::Sz),
            Variant::Tetris10 => Some(TetrisVariant::Tetris10),
            Variant::TestMdp => None,
        }
    }
}

/// States in the test chain.
pub const TEST_MDP_STATES: usize = 5;

pub fn test_mdp() -> TabularMdp {
    TabularMdp::chain(TEST_MDP_STATES)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub variant: Variant,
    pub algorithm: Algorithm,
    pub architecture: Architecture,
    /// Hidden units of the shallow architecture.
    pub hidden: usize,
    /// Hidden (dense) activation.
    pub activation: ActivationKind,
    /// Convolution activation of the deep architecture.
    pub conv_activation: ActivationKind,
    pub alpha: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub tau0: f64,
    pub tau_k: f64,
    pub episodes: u64,
    pub seed: u64,
    pub log_every: u64,
    /// 0 writes only the initial and final checkpoints.
    pub checkpoint_every: u64,
    /// Hole divisor of the shaped Tetris reward.
    pub reward_divisor: f64,
    /// Episode step cap, 0 for none.
    pub max_steps: u64,
    /// Adds a current-piece channel to raw-board Sarsa inputs.
    pub include_piece: bool,
    pub eval_episodes: u64,
    pub eval_policy: String,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig::preset("sz-shallow").expect("built-in preset")
    }
}

/// Keys in manifest order.
pub const KEYS: &[&str] = &[
    "variant",
    "algorithm",
    "architecture",
    "hidden",
    "activation",
    "conv-activation",
    "alpha",
    "gamma",
    "lambda",
    "tau0",
    "tau-k",
    "episodes",
    "seed",
    "log-every",
    "checkpoint-every",
    "reward-divisor",
    "max-steps",
    "include-piece",
    "eval-episodes",
    "eval-policy",
];

pub const PRESETS: &[&str] = &["sz-shallow", "sz-deep", "tetris10", "test-mdp", "sz-sarsa"];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: e.to_string(),
        })
}

impl AgentConfig {
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let sz = AgentConfig {
            variant: Variant::Sz,
            algorithm: Algorithm::TdLambda,
            architecture: Architecture::Shallow,
            hidden: 50,
            activation: ActivationKind::Dsilu,
            conv_activation: ActivationKind::Silu,
            alpha: 0.001,
            gamma: 0.99,
            lambda: 0.55,
            tau0: 0.5,
            tau_k: 0.00025,
            episodes: 200_000,
            seed: 1,
            log_every: 1000,
            checkpoint_every: 10_000,
            reward_divisor: 33.0,
            max_steps: 0,
            include_piece: false,
            eval_episodes: 1000,
            eval_policy: "softmax".to_string(),
        };
        Ok(match name {
            "sz-shallow" => sz,
            "sz-deep" => AgentConfig {
                architecture: Architecture::Deep,
                alpha: 0.0001,
                ..sz
            },
            "tetris10" => AgentConfig {
                variant: Variant::Tetris10,
                hidden: 250,
                episodes: 400_000,
                reward_divisor: 16.5,
                ..sz
            },
            "sz-sarsa" => AgentConfig {
                algorithm: Algorithm::SarsaLambda,
                lambda: 0.8,
                tau_k: 0.0005,
                ..sz
            },
            "test-mdp" => AgentConfig {
                variant: Variant::TestMdp,
                algorithm: Algorithm::SarsaLambda,
                architecture: Architecture::Linear,
                hidden: 10,
                activation: ActivationKind::Silu,
                alpha: 0.05,
                gamma: 0.9,
                lambda: 0.5,
                tau0: 0.5,
                tau_k: 0.005,
                episodes: 20_000,
                log_every: 1000,
                checkpoint_every: 0,
                max_steps: 200,
                eval_episodes: 100,
                ..sz
            },
            other => return Err(ConfigError::UnknownPreset(other.to_string())),
        })
    }

    /// Sets one key. Keys may use `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let k = key.trim().replace('_', "-");
        let k = k.as_str();
        let value = value.trim();
        match k {
            "variant" => self.variant = parse(k, value)?,
            "algorithm" => self.algorithm = parse(k, value)?,
            "architecture" => self.architecture = parse(k, value)?,
            "hidden" => self.hidden = parse(k, value)?,
            "activation" => self.activation = parse(k, value)?,
            "conv-activation" => self.conv_activation = parse(k, value)?,
            "alpha" => self.alpha = parse(k, value)?,
            "gamma" => self.gamma = parse(k, value)?,
            "lambda" => self.lambda = parse(k, value)?,
            "tau0" => self.tau0 = parse(k, value)?,
            "tau-k" => self.tau_k = parse(k, value)?,
            "episodes" => self.episodes = parse(k, value)?,
            "seed" => self.seed = parse(k, value)?,
            "log-every" => self.log_every = parse(k, value)?,
            "checkpoint-every" => self.checkpoint_every = parse(k, value)?,
            "reward-divisor" => self.reward_divisor = parse(k, value)?,
            "max-steps" => self.max_steps = parse(k, value)?,
            "include-piece" => self.include_piece = parse(k, value)?,
            "eval-episodes" => self.eval_episodes = parse(k, value)?,
            "eval-policy" => {
                parse::<PolicySpec>(k, value)?;
                self.eval_policy = value.to_string();
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let k = key.trim().replace('_', "-");
        Some(match k.as_str() {
            "variant" => self.variant.to_string(),
            "algorithm" => self.algorithm.to_string(),
            "architecture" => self.architecture.to_string(),
            "hidden" => self.hidden.to_string(),
            "activation" => self.activation.to_string(),
            "conv-activation" => self.conv_activation.to_string(),
            "alpha" => self.alpha.to_string(),
            "gamma" => self.gamma.to_string(),
            "lambda" => self.lambda.to_string(),
            "tau0" => self.tau0.to_string(),
            "tau-k" => self.tau_k.to_string(),
            "episodes" => self.episodes.to_string(),
            "seed" => self.seed.to_string(),
            "log-every" => self.log_every.to_string(),
            "checkpoint-every" => self.checkpoint_every.to_string(),
            "reward-divisor" => self.reward_divisor.to_string(),
            "max-steps" => self.max_steps.to_string(),
            "include-piece" => self.include_piece.to_string(),
            "eval-episodes" => self.eval_episodes.to_string(),
            "eval-policy" => self.eval_policy.clone(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines. `#` starts a comment. A `preset` key
    /// resets every field to that preset before later lines apply.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                path: origin.to_string(),
                line: i + 1,
            })?;
            if key.trim() == "preset" {
                *self = AgentConfig::preset(value.trim())?;
            } else {
                self.set(key, value)?;
            }
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Manifest text: every key, one per line, in [`KEYS`] order.
    pub fn to_manifest(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        self.learner_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.tau0 > 0.0 && self.tau0.is_finite()) {
            return bad(format!("tau0 must be positive, got {}", self.tau0));
        }
        if !(self.tau_k >= 0.0 && self.tau_k.is_finite()) {
            return bad(format!("tau-k must be non-negative, got {}", self.tau_k));
        }
        if self.log_every == 0 {
            return bad("log-every must be positive".into());
        }
        if self.architecture == Architecture::Shallow && self.hidden == 0 {
            return bad("hidden must be positive".into());
        }
        if !(self.reward_divisor > 0.0 && self.reward_divisor.is_finite()) {
            return bad(format!(
                "reward-divisor must be positive, got {}",
                self.reward_divisor
            ));
        }
        if self.variant == Variant::TestMdp && self.architecture == Architecture::Deep {
            return bad("the deep architecture needs a Tetris board".into());
        }
        if self.include_piece
            && !(self.architecture == Architecture::Deep
                && self.algorithm == Algorithm::SarsaLambda)
        {
            return bad("include-piece applies only to deep Sarsa(lambda) agents".into());
        }
        self.eval_policy
            .parse::<PolicySpec>()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.architecture_spec()
            .param_count()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn learner_config(&self) -> LearnerConfig {
        LearnerConfig {
            alpha: self.alpha,
            gamma: self.gamma,
            lambda: self.lambda,
            algorithm: self.algorithm,
        }
    }

    pub fn schedule(&self) -> SoftmaxSchedule {
        SoftmaxSchedule {
            tau0: self.tau0,
            tau_k: self.tau_k,
        }
    }

    /// Temperature used for the last training episode, or `tau0` when no
    /// episode is trained.
    pub fn final_tau(&self) -> f64 {
        self.schedule().tau(self.episodes.saturating_sub(1))
    }

    pub fn max_steps(&self) -> Option<usize> {
        (self.max_steps > 0).then_some(self.max_steps as usize)
    }

    pub fn board_encoding(&self) -> Option<BoardEncoding> {
        let tv = self.variant.tetris()?;
        Some(match self.architecture {
            Architecture::Deep => BoardEncoding::Raw {
                include_piece: self.include_piece,
            },
            _ => BoardEncoding::Features(EncodingLayout::for_variant(tv)),
        })
    }

    pub fn input_shape(&self) -> Shape {
        match (self.variant.tetris(), self.board_encoding()) {
            (Some(tv), Some(enc @ BoardEncoding::Raw { .. })) => {
                Shape::new(enc.channels(), tv.height(), tv.width())
            }
            (Some(tv), Some(enc)) => Shape::flat(enc.input_len(tv)),
            _ => Shape::flat(TEST_MDP_STATES + 1),
        }
    }

    pub fn output_len(&self) -> usize {
        match (self.algorithm, self.variant.tetris()) {
            (Algorithm::TdLambda, _) => 1,
            (Algorithm::SarsaLambda, Some(tv)) => tv.action_slots(),
            (Algorithm::SarsaLambda, None) => 2,
        }
    }

    pub fn architecture_spec(&self) -> ArchitectureSpec {
        let input = self.input_shape();
        let outputs = self.output_len();
        match self.architecture {
            Architecture::Linear => ArchitectureSpec::linear(input.len(), outputs),
            Architecture::Shallow => {
                ArchitectureSpec::shallow(input.len(), self.hidden, self.activation, outputs)
            }
            Architecture::Deep => {
                ArchitectureSpec::board_conv(input, self.conv_activation, self.activation, outputs)
            }
        }
    }
}
