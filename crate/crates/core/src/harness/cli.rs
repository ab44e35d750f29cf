//! Command-line interface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::config::AgentConfig;
use super::{evaluate, train, train_seeds, Checkpoint, HarnessError};
use crate::analysis::{
    selection_comparison, value_accuracy_report, write_fit, write_selection_csv,
    write_value_gap_csv,
};
use crate::env::tetris::{afterstate, enumerate_actions, shaped_reward_with};
use crate::env::{Board, PieceKind};
use crate::policy::PolicySpec;

#[derive(Debug, Parser)]
#[command(
    name = "silu-td",
    version,
    about = "TD(lambda) and Sarsa(lambda) agents for SZ-Tetris and 10x10 Tetris"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an agent and write a run directory.
    Train(Box<TrainArgs>),
    /// Evaluate a checkpoint with learning switched off.
    Evaluate(EvalArgs),
    /// Value-accuracy and action-selection reports for a checkpoint.
    Analyze(AnalyzeArgs),
    /// Print the afterstate(s) of placing a piece on an ASCII board.
    PlayFixture(FixtureArgs),
}

macro_rules! config_flags {
    ($($field:ident => $key:literal),+ $(,)?) => {
        /// Per-key overrides, applied after the preset and the config file.
        #[derive(Debug, Default, Args)]
        pub struct ConfigFlags {
            $(
                #[arg(long = $key, value_name = "VALUE")]
                pub $field: Option<String>,
            )+
        }

        impl ConfigFlags {
            fn pairs(&self) -> Vec<(&'static str, &String)> {
                let mut out = Vec::new();
                $(if let Some(v) = &self.$field { out.push(($key, v)); })+
                out
            }
        }
    };
}

config_flags! {
    variant => "variant",
    algorithm => "algorithm",
    architecture => "architecture",
    hidden => "hidden",
    activation => "activation",
    conv_activation => "conv-activation",
    alpha => "alpha",
    gamma => "gamma",
    lambda => "lambda",
    tau0 => "tau0",
    tau_k => "tau-k",
    episodes => "episodes",
    log_every => "log-every",
    checkpoint_every => "checkpoint-every",
    reward_divisor => "reward-divisor",
    max_steps => "max-steps",
    include_piece => "include-piece",
    eval_episodes => "eval-episodes",
    eval_policy => "eval-policy",
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// sz-shallow, sz-deep, tetris10, test-mdp or sz-sarsa.
    #[arg(long)]
    pub preset: Option<String>,
    /// Flat `key = value` file; keys are the flag names below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Comma-separated seeds, one run each in OUT_DIR/seed-N.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub flags: ConfigFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Defaults to the checkpoint's eval-episodes.
    #[arg(long)]
    pub episodes: Option<u64>,
    /// softmax, softmax:<tau>, greedy or epsilon:<e>. Defaults to the
    /// checkpoint's eval-policy.
    #[arg(long)]
    pub policy: Option<PolicySpec>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Directory for eval.csv; defaults to the checkpoint's directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub episodes: Option<u64>,
    /// Policy of the value-accuracy rollouts.
    #[arg(long)]
    pub policy: Option<PolicySpec>,
    /// Comma-separated policies to compare; defaults to softmax at the final
    /// temperature and epsilon in {0, 0.001, 0.01, 0.05}.
    #[arg(long, value_delimiter = ',')]
    pub policies: Option<Vec<PolicySpec>>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    /// ASCII board, top row first, `#` occupied and `.` empty.
    #[arg(long)]
    pub board: PathBuf,
    #[arg(long)]
    pub piece: PieceKind,
    /// Rotation index; with --column places one piece, otherwise every
    /// placement is listed.
    #[arg(long, requires = "column")]
    pub rotation: Option<u8>,
    #[arg(long, requires = "rotation")]
    pub column: Option<u8>,
    #[arg(long, default_value_t = 33.0)]
    pub reward_divisor: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{0}")]
    Fixture(String),
}

impl From<super::ConfigError> for CliError {
    fn from(e: super::ConfigError) -> Self {
        CliError::Harness(e.into())
    }
}

impl From<super::CheckpointError> for CliError {
    fn from(e: super::CheckpointError) -> Self {
        CliError::Harness(e.into())
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn resolve_config(args: &TrainArgs) -> Result<AgentConfig, super::ConfigError> {
    let mut config = AgentConfig::preset(args.preset.as_deref().unwrap_or("sz-shallow"))?;
    if let Some(path) = &args.config {
        config.apply_file(path)?;
    }
    for (key, value) in args.flags.pairs() {
        config.set(key, value)?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train(args) => {
            let config = resolve_config(&args)?;
            match &args.seeds {
                Some(seeds) => {
                    for (seed, o) in seeds
                        .iter()
                        .zip(train_seeds(&config, seeds, &args.out_dir)?)
                    {
                        println!(
                            "seed {seed}: {} episodes, final window mean {:.2}",
                            o.rows.len(),
                            final_mean(&config, &o)
                        );
                    }
                }
                None => {
                    let o = train(&config, &args.out_dir)?;
                    println!(
                        "{} episodes, final window mean {:.2}",
                        o.rows.len(),
                        final_mean(&config, &o)
                    );
                    println!("checkpoint: {}", o.checkpoint.display());
                }
            }
            Ok(())
        }
        Command::Evaluate(args) => {
            let ck = Checkpoint::load(&args.checkpoint)?;
            let policy = policy_or_default(args.policy, &ck)?;
            let n = args.episodes.unwrap_or(ck.config.eval_episodes);
            let stats = evaluate(&ck, n, policy, args.seed)?;
            let dir = out_dir(args.out_dir, &args.checkpoint)?;
            stats.write_csv(&dir.join("eval.csv"))?;
            println!("policy = {}", stats.policy);
            println!("episodes = {n}");
            println!("mean_score = {}", stats.mean);
            println!("sd_score = {}", stats.sd);
            println!("exploratory_mean = {}", stats.exploratory_mean());
            Ok(())
        }
        Command::Analyze(args) => {
            let ck = Checkpoint::load(&args.checkpoint)?;
            let policy = policy_or_default(args.policy, &ck)?;
            let n = args.episodes.unwrap_or(ck.config.eval_episodes);
            let dir = out_dir(args.out_dir, &args.checkpoint)?;
            let report = value_accuracy_report(&ck, n, policy, args.seed)?;
            write_value_gap_csv(&report.rows, &dir.join("value_gap.csv"))?;
            write_fit(&report.fit, &dir.join("fit.txt"))?;
            let policies = args.policies.unwrap_or_else(PolicySpec::comparison_set);
            let stats = selection_comparison(&ck, &policies, n, args.seed)?;
            write_selection_csv(&stats, &dir.join("selection.csv"))?;
            match report.fit {
                Ok(f) => println!("gap fit: {:.6} T + {:.6}", f.slope, f.intercept),
                Err(e) => println!("gap fit: {e}"),
            }
            for s in &stats {
                println!(
                    "{}: mean {:.2} sd {:.2} exploratory {:.2}",
                    s.policy,
                    s.mean,
                    s.sd,
                    s.exploratory_mean()
                );
            }
            Ok(())
        }
        Command::PlayFixture(args) => play_fixture(&args),
    }
}

fn final_mean(config: &AgentConfig, o: &super::TrainOutcome) -> f64 {
    o.tail_mean(config.log_every as usize)
}

fn policy_or_default(policy: Option<PolicySpec>, ck: &Checkpoint) -> Result<PolicySpec, CliError> {
    match policy {
        Some(p) => Ok(p),
        None => ck
            .config
            .eval_policy
            .parse()
            .map_err(|e: crate::policy::ParsePolicyError| CliError::Fixture(e.to_string())),
    }
}

fn out_dir(dir: Option<PathBuf>, checkpoint: &Path) -> Result<PathBuf, HarnessError> {
    let dir = dir.unwrap_or_else(|| {
        checkpoint
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
    });
    let dir = if dir.as_os_str().is_empty() {
        PathBuf::from(".")
    } else {
        dir
    };
    std::fs::create_dir_all(&dir).map_err(HarnessError::io(&dir))?;
    Ok(dir)
}

fn play_fixture(args: &FixtureArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.board)
        .map_err(|e| CliError::Fixture(format!("cannot read {}: {e}", args.board.display())))?;
    let board = Board::from_ascii(&text).map_err(|e| CliError::Fixture(e.to_string()))?;
    let placements = enumerate_actions(board.width(), args.piece);
    let chosen: Vec<_> = match (args.rotation, args.column) {
        (Some(rotation), Some(column)) => {
            let p = placements
                .iter()
                .copied()
                .find(|p| p.rotation == rotation && p.column == column)
                .ok_or_else(|| {
                    CliError::Fixture(format!(
                        "piece {} has no placement at rotation {rotation}, column {column}",
                        args.piece
                    ))
                })?;
            vec![p]
        }
        _ => placements,
    };
    for p in chosen {
        let res = afterstate(&board, args.piece, p);
        println!(
            "piece {} rotation {} column {}: rows_cleared = {} terminal = {} holes = {} reward = {}",
            args.piece,
            p.rotation,
            p.column,
            res.rows_cleared,
            res.terminal,
            res.board.count_holes(),
            shaped_reward_with(&res.board, args.reward_divisor)
        );
        print!("{}", res.board.to_ascii_with_overflow());
        println!();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn train_args(extra: &[&str]) -> TrainArgs {
        let mut argv = vec!["silu-td", "train", "--out-dir", "x"];
        argv.extend_from_slice(extra);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::Train(a) => *a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn flags_override_preset_and_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        std::fs::write(&file, "preset = tetris10\nalpha = 0.002\nseed = 4\n").unwrap();
        let args = train_args(&[
            "--config",
            file.to_str().unwrap(),
            "--alpha",
            "0.003",
            "--seed",
            "9",
        ]);
        let c = resolve_config(&args).unwrap();
        assert_eq!(c.reward_divisor, 16.5);
        assert_eq!((c.alpha, c.seed), (0.003, 9));
        let c = resolve_config(&train_args(&["--preset", "tetris10"])).unwrap();
        assert_eq!(c.reward_divisor, 16.5);
        assert!(resolve_config(&train_args(&["--gamma", "2"])).is_err());
    }

    #[test]
    fn usage_errors_exit_nonzero() {
        assert_eq!(run(["silu-td", "fly"]), 2);
        assert_eq!(
            run(["silu-td", "train", "--out-dir", "x", "--colour", "red"]),
            2
        );
        assert_eq!(
            run([
                "silu-td",
                "evaluate",
                "--checkpoint",
                "/nonexistent/ck.json"
            ]),
            1
        );
        assert!(Cli::try_parse_from([
            "silu-td",
            "train",
            "--out-dir",
            "x",
            "--seed",
            "1",
            "--seeds",
            "1,2"
        ])
        .is_err());
    }
}
