//! The training loop and its run directory.
//!
//! ```text
//! out-dir/
//!   config.txt                 resolved config, reusable with --config
//!   log.csv                    one row per episode
//!   summary.csv                one row per log-every window
//!   checkpoint-ep{N}.json      after N episodes (N = 0 and every checkpoint-every)
//!   checkpoint-final.json      after the last episode
//!   stats.txt                  final-window statistics
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{mean_sd, run_episode, AgentConfig, Checkpoint, HarnessError, Phase, Task};
use crate::algorithms::{EpisodeRecord, Learner};
use crate::network::Network;
use crate::policy::Selection;
use crate::rng::{stream_rng, Stream};

pub const LOG_HEADER: [&str; 7] = [
    "episode",
    "score",
    "steps",
    "shaped_return",
    "mean_value_estimate",
    "tau",
    "exploratory_actions",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub episode: u64,
    pub score: u64,
    pub steps: usize,
    pub shaped_return: f64,
    pub mean_value_estimate: f64,
    pub tau: f64,
    pub exploratory_actions: usize,
}

impl LogRow {
    pub fn new(episode: u64, tau: f64, rec: &EpisodeRecord) -> Self {
        LogRow {
            episode,
            score: rec.score(),
            steps: rec.len(),
            shaped_return: rec.shaped_return(),
            mean_value_estimate: rec.mean_value(),
            tau,
            exploratory_actions: rec.exploratory_actions(),
        }
    }
}

/// Aggregate over episodes `first..=last`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub first_episode: u64,
    pub last_episode: u64,
    pub episodes: usize,
    pub mean_score: f64,
    pub sd_score: f64,
    pub mean_steps: f64,
    pub mean_exploratory: f64,
    pub tau: f64,
}

impl SummaryRow {
    pub fn from_rows(rows: &[LogRow]) -> Self {
        let scores: Vec<f64> = rows.iter().map(|r| r.score as f64).collect();
        let (mean_score, sd_score) = mean_sd(&scores);
        let n = rows.len() as f64;
        SummaryRow {
            first_episode: rows.first().map_or(0, |r| r.episode),
            last_episode: rows.last().map_or(0, |r| r.episode),
            episodes: rows.len(),
            mean_score,
            sd_score,
            mean_steps: rows.iter().map(|r| r.steps as f64).sum::<f64>() / n,
            mean_exploratory: rows
                .iter()
                .map(|r| r.exploratory_actions as f64)
                .sum::<f64>()
                / n,
            tau: rows.last().map_or(0.0, |r| r.tau),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub rows: Vec<LogRow>,
    pub summaries: Vec<SummaryRow>,
    pub network: Network,
    /// Last checkpoint written.
    pub checkpoint: PathBuf,
}

impl TrainOutcome {
    /// Mean score over the first `n` logged episodes.
    pub fn head_mean(&self, n: usize) -> f64 {
        mean_sd(
            &self
                .rows
                .iter()
                .take(n)
                .map(|r| r.score as f64)
                .collect::<Vec<_>>(),
        )
        .0
    }

    /// Mean score over the last `n` logged episodes.
    pub fn tail_mean(&self, n: usize) -> f64 {
        let skip = self.rows.len().saturating_sub(n);
        mean_sd(
            &self.rows[skip..]
                .iter()
                .map(|r| r.score as f64)
                .collect::<Vec<_>>(),
        )
        .0
    }
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(HarnessError::io(dir))
}

fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(HarnessError::io(path))
}

pub fn checkpoint_path(dir: &Path, episodes: u64) -> PathBuf {
    dir.join(format!("checkpoint-ep{episodes}.json"))
}

pub fn final_checkpoint_path(dir: &Path) -> PathBuf {
    dir.join("checkpoint-final.json")
}

/// Fresh network for a config, drawn from the seed's init stream.
pub fn initial_network(config: &AgentConfig) -> Result<Network, HarnessError> {
    Network::init(
        config.architecture_spec(),
        &mut stream_rng(config.seed, Stream::Init, 0),
    )
    .map_err(|e| super::ConfigError::Invalid(e.to_string()).into())
}

/// Trains from a fresh network and writes the run directory.
pub fn train(config: &AgentConfig, out_dir: &Path) -> Result<TrainOutcome, HarnessError> {
    config.validate()?;
    create_dir(out_dir)?;
    write_file(&out_dir.join("config.txt"), &config.to_manifest())?;

    let net = initial_network(config)?;
    let mut learner = Learner::new(net, config.learner_config())?;
    let mut task = Task::new(config);
    task.check(&learner)?;

    let mut checkpoint = checkpoint_path(out_dir, 0);
    Checkpoint::new(config, learner.network(), 0).save(&checkpoint)?;

    let log_path = out_dir.join("log.csv");
    let mut log = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(&log_path)
        .map_err(HarnessError::csv(&log_path))?;
    log.write_record(LOG_HEADER)
        .map_err(HarnessError::csv(&log_path))?;
    let summary_path = out_dir.join("summary.csv");
    let mut summary =
        csv::Writer::from_path(&summary_path).map_err(HarnessError::csv(&summary_path))?;

    let schedule = config.schedule();
    let mut rows = Vec::with_capacity(config.episodes as usize);
    let mut summaries = Vec::new();
    let mut window_start = 0;
    for i in 0..config.episodes {
        let tau = schedule.tau(i);
        let selection = Selection::Softmax { tau };
        let rec = run_episode(
            &mut learner,
            &mut task,
            &selection,
            config.seed,
            Phase::Train,
            i,
            config.max_steps(),
        )
        .map_err(|source| {
            let _ = write_file(
                &out_dir.join("stats.txt"),
                &format!("status = diverged\nepisode = {i}\n"),
            );
            HarnessError::Diverged { episode: i, source }
        })?;
        let row = LogRow::new(i, tau, &rec);
        log.serialize(&row).map_err(HarnessError::csv(&log_path))?;
        rows.push(row);

        let done = i + 1;
        if done % config.log_every == 0 || done == config.episodes {
            let s = SummaryRow::from_rows(&rows[window_start..]);
            summary
                .serialize(&s)
                .map_err(HarnessError::csv(&summary_path))?;
            summaries.push(s);
            window_start = rows.len();
        }
        if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 {
            checkpoint = checkpoint_path(out_dir, done);
            Checkpoint::new(config, learner.network(), done).save(&checkpoint)?;
        }
    }
    log.flush().map_err(HarnessError::io(&log_path))?;
    summary.flush().map_err(HarnessError::io(&summary_path))?;
    if config.episodes > 0 {
        checkpoint = final_checkpoint_path(out_dir);
        Checkpoint::new(config, learner.network(), config.episodes).save(&checkpoint)?;
    }

    let tail = &rows[rows.len().saturating_sub(config.log_every as usize)..];
    let (mean, sd) = mean_sd(&tail.iter().map(|r| r.score as f64).collect::<Vec<_>>());
    write_file(
        &out_dir.join("stats.txt"),
        &format!(
            "status = ok\nepisodes = {}\nfinal_tau = {}\nfinal_window = {}\nfinal_mean_score = {mean}\nfinal_sd_score = {sd}\ntotal_steps = {}\n",
            config.episodes,
            config.final_tau(),
            tail.len(),
            rows.iter().map(|r| r.steps as u64).sum::<u64>(),
        ),
    )?;

    Ok(TrainOutcome {
        dir: out_dir.to_path_buf(),
        rows,
        summaries,
        network: learner.into_network(),
        checkpoint,
    })
}

/// Trains one run per seed in `out_dir/seed-N`, concurrently, and writes
/// `seeds.csv` with each run's final-window statistics plus a pooled row.
pub fn train_seeds(
    config: &AgentConfig,
    seeds: &[u64],
    out_dir: &Path,
) -> Result<Vec<TrainOutcome>, HarnessError> {
    create_dir(out_dir)?;
    let results: Vec<Result<TrainOutcome, HarnessError>> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let cfg = AgentConfig {
                    seed,
                    ..config.clone()
                };
                let dir = out_dir.join(format!("seed-{seed}"));
                s.spawn(move || train(&cfg, &dir))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    });
    let outcomes = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    #[derive(Serialize)]
    struct SeedRow {
        seed: String,
        episodes: usize,
        mean_score: f64,
        sd_score: f64,
    }
    let window = config.log_every as usize;
    let path = out_dir.join("seeds.csv");
    let mut w = csv::Writer::from_path(&path).map_err(HarnessError::csv(&path))?;
    let mut pooled = Vec::new();
    for (seed, o) in seeds.iter().zip(&outcomes) {
        let tail: Vec<f64> = o.rows[o.rows.len().saturating_sub(window)..]
            .iter()
            .map(|r| r.score as f64)
            .collect();
        let (mean_score, sd_score) = mean_sd(&tail);
        w.serialize(SeedRow {
            seed: seed.to_string(),
            episodes: tail.len(),
            mean_score,
            sd_score,
        })
        .map_err(HarnessError::csv(&path))?;
        pooled.extend(tail);
    }
    let (mean_score, sd_score) = mean_sd(&pooled);
    w.serialize(SeedRow {
        seed: "pooled".into(),
        episodes: pooled.len(),
        mean_score,
        sd_score,
    })
    .map_err(HarnessError::csv(&path))?;
    w.flush().map_err(HarnessError::io(&path))?;
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> AgentConfig {
        AgentConfig {
            episodes: 25,
            log_every: 10,
            checkpoint_every: 20,
            ..AgentConfig::default()
        }
    }

    #[test]
    fn zero_episodes_write_an_empty_log_and_the_initial_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let out = train(
            &AgentConfig {
                episodes: 0,
                ..AgentConfig::default()
            },
            dir.path(),
        )
        .unwrap();
        assert!(out.rows.is_empty());
        let log = fs::read_to_string(dir.path().join("log.csv")).unwrap();
        assert_eq!(log, LOG_HEADER.join(",") + "\n");
        let cks: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n.starts_with("checkpoint"))
            .collect();
        assert_eq!(cks, vec!["checkpoint-ep0.json"]);
    }

    #[test]
    fn windows_match_the_log() {
        let dir = tempfile::tempdir().unwrap();
        let out = train(&quick(), dir.path()).unwrap();
        assert_eq!(out.rows.len(), 25);
        assert_eq!(out.summaries.len(), 3);
        assert_eq!(out.summaries[2].episodes, 5);
        let logged: Vec<LogRow> = csv::Reader::from_path(dir.path().join("log.csv"))
            .unwrap()
            .deserialize()
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(logged, out.rows);
        for s in &out.summaries {
            let scores: Vec<f64> = out.rows[s.first_episode as usize..=s.last_episode as usize]
                .iter()
                .map(|r| r.score as f64)
                .collect();
            let mean = scores.iter().sum::<f64>() / scores.len() as f64;
            assert!((mean - s.mean_score).abs() < 1e-9);
        }
        for name in [
            "checkpoint-ep0.json",
            "checkpoint-ep20.json",
            "checkpoint-final.json",
            "stats.txt",
            "config.txt",
        ] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        let ck = Checkpoint::load(&dir.path().join("checkpoint-final.json")).unwrap();
        assert_eq!(ck.episodes_trained, 25);
        assert_eq!(ck.network().unwrap(), out.network);
    }

    #[test]
    fn runs_are_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        train(&quick(), a.path()).unwrap();
        train(&quick(), b.path()).unwrap();
        for name in [
            "log.csv",
            "summary.csv",
            "checkpoint-final.json",
            "stats.txt",
            "config.txt",
        ] {
            assert_eq!(
                fs::read(a.path().join(name)).unwrap(),
                fs::read(b.path().join(name)).unwrap(),
                "{name}"
            );
        }
    }

    #[test]
    fn seed_list_runs_each_seed() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = AgentConfig {
            episodes: 5,
            log_every: 5,
            ..AgentConfig::preset("test-mdp").unwrap()
        };
        let outs = train_seeds(&cfg, &[1, 2], dir.path()).unwrap();
        assert_eq!(outs.len(), 2);
        assert!(dir.path().join("seed-2/log.csv").exists());
        let table = fs::read_to_string(dir.path().join("seeds.csv")).unwrap();
        assert_eq!(table.lines().count(), 4);
    }
}
