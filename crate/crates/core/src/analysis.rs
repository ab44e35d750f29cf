//! Post-hoc analysis: how well values predict discounted returns, and how
//! softmax compares with epsilon-greedy selection on a trained agent.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::algorithms::EpisodeRecord;
use crate::harness::{rollouts, Checkpoint, EvalStats, HarnessError};
use crate::policy::PolicySpec;

/// Per-step discounted returns `R_t = r_t + gamma * R_{t+1}` of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub returns: Vec<f64>,
}

impl ReturnSeries {
    /// Episode length `T`.
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

pub fn discounted_returns(rewards: &[f64], gamma: f64) -> ReturnSeries {
    assert!(!rewards.is_empty(), "no rewards to discount");
    assert!((0.0..=1.0).contains(&gamma), "gamma must lie in [0, 1]");
    let mut returns = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (r, out) in rewards.iter().zip(returns.iter_mut()).rev() {
        acc = r + gamma * acc;
        *out = acc;
    }
    ReturnSeries { returns }
}

/// `(1/T) sum_t (V(s_t) - R_t)`.
pub fn normalized_value_gap(values: &[f64], returns: &ReturnSeries) -> f64 {
    assert_eq!(
        values.len(),
        returns.len(),
        "values and returns differ in length"
    );
    values
        .iter()
        .zip(&returns.returns)
        .map(|(v, r)| v - r)
        .sum::<f64>()
        / values.len() as f64
}

/// `(1/T) sum_t |V(s_t) - R_t|`.
pub fn mean_abs_value_gap(values: &[f64], returns: &ReturnSeries) -> f64 {
    assert_eq!(
        values.len(),
        returns.len(),
        "values and returns differ in length"
    );
    values
        .iter()
        .zip(&returns.returns)
        .map(|(v, r)| (v - r).abs())
        .sum::<f64>()
        / values.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("a line needs at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("all x values are equal")]
    Degenerate,
}

/// Ordinary least squares.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<LinearFit, FitError> {
    if points.len() < 2 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(FitError::Degenerate);
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub episode: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub gap: f64,
    pub abs_gap: f64,
}

pub fn value_gap_table(records: &[EpisodeRecord], gamma: f64) -> Vec<GapRow> {
    records
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.is_empty())
        .map(|(episode, r)| {
            let returns = discounted_returns(&r.rewards(), gamma);
            let values = r.values();
            GapRow {
                episode,
                t: r.len(),
                gap: normalized_value_gap(&values, &returns),
                abs_gap: mean_abs_value_gap(&values, &returns),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueReport {
    pub rows: Vec<GapRow>,
    pub fit: Result<LinearFit, FitError>,
}

/// Gap of every rollout against episode length, fitted with a line.
pub fn value_accuracy_report(
    checkpoint: &Checkpoint,
    n: u64,
    policy: PolicySpec,
    seed: u64,
) -> Result<ValueReport, HarnessError> {
    let net = checkpoint.network()?;
    let records = rollouts(&checkpoint.config, &net, n, policy, seed)?;
    let rows = value_gap_table(&records, checkpoint.config.gamma);
    let fit = linear_fit(&rows.iter().map(|r| (r.t as f64, r.gap)).collect::<Vec<_>>());
    Ok(ValueReport { rows, fit })
}

/// Evaluates every policy on the same evaluation streams.
pub fn selection_comparison(
    checkpoint: &Checkpoint,
    policies: &[PolicySpec],
    n: u64,
    seed: u64,
) -> Result<Vec<EvalStats>, HarnessError> {
    let net = checkpoint.network()?;
    policies
        .iter()
        .map(|&p| {
            let records = rollouts(&checkpoint.config, &net, n, p, seed)?;
            Ok(EvalStats::from_records(&p.to_string(), &records))
        })
        .collect()
}

pub fn write_value_gap_csv(rows: &[GapRow], path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(HarnessError::csv(path))?;
    if rows.is_empty() {
        w.write_record(["episode", "T", "gap", "abs_gap"])
            .map_err(HarnessError::csv(path))?;
    }
    for r in rows {
        w.serialize(r).map_err(HarnessError::csv(path))?;
    }
    w.flush().map_err(HarnessError::io(path))
}

pub fn write_fit(fit: &Result<LinearFit, FitError>, path: &Path) -> Result<(), HarnessError> {
    let text = match fit {
        Ok(f) => format!("slope = {}\nintercept = {}\n", f.slope, f.intercept),
        Err(e) => format!("error = {e}\n"),
    };
    fs::write(path, text).map_err(HarnessError::io(path))
}

pub fn write_selection_csv(stats: &[EvalStats], path: &Path) -> Result<(), HarnessError> {
    #[derive(Serialize)]
    struct Row<'a> {
        policy: &'a str,
        mean_score: f64,
        sd: f64,
        exploratory_mean: f64,
    }
    let mut w = csv::Writer::from_path(path).map_err(HarnessError::csv(path))?;
    for s in stats {
        w.serialize(Row {
            policy: &s.policy,
            mean_score: s.mean,
            sd: s.sd,
            exploratory_mean: s.exploratory_mean(),
        })
        .map_err(HarnessError::csv(path))?;
    }
    w.flush().map_err(HarnessError::io(path))
}
