//! Small tabular MDPs with exact dynamic-programming solutions, used to
//! check the learners against known values.

use std::ops::Range;

use rand::Rng;

use super::{ActionValueEnv, AfterstateEnv, Candidate, Environment, Outcome};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub prob: f64,
    /// `None` ends the episode.
    pub next: Option<usize>,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    start: usize,
    /// `table[state][action]` lists the outcomes of taking `action`.
    table: Vec<Vec<Vec<Transition>>>,
    state: usize,
}

impl TabularMdp {
    pub fn new(start: usize, table: Vec<Vec<Vec<Transition>>>) -> Self {
        let n_states = table.len();
        assert!(n_states > 0 && start < n_states);
        let n_actions = table[0].len();
        for row in &table {
            assert_eq!(
                row.len(),
                n_actions,
                "every state needs the same action count"
            );
            for outcomes in row {
                let total: f64 = outcomes.iter().map(|t| t.prob).sum();
                assert!(
                    (total - 1.0).abs() < 1e-12,
                    "outcome probabilities must sum to 1"
                );
                assert!(outcomes.iter().all(|t| t.next.is_none_or(|s| s < n_states)));
            }
        }
        TabularMdp {
            n_states,
            n_actions,
            start,
            table,
            state: start,
        }
    }

    /// Chain of `n` states with actions 0 = advance and 1 = stay.
    ///
    /// ```text
    ///   advance:  0 -> 1 -> ... -> n-1 -> end   (reward 1 on reaching end)
    ///   stay:     s -> s                        (reward 0)
    /// ```
    pub fn chain(n: usize) -> Self {
        let table = (0..n)
            .map(|s| {
                let next = (s + 1 < n).then_some(s + 1);
                let reward = if next.is_none() { 1.0 } else { 0.0 };
                vec![
                    vec![Transition {
                        prob: 1.0,
                        next,
                        reward,
                    }],
                    vec![Transition {
                        prob: 1.0,
                        next: Some(s),
                        reward: 0.0,
                    }],
                ]
            })
            .collect();
        TabularMdp::new(0, table)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn outcomes(&self, state: usize, action: usize) -> &[Transition] {
        &self.table[state][action]
    }

    fn backup(&self, s: usize, a: usize, gamma: f64, v: &[f64]) -> f64 {
        self.table[s][a]
            .iter()
            .map(|t| t.prob * (t.reward + gamma * t.next.map_or(0.0, |n| v[n])))
            .sum()
    }

    /// Optimal action values by value iteration, `q[s][a]`.
    pub fn optimal_q(&self, gamma: f64, tol: f64) -> Vec<Vec<f64>> {
        let mut v = vec![0.0; self.n_states];
        for _ in 0..1_000_000 {
            let mut delta: f64 = 0.0;
            for s in 0..self.n_states {
                let best = (0..self.n_actions)
                    .map(|a| self.backup(s, a, gamma, &v))
                    .fold(f64::NEG_INFINITY, f64::max);
                delta = delta.max((best - v[s]).abs());
                v[s] = best;
            }
            if delta < tol {
                break;
            }
        }
        (0..self.n_states)
            .map(|s| {
                (0..self.n_actions)
                    .map(|a| self.backup(s, a, gamma, &v))
                    .collect()
            })
            .collect()
    }

    /// State values of a fixed stochastic policy, `policy[s][a]`, by
    /// iterative policy evaluation.
    pub fn policy_values(&self, gamma: f64, policy: &[Vec<f64>], tol: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states];
        for _ in 0..1_000_000 {
            let mut delta: f64 = 0.0;
            for s in 0..self.n_states {
                let new: f64 = (0..self.n_actions)
                    .map(|a| policy[s][a] * self.backup(s, a, gamma, &v))
                    .sum();
                delta = delta.max((new - v[s]).abs());
                v[s] = new;
            }
            if delta < tol {
                break;
            }
        }
        v
    }

    fn one_hot(&self, index: usize, out: &mut [f64]) {
        out.fill(0.0);
        out[index] = 1.0;
    }

    fn sample<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> Transition {
        let outcomes = &self.table[s][a];
        if outcomes.len() == 1 {
            return outcomes[0];
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for t in outcomes {
            acc += t.prob;
            if u < acc {
                return *t;
            }
        }
        *outcomes.last().expect("non-empty outcomes")
    }
}

impl Environment for TabularMdp {
    /// One-hot over states plus one slot for the terminal afterstate. The
    /// action-value interface leaves the last slot unused.
    fn input_len(&self) -> usize {
        self.n_states + 1
    }

    fn reset<R: Rng + ?Sized>(&mut self, _rng: &mut R) {
        self.state = self.start;
    }
}

/// Afterstates are next states, `n_states` standing for the end of the
/// episode. Only deterministic tables have afterstates.
impl AfterstateEnv for TabularMdp {
    type Afterstate = usize;

    fn candidates(&self, out: &mut Vec<Candidate<usize>>) {
        out.clear();
        for a in 0..self.n_actions {
            let outcomes = &self.table[self.state][a];
            assert_eq!(
                outcomes.len(),
                1,
                "afterstates need deterministic transitions"
            );
            let t = outcomes[0];
            out.push(Candidate {
                afterstate: t.next.unwrap_or(self.n_states),
                reward: t.reward,
                terminal: t.next.is_none(),
                points: (t.reward > 0.0) as u32,
            });
        }
    }

    fn encode(&self, afterstate: &usize, out: &mut [f64]) {
        self.one_hot(*afterstate, out);
    }

    fn advance<R: Rng + ?Sized>(&mut self, afterstate: &usize, _rng: &mut R) {
        assert!(*afterstate < self.n_states, "cannot advance past the end");
        self.state = *afterstate;
    }
}

impl ActionValueEnv for TabularMdp {
    fn output_len(&self) -> usize {
        self.n_actions
    }

    fn encode_state(&self, out: &mut [f64]) {
        self.one_hot(self.state, out);
    }

    fn action_slots(&self) -> Range<usize> {
        0..self.n_actions
    }

    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Outcome {
        let t = self.sample(self.state, action, rng);
        if let Some(n) = t.next {
            self.state = n;
        }
        Outcome {
            reward: t.reward,
            terminal: t.next.is_none(),
            points: (t.reward > 0.0) as u32,
        }
    }
}
