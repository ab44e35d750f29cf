//! Acceptance suite. Each criterion is its own test and prints a single
//! `criterion N: PASS|FAIL ...` line (visible with `--nocapture`); the
//! test fails exactly when the criterion does.
//!
//! Criteria 6 to 8 share six 20,000-episode SZ-Tetris training runs
//! (dSiLU and ReLU, seeds 1 to 3), which take most of the suite's runtime.

mod common;

use std::fs;
use std::path::PathBuf;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use common::{fd_check, random_cell_board, random_played_board};
use rand::seq::index::sample;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use silu_td::activations::{activate, activate_derivative, ActivationKind};
use silu_td::algorithms::{run_episode_td, Algorithm, Learner, LearnerConfig};
use silu_td::env::tetris::{afterstate, enumerate_actions, Board, PieceKind, TetrisVariant};
use silu_td::env::TabularMdp;
use silu_td::features::{encode_binary, extract_features, EncodingLayout};
use silu_td::harness::evaluate::rollouts;
use silu_td::harness::train::{train_seeds, TrainOutcome};
use silu_td::harness::{mean_sd, AgentConfig};
use silu_td::network::{ArchitectureSpec, Network, Shape};
use silu_td::policy::{anneal_tau, ActionSelector, Choice, PolicySpec, SoftmaxSchedule};

fn report(n: u32, pass: bool, detail: String) {
    println!(
        "criterion {n}: {} {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n}: {detail}");
}

// ---------------------------------------------------------------- 1

/// Root of `f` on `[lo, hi]` by bisection; `f(lo)` and `f(hi)` differ in sign.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    assert!(flo * f(hi) < 0.0, "no sign change on [{lo}, {hi}]");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Grid-scans `activate(kind, .)` for its extremum on `[lo, hi]`, then
/// refines by bisecting the derivative around the best grid point.
fn extremum(kind: ActivationKind, lo: f64, hi: f64, maximize: bool) -> (f64, f64) {
    let sign = if maximize { 1.0 } else { -1.0 };
    let step = 1e-3;
    let n = ((hi - lo) / step) as usize;
    let best = (0..=n)
        .map(|i| lo + i as f64 * step)
        .max_by(|a, b| (sign * activate(kind, *a)).total_cmp(&(sign * activate(kind, *b))))
        .unwrap();
    let z = bisect(
        |z| activate_derivative(kind, z),
        best - 2.0 * step,
        best + 2.0 * step,
    );
    (z, activate(kind, z))
}

#[test]
fn criterion_01_activation_landmarks() {
    let t = Instant::now();
    let (z_min, silu_min) = extremum(ActivationKind::Silu, -5.0, 5.0, false);
    let (z_max, dsilu_max) = extremum(ActivationKind::Dsilu, 0.0, 6.0, true);
    let (z_low, dsilu_min) = extremum(ActivationKind::Dsilu, -6.0, 0.0, false);
    let elapsed = t.elapsed().as_secs_f64();
    let pass = (silu_min + 0.28).abs() <= 0.005
        && (z_min + 1.28).abs() <= 0.01
        && (dsilu_max - 1.10).abs() <= 0.01
        && (dsilu_min + 0.10).abs() <= 0.01
        && (z_max - 2.4).abs() <= 0.05
        && (z_low + 2.4).abs() <= 0.05
        && elapsed < 1.0;
    report(
        1,
        pass,
        format!(
            "SiLU min {silu_min:.4} at {z_min:.4}; dSiLU max {dsilu_max:.4} at {z_max:.4}, \
             min {dsilu_min:.4} at {z_low:.4} ({elapsed:.3}s)"
        ),
    );
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_02_gradient_correctness() {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for kind in ActivationKind::ALL {
        for seed in 1..=5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let jitter = |net: &mut Network, rng: &mut ChaCha8Rng| {
                for p in net.params_mut().iter_mut() {
                    *p += rng.random_range(-0.05..0.05);
                }
            };

            let mut shallow =
                Network::init(ArchitectureSpec::shallow(460, 50, kind, 1), &mut rng).unwrap();
            jitter(&mut shallow, &mut rng);
            let x: Vec<f64> = (0..460).map(|_| rng.random_range(0..2) as f64).collect();
            let mut coords: Vec<usize> = (23_000..shallow.param_count()).collect();
            coords.extend(sample(&mut rng, 23_000, 500).into_iter());
            let r = fd_check(&shallow, &x, &coords);
            worst = worst.max(r.max_rel);
            checked += r.checked;

            let spec = ArchitectureSpec::board_conv(Shape::new(1, 20, 10), kind, kind, 1);
            let mut deep = Network::init(spec, &mut rng).unwrap();
            jitter(&mut deep, &mut rng);
            let x: Vec<f64> = (0..200).map(|_| rng.random_range(0..2) as f64).collect();
            let bounds = [0, 390, 19_190, 144_440, 144_691];
            let mut coords = Vec::new();
            for w in bounds.windows(2) {
                coords.extend(
                    sample(&mut rng, w[1] - w[0], 40)
                        .into_iter()
                        .map(|i| w[0] + i),
                );
            }
            let r = fd_check(&deep, &x, &coords);
            worst = worst.max(r.max_rel);
            checked += r.checked;
        }
    }
    let elapsed = t.elapsed().as_secs_f64();
    report(
        2,
        worst < 1e-5 && elapsed < 120.0,
        format!("max relative error {worst:.2e} over {checked} coordinates ({elapsed:.1}s)"),
    );
}

// ---------------------------------------------------------------- 3

struct AdvanceWithProb(f64);

impl ActionSelector for AdvanceWithProb {
    fn select<R: Rng + ?Sized>(&self, _values: &[f64], rng: &mut R) -> Choice {
        Choice {
            index: if rng.random::<f64>() < self.0 { 0 } else { 1 },
            exploratory: false,
        }
    }
}

#[test]
fn criterion_03_oracle_equivalence() {
    let t = Instant::now();
    let n = silu_td::harness::config::TEST_MDP_STATES;
    let mdp = TabularMdp::chain(n);

    // Sarsa through the harness preset, against Q*(s, advance) = g^(n-1-s)
    // and Q*(s, stay) = g^(n-s).
    let config = AgentConfig::preset("test-mdp").unwrap();
    let g = config.gamma;
    let dir = tempfile::tempdir().unwrap();
    let net = train_seeds(&config, &[config.seed], dir.path())
        .unwrap()
        .remove(0)
        .network;
    let mut q_err: f64 = 0.0;
    for s in 0..n {
        let mut x = vec![0.0; n + 1];
        x[s] = 1.0;
        let q = net.forward(&x);
        q_err = q_err.max((q[0] - g.powi((n - 1 - s) as i32)).abs());
        q_err = q_err.max((q[1] - g.powi((n - s) as i32)).abs());
    }

    // TD policy evaluation of "advance with probability p". Closed form:
    // V(s) = c (c g)^(n-1-s) with c = p / (1 - (1-p) g); the afterstate
    // value of entering s is g V(s), of the end 1.
    let p = 0.7;
    let c = p / (1.0 - (1.0 - p) * g);
    let oracle: Vec<f64> = (0..n)
        .map(|s| g * c * (c * g).powi((n - 1 - s) as i32))
        .chain(std::iter::once(1.0))
        .collect();
    let cfg = LearnerConfig {
        alpha: 0.01,
        gamma: g,
        lambda: 0.5,
        algorithm: Algorithm::TdLambda,
    };
    let mut learner = Learner::new(
        Network::zeros(ArchitectureSpec::linear(n + 1, 1)).unwrap(),
        cfg,
    )
    .unwrap();
    let mut env = mdp.clone();
    for i in 0..20_000u64 {
        let mut env_rng = ChaCha8Rng::seed_from_u64(i);
        let mut pol_rng = ChaCha8Rng::seed_from_u64(1_000_000 + i);
        run_episode_td(
            &mut learner,
            &mut env,
            &AdvanceWithProb(p),
            &mut env_rng,
            &mut pol_rng,
            None,
        )
        .unwrap();
    }
    let mut v_err: f64 = 0.0;
    for (x, want) in oracle.iter().enumerate() {
        let mut input = vec![0.0; n + 1];
        input[x] = 1.0;
        v_err = v_err.max((learner.network().forward(&input)[0] - want).abs());
    }
    let elapsed = t.elapsed().as_secs_f64();
    report(
        3,
        q_err < 1e-2 && v_err < 1e-2 && elapsed < 60.0,
        format!("max |Q - Q*| {q_err:.4}, max |V - V_pi| {v_err:.4} ({elapsed:.1}s)"),
    );
}

// ---------------------------------------------------------------- 4

/// Holes by the definition: an empty cell with an occupied cell anywhere
/// above it in its column.
fn brute_force_holes(board: &Board) -> u32 {
    let mut holes = 0;
    for c in 0..board.width() {
        for r in 0..board.height() {
            if !board.get(r, c) && (r + 1..board.height()).any(|above| board.get(above, c)) {
                holes += 1;
            }
        }
    }
    holes
}

#[test]
fn criterion_04_environment_fidelity() {
    let t = Instant::now();
    let counts: Vec<usize> = PieceKind::ALL
        .iter()
        .map(|&k| enumerate_actions(10, k).len())
        .collect();
    let table_ok = counts == [17, 17, 9, 17, 34, 34, 34];

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut invariant_failures = 0;
    let mut hole_failures = 0;
    let mut drops = 0;
    for variant in [TetrisVariant::Sz, TetrisVariant::Tetris10] {
        let mut board = variant.empty_board();
        for _ in 0..50_000 {
            let kind = *variant.pieces().choose(&mut rng).unwrap();
            let placement = *enumerate_actions(variant.width(), kind)
                .choose(&mut rng)
                .unwrap();
            let d = afterstate(&board, kind, placement);
            drops += 1;
            if d.terminal {
                board = variant.empty_board();
                continue;
            }
            let conserved = board.cell_count() + 4
                == d.board.cell_count() + d.rows_cleared * variant.width() as u32;
            if !conserved || d.board.has_full_row() {
                invariant_failures += 1;
            }
            if d.board.count_holes() != brute_force_holes(&d.board) {
                hole_failures += 1;
            }
            board = d.board;
        }
    }
    for _ in 0..2_000 {
        let b = random_cell_board(TetrisVariant::Sz, rng.random_range(0.05..0.9), &mut rng);
        if b.count_holes() != brute_force_holes(&b) {
            hole_failures += 1;
        }
    }
    let elapsed = t.elapsed().as_secs_f64();
    report(
        4,
        table_ok && invariant_failures == 0 && hole_failures == 0 && elapsed < 60.0,
        format!(
            "actions {counts:?}; {drops} drops, {invariant_failures} invariant and {hole_failures} hole \
             mismatches ({elapsed:.1}s)"
        ),
    );
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_05_feature_vector_lengths() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bad = 0;
    let mut lens = Vec::new();
    for variant in [TetrisVariant::Sz, TetrisVariant::Tetris10] {
        let layout = EncodingLayout::for_variant(variant);
        lens.push(layout.len());
        for i in 0..10_000 {
            let board = if i % 2 == 0 {
                random_played_board(variant, rng.random_range(0..60), &mut rng)
            } else {
                random_cell_board(variant, rng.random_range(0.0..0.8), &mut rng)
            };
            let v = encode_binary(&extract_features(&board), &layout);
            if v.len() != layout.len() || v.count_ones() != 20 {
                bad += 1;
            }
        }
    }
    report(
        5,
        lens == [460, 260] && bad == 0,
        format!("lengths {lens:?}, {bad} vectors without 20 set bits"),
    );
}

// ---------------------------------------------------------------- 6 to 8

const SZ_EPISODES: u64 = 20_000;

struct SzRuns {
    config: AgentConfig,
    dsilu: Vec<TrainOutcome>,
    relu: Vec<TrainOutcome>,
    _dir: tempfile::TempDir,
}

fn sz_runs() -> &'static SzRuns {
    static RUNS: OnceLock<SzRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let mut config = AgentConfig::preset("sz-shallow").unwrap();
        config.episodes = SZ_EPISODES;
        config.checkpoint_every = 0;
        let dsilu = train_seeds(&config, &[1, 2, 3], &dir.path().join("dsilu")).unwrap();
        let mut relu_config = config.clone();
        relu_config.activation = ActivationKind::Relu;
        let relu = train_seeds(&relu_config, &[1, 2, 3], &dir.path().join("relu")).unwrap();
        SzRuns {
            config,
            dsilu,
            relu,
            _dir: dir,
        }
    })
}

#[test]
fn criterion_06_scaled_learning_curve() {
    let run = &sz_runs().dsilu[0];
    let first = run.head_mean(1_000);
    let last = run.tail_mean(1_000);
    report(
        6,
        last >= 5.0 * first && last >= 20.0,
        format!("dSiLU seed 1: first 1,000 episodes {first:.2}, last 1,000 {last:.2}"),
    );
}

#[test]
fn criterion_07_dsilu_above_relu() {
    let runs = sz_runs();
    let tails = |rs: &[TrainOutcome]| rs.iter().map(|r| r.tail_mean(1_000)).collect::<Vec<_>>();
    let (d, r) = (tails(&runs.dsilu), tails(&runs.relu));
    let (dm, dsd) = mean_sd(&d);
    let (rm, rsd) = mean_sd(&r);
    let overlap = d.iter().cloned().fold(f64::INFINITY, f64::min)
        <= r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    report(
        7,
        dm > rm,
        format!(
            "last-1,000 means dSiLU {d:.1?} (mean {dm:.1}, sd {dsd:.1}) vs ReLU {r:.1?} (mean {rm:.1}, sd {rsd:.1}){}",
            if overlap { "; seed ranges overlap" } else { "" }
        ),
    );
}

#[test]
fn criterion_08_softmax_beats_epsilon_greedy() {
    let runs = sz_runs();
    let net = &runs.dsilu[0].network;
    let mean = |policy| {
        let recs = rollouts(&runs.config, net, 200, policy, 8).unwrap();
        mean_sd(&recs.iter().map(|r| r.score() as f64).collect::<Vec<_>>()).0
    };
    let soft = mean(PolicySpec::SoftmaxFinal);
    let eps = mean(PolicySpec::EpsilonGreedy(0.05));
    report(
        8,
        soft > eps,
        format!(
            "200 episodes: softmax(tau {:.4}) {soft:.2} vs epsilon 0.05 {eps:.2}",
            runs.config.final_tau()
        ),
    );
}

// ---------------------------------------------------------------- 9

#[test]
fn criterion_09_annealing_endpoint() {
    let tau = anneal_tau(&SoftmaxSchedule::new(0.5, 0.00025), 200_000);
    let exact = 0.5 / 51.0;
    report(
        9,
        (tau - exact).abs() < 1e-15 && format!("{tau:.4}") == "0.0098",
        format!("tau(200000) = {tau:.10}"),
    );
}

// ---------------------------------------------------------------- 10

fn cli_tables(root: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let bin = env!("CARGO_BIN_EXE_silu-td");
    let run = |args: &[&str]| {
        let out = Command::new(bin).args(args).output().unwrap();
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    let mut tables = Vec::new();
    for (name, preset, episodes) in [("sz", "sz-shallow", "60"), ("mdp", "test-mdp", "300")] {
        let dir: PathBuf = root.join(name);
        let d = dir.to_str().unwrap();
        run(&[
            "train",
            "--preset",
            preset,
            "--episodes",
            episodes,
            "--log-every",
            "25",
            "--seed",
            "3",
            "--out-dir",
            d,
        ]);
        let ck = dir.join("checkpoint-final.json");
        let ck = ck.to_str().unwrap();
        run(&[
            "evaluate",
            "--checkpoint",
            ck,
            "--episodes",
            "30",
            "--seed",
            "4",
        ]);
        run(&[
            "analyze",
            "--checkpoint",
            ck,
            "--episodes",
            "20",
            "--seed",
            "5",
        ]);
        run(&[
            "train",
            "--preset",
            preset,
            "--episodes",
            "20",
            "--seeds",
            "1,2",
            "--out-dir",
            &format!("{d}-seeds"),
        ]);
        for f in [
            "log.csv",
            "summary.csv",
            "eval.csv",
            "value_gap.csv",
            "selection.csv",
        ] {
            tables.push((format!("{name}/{f}"), fs::read(dir.join(f)).unwrap()));
        }
        tables.push((
            format!("{name}/seeds.csv"),
            fs::read(root.join(format!("{name}-seeds/seeds.csv"))).unwrap(),
        ));
    }
    tables
}

#[test]
fn criterion_10_determinism() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ta, tb) = (cli_tables(a.path()), cli_tables(b.path()));
    let differing: Vec<&str> = ta
        .iter()
        .zip(&tb)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    report(
        10,
        differing.is_empty() && ta.len() == 12,
        format!("{} CSV files compared, differing: {differing:?}", ta.len()),
    );
}
