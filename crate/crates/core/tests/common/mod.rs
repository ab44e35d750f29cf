#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::Rng;
use silu_td::env::tetris::{afterstate, enumerate_actions, Board, TetrisVariant};
use silu_td::network::Network;

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Default)]
pub struct FdReport {
    pub max_rel: f64,
    pub checked: usize,
    pub skipped: usize,
    /// Backprop and numeric values at the worst coordinate.
    pub worst: (f64, f64),
}

/// |a - b| relative to the larger magnitude. Below 1e-6 the denominator is
/// held at 1e-6: there the rounding noise of a central difference with
/// step 1e-5 (about 1e-11) is already a sizeable fraction of the value.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central differences of output 0 against backprop on the given
/// coordinates. A coordinate whose two probes land on different sides of
/// a ReLU or pooling kink is skipped.
pub fn fd_check(net: &Network, input: &[f64], coords: &[usize]) -> FdReport {
    let analytic = net.gradient(input, 0);
    let base_sig = net.kink_signature(input);
    let mut probe = net.clone();
    let mut report = FdReport::default();
    for &i in coords {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + FD_STEP;
        let up = probe.forward(input)[0];
        let kinked_up = !base_sig.is_empty() && probe.kink_signature(input) != base_sig;
        probe.params_mut()[i] = orig - FD_STEP;
        let down = probe.forward(input)[0];
        let kinked_down = !base_sig.is_empty() && probe.kink_signature(input) != base_sig;
        probe.params_mut()[i] = orig;
        if kinked_up || kinked_down {
            report.skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * FD_STEP);
        let e = rel_err(analytic[i], numeric);
        if e > report.max_rel {
            report.max_rel = e;
            report.worst = (analytic[i], numeric);
        }
        report.checked += 1;
    }
    report
}

/// A board reached by random drops from empty, stopping before game over.
pub fn random_played_board<R: Rng>(variant: TetrisVariant, drops: usize, rng: &mut R) -> Board {
    let mut board = variant.empty_board();
    for _ in 0..drops {
        let kind = *variant.pieces().choose(rng).unwrap();
        let p = *enumerate_actions(variant.width(), kind)
            .choose(rng)
            .unwrap();
        let next = afterstate(&board, kind, p);
        if next.terminal {
            break;
        }
        board = next.board;
    }
    board
}

/// Independent cells with occupancy `p`, with full rows broken up.
pub fn random_cell_board<R: Rng>(variant: TetrisVariant, p: f64, rng: &mut R) -> Board {
    let mut board = variant.empty_board();
    for r in 0..board.height() {
        for c in 0..board.width() {
            board.set(r, c, rng.random_bool(p));
        }
        if (0..board.width()).all(|c| board.get(r, c)) {
            let c = rng.random_range(0..board.width());
            board.set(r, c, false);
        }
    }
    board
}
