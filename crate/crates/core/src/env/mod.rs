//! Environments and the two interfaces the learners drive.
//!
//! [`AfterstateEnv`] exposes a deterministic afterstate for every action,
//! which model-based TD(lambda) scores with a state-value network.
//! [`ActionValueEnv`] exposes the current state and a block of action slots
//! scored by an action-value network, as Sarsa(lambda) needs.

use std::ops::Range;

use rand::Rng;

pub mod mdp;
pub mod tetris;

pub use mdp::TabularMdp;
pub use tetris::{Board, PieceKind, Placement, TetrisVariant};

use crate::features::{encode_board_into, EncodingLayout};
use tetris::{afterstate, enumerate_actions, shaped_reward_with};

/// One reachable afterstate together with what entering it yields.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<X> {
    pub afterstate: X,
    /// Reward attached to entering the afterstate.
    pub reward: f64,
    pub terminal: bool,
    /// Score points (cleared rows for Tetris).
    pub points: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub reward: f64,
    pub terminal: bool,
    pub points: u32,
}

pub trait Environment {
    /// Length of the network input this environment writes.
    fn input_len(&self) -> usize;
    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R);
}

pub trait AfterstateEnv: Environment {
    type Afterstate: Clone;

    /// Every afterstate reachable from the current state, in action order.
    fn candidates(&self, out: &mut Vec<Candidate<Self::Afterstate>>);
    fn encode(&self, afterstate: &Self::Afterstate, out: &mut [f64]);
    /// Commits to `afterstate` and draws the randomness that follows it.
    fn advance<R: Rng + ?Sized>(&mut self, afterstate: &Self::Afterstate, rng: &mut R);
}

pub trait ActionValueEnv: Environment {
    /// Width of the action-value output layer.
    fn output_len(&self) -> usize;
    fn encode_state(&self, out: &mut [f64]);
    /// Output indices valid in the current state.
    fn action_slots(&self) -> Range<usize>;
    /// Takes the action at position `action` within [`Self::action_slots`].
    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Outcome;
}

/// How a Tetris board becomes a network input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoardEncoding {
    /// One-hot column-height features.
    Features(EncodingLayout),
    /// Raw cells, top row first, one channel. With `include_piece` a second
    /// channel marks the current piece at its spawn position (rotation 0,
    /// centred, touching the top row); afterstates leave it empty.
    Raw { include_piece: bool },
}

impl BoardEncoding {
    pub fn channels(&self) -> usize {
        match self {
            BoardEncoding::Raw {
                include_piece: true,
            } => 2,
            _ => 1,
        }
    }

    pub fn input_len(&self, variant: TetrisVariant) -> usize {
        match self {
            BoardEncoding::Features(layout) => layout.len(),
            BoardEncoding::Raw { .. } => self.channels() * variant.width() * variant.height(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TetrisEnv {
    variant: TetrisVariant,
    encoding: BoardEncoding,
    reward_divisor: f64,
    board: Board,
    piece: PieceKind,
    actions: Vec<Vec<Placement>>,
}

impl TetrisEnv {
    pub fn new(variant: TetrisVariant, encoding: BoardEncoding, reward_divisor: f64) -> Self {
        let actions = PieceKind::ALL
            .iter()
            .map(|&k| enumerate_actions(variant.width(), k))
            .collect();
        TetrisEnv {
            variant,
            encoding,
            reward_divisor,
            board: variant.empty_board(),
            piece: variant.pieces()[0],
            actions,
        }
    }

    pub fn variant(&self) -> TetrisVariant {
        self.variant
    }

    pub fn board(&self) -> &Board {
        &self.board
    }

    pub fn piece(&self) -> PieceKind {
        self.piece
    }

    pub fn placements(&self) -> &[Placement] {
        &self.actions[self.piece.index()]
    }

    fn encode_board(&self, board: &Board, piece: Option<PieceKind>, out: &mut [f64]) {
        match self.encoding {
            BoardEncoding::Features(layout) => encode_board_into(board, &layout, out),
            BoardEncoding::Raw { include_piece } => {
                let (h, w) = (board.height(), board.width());
                assert_eq!(
                    out.len(),
                    self.encoding.channels() * h * w,
                    "input length mismatch"
                );
                out.fill(0.0);
                for r in 0..h {
                    for c in 0..w {
                        if board.get(h - 1 - r, c) {
                            out[r * w + c] = 1.0;
                        }
                    }
                }
                if let (true, Some(kind)) = (include_piece, piece) {
                    let rot = &kind.rotations()[0];
                    let left = (w - rot.width) / 2;
                    for (dr, dc) in rot.cells() {
                        let r = rot.height - 1 - dr;
                        out[h * w + r * w + left + dc] = 1.0;
                    }
                }
            }
        }
    }
}

impl Environment for TetrisEnv {
    fn input_len(&self) -> usize {
        self.encoding.input_len(self.variant)
    }

    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.board = self.variant.empty_board();
        self.piece = self.variant.spawn(rng);
    }
}

impl AfterstateEnv for TetrisEnv {
    type Afterstate = Board;

    fn candidates(&self, out: &mut Vec<Candidate<Board>>) {
        out.clear();
        for &p in self.placements() {
            let res = afterstate(&self.board, self.piece, p);
            out.push(Candidate {
                afterstate: res.board,
                reward: shaped_reward_with(&res.board, self.reward_divisor),
                terminal: res.terminal,
                points: res.rows_cleared,
            });
        }
    }

    fn encode(&self, afterstate: &Board, out: &mut [f64]) {
        self.encode_board(afterstate, None, out);
    }

    fn advance<R: Rng + ?Sized>(&mut self, afterstate: &Board, rng: &mut R) {
        self.board = *afterstate;
        self.piece = self.variant.spawn(rng);
    }
}

impl ActionValueEnv for TetrisEnv {
    fn output_len(&self) -> usize {
        self.variant.action_slots()
    }

    fn encode_state(&self, out: &mut [f64]) {
        self.encode_board(&self.board, Some(self.piece), out);
    }

    fn action_slots(&self) -> Range<usize> {
        let start = self.variant.action_offset(self.piece);
        start..start + self.placements().len()
    }

    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Outcome {
        let p = self.placements()[action];
        let res = afterstate(&self.board, self.piece, p);
        self.board = res.board;
        if !res.terminal {
            self.piece = self.variant.spawn(rng);
        }
        Outcome {
            reward: shaped_reward_with(&res.board, self.reward_divisor),
            terminal: res.terminal,
            points: res.rows_cleared,
        }
    }
}
