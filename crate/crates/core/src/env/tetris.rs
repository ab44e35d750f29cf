//! Stochastic SZ-Tetris (10x20, S and Z pieces) and 10x10 seven-piece
//! Tetris.
//!
//! The board is a stack of row bitmasks, row 0 at the bottom and bit `c` for
//! column `c`. Four hidden rows above the visible height hold the cells of
//! an overflowing placement so the terminal board can still be inspected.
//!
//! A placement picks a rotation and the leftmost column of the piece's
//! bounding box; the piece then falls straight down until it rests on the
//! stack or the floor. There is no sliding, no wall kicks and no gravity
//! animation. A placement whose resting cells reach above the visible
//! height ends the episode: the overflow board is returned unchanged (no
//! rows are cleared) and the action is still legal to select.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub const MAX_WIDTH: usize = 16;
pub const MAX_HEIGHT: usize = 20;
const HIDDEN_ROWS: usize = 4;
const ROWS: usize = MAX_HEIGHT + HIDDEN_ROWS;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BoardError {
    #[error(
        "board size {width}x{height} unsupported (width 4..={MAX_WIDTH}, height 4..={MAX_HEIGHT})"
    )]
    Size { width: usize, height: usize },
    #[error("line {line}: expected {expected} cells, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: unexpected character {ch:?} (use '.' or '#')")]
    BadCell { line: usize, ch: char },
    #[error("row {row} is full; full rows cannot rest on a board")]
    FullRow { row: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Board {
    width: u8,
    height: u8,
    rows: [u16; ROWS],
}

impl Board {
    pub fn new(width: usize, height: usize) -> Result<Self, BoardError> {
        if !(4..=MAX_WIDTH).contains(&width) || !(4..=MAX_HEIGHT).contains(&height) {
            return Err(BoardError::Size { width, height });
        }
        Ok(Board {
            width: width as u8,
            height: height as u8,
            rows: [0; ROWS],
        })
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    pub fn height(&self) -> usize {
        self.height as usize
    }

    fn full_mask(&self) -> u16 {
        ((1u32 << self.width) - 1) as u16
    }

    /// Row bitmask, row 0 at the bottom. Rows at or above `height()` are
    /// only non-empty on an overflow board.
    pub fn row(&self, row: usize) -> u16 {
        self.rows[row]
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.rows[row] >> col & 1 == 1
    }

    pub fn set(&mut self, row: usize, col: usize, occupied: bool) {
        assert!(
            row < self.height() && col < self.width(),
            "cell ({row}, {col}) out of bounds"
        );
        if occupied {
            self.rows[row] |= 1 << col;
        } else {
            self.rows[row] &= !(1 << col);
        }
    }

    pub fn cell_count(&self) -> u32 {
        self.rows.iter().map(|r| r.count_ones()).sum()
    }

    /// True when cells sit above the visible height.
    pub fn is_overflowing(&self) -> bool {
        self.rows[self.height()..].iter().any(|&r| r != 0)
    }

    pub fn has_full_row(&self) -> bool {
        let full = self.full_mask();
        self.rows.contains(&full)
    }

    /// One past the highest occupied row of `col`, 0 for an empty column.
    /// Can exceed `height()` on an overflow board.
    pub fn column_height(&self, col: usize) -> usize {
        (0..ROWS)
            .rev()
            .find(|&r| self.get(r, col))
            .map_or(0, |r| r + 1)
    }

    pub fn column_heights(&self) -> Vec<usize> {
        (0..self.width()).map(|c| self.column_height(c)).collect()
    }

    pub fn count_holes(&self) -> u32 {
        count_holes(self)
    }

    /// ASCII art of the visible rows, top row first, `#` occupied and `.`
    /// empty, one line per row.
    pub fn to_ascii(&self) -> String {
        self.ascii_rows(self.height())
    }

    /// Like [`Board::to_ascii`] but also prints hidden overflow rows that
    /// hold cells.
    pub fn to_ascii_with_overflow(&self) -> String {
        let top = (self.height()..ROWS)
            .rev()
            .find(|&r| self.rows[r] != 0)
            .map_or(self.height(), |r| r + 1);
        self.ascii_rows(top)
    }

    fn ascii_rows(&self, top: usize) -> String {
        let mut s = String::with_capacity(top * (self.width() + 1));
        for r in (0..top).rev() {
            for c in 0..self.width() {
                s.push(if self.get(r, c) { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }

    /// Parses ASCII art: one line per row, top row first. Blank lines and
    /// surrounding whitespace are ignored. Full rows are rejected.
    pub fn from_ascii(text: &str) -> Result<Self, BoardError> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        let height = lines.len();
        let width = lines.first().map_or(0, |(_, l)| l.chars().count());
        let mut board = Board::new(width, height)?;
        for (idx, (line, text)) in lines.iter().enumerate() {
            let found = text.chars().count();
            if found != width {
                return Err(BoardError::RaggedRow {
                    line: *line,
                    expected: width,
                    found,
                });
            }
            let row = height - 1 - idx;
            for (c, ch) in text.chars().enumerate() {
                match ch {
                    '#' => board.rows[row] |= 1 << c,
                    '.' => {}
                    _ => return Err(BoardError::BadCell { line: *line, ch }),
                }
            }
            if board.rows[row] == board.full_mask() {
                return Err(BoardError::FullRow { row });
            }
        }
        Ok(board)
    }
}

impl fmt::Display for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_ascii())
    }
}

/// Empty cells with at least one occupied cell above them in the same
/// column.
pub fn count_holes(board: &Board) -> u32 {
    let mut holes = 0;
    let mut covered: u16 = 0;
    for r in (0..ROWS).rev() {
        let row = board.rows[r];
        holes += (covered & !row).count_ones();
        covered |= row;
    }
    holes
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PieceKind {
    S,
    Z,
    O,
    I,
    J,
    L,
    T,
}

impl PieceKind {
    pub const ALL: [PieceKind; 7] = [
        PieceKind::S,
        PieceKind::Z,
        PieceKind::O,
        PieceKind::I,
        PieceKind::J,
        PieceKind::L,
        PieceKind::T,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn rotations(self) -> &'static [Rotation] {
        &ROTATIONS[self.index()]
    }
}

impl fmt::Display for PieceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for PieceKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S" => Ok(PieceKind::S),
            "Z" => Ok(PieceKind::Z),
            "O" => Ok(PieceKind::O),
            "I" => Ok(PieceKind::I),
            "J" => Ok(PieceKind::J),
            "L" => Ok(PieceKind::L),
            "T" => Ok(PieceKind::T),
            _ => Err(format!(
                "unknown piece `{s}` (expected one of S Z O I J L T)"
            )),
        }
    }
}

// Rotation tables, top row first. These diagrams are the source of truth;
// S occupies the lower-left and upper-right when lying, Z the upper-left and
// lower-right.
const SHAPES: [&[&str]; 7] = [
    // S: lying, standing
    &[".##\n##.", "#.\n##\n.#"],
    // Z: lying, standing
    &["##.\n.##", ".#\n##\n#."],
    // O
    &["##\n##"],
    // I: lying, standing
    &["####", "#\n#\n#\n#"],
    // J
    &["#..\n###", "##\n#.\n#.", "###\n..#", ".#\n.#\n##"],
    // L
    &["..#\n###", "#.\n#.\n##", "###\n#..", "##\n.#\n.#"],
    // T
    &["###\n.#.", "#.\n##\n#.", ".#.\n###", ".#\n##\n.#"],
];

/// One orientation of a tetromino.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rotation {
    /// Row bitmasks from the bottom row of the bounding box up.
    masks: Vec<u16>,
    /// Lowest occupied row offset of each bounding-box column.
    bottoms: Vec<usize>,
    pub width: usize,
    pub height: usize,
}

impl Rotation {
    fn parse(diagram: &str) -> Rotation {
        let lines: Vec<&str> = diagram.lines().collect();
        let height = lines.len();
        let width = lines[0].len();
        let mut masks = vec![0u16; height];
        for (i, line) in lines.iter().enumerate() {
            assert_eq!(line.len(), width, "ragged piece diagram");
            for (c, ch) in line.chars().enumerate() {
                if ch == '#' {
                    masks[height - 1 - i] |= 1 << c;
                }
            }
        }
        let bottoms = (0..width)
            .map(|c| {
                (0..height)
                    .find(|&r| masks[r] >> c & 1 == 1)
                    .expect("empty piece column")
            })
            .collect();
        Rotation {
            masks,
            bottoms,
            width,
            height,
        }
    }

    /// Occupied cells as `(row_from_bottom, col)` offsets.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        let mut cells = Vec::with_capacity(4);
        for (r, &m) in self.masks.iter().enumerate() {
            for c in 0..self.width {
                if m >> c & 1 == 1 {
                    cells.push((r, c));
                }
            }
        }
        cells
    }
}

static ROTATIONS: LazyLock<Vec<Vec<Rotation>>> = LazyLock::new(|| {
    SHAPES
        .iter()
        .map(|rots| rots.iter().map(|d| Rotation::parse(d)).collect())
        .collect()
});

/// Rotation index and leftmost column of a drop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Placement {
    pub rotation: u8,
    pub column: u8,
}

/// Every placement of `kind` on a board of `width` columns: rotations in
/// table order, columns left to right. Board contents never filter the
/// list.
pub fn enumerate_actions(width: usize, kind: PieceKind) -> Vec<Placement> {
    assert!(width >= 4, "board width must be at least 4");
    let mut out = Vec::with_capacity(34);
    for (r, rot) in kind.rotations().iter().enumerate() {
        for c in 0..=(width - rot.width) {
            out.push(Placement {
                rotation: r as u8,
                column: c as u8,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropResult {
    pub board: Board,
    pub rows_cleared: u32,
    pub terminal: bool,
}

/// Drops `kind` at `placement` and resolves line clears.
pub fn afterstate(board: &Board, kind: PieceKind, placement: Placement) -> DropResult {
    let rot = &kind.rotations()[placement.rotation as usize];
    let col = placement.column as usize;
    assert!(
        col + rot.width <= board.width(),
        "placement outside the board"
    );
    let land = (0..rot.width)
        .map(|j| board.column_height(col + j).saturating_sub(rot.bottoms[j]))
        .max()
        .unwrap_or(0);
    let mut next = *board;
    for (r, &m) in rot.masks.iter().enumerate() {
        next.rows[land + r] |= m << col;
    }
    if land + rot.height > board.height() {
        return DropResult {
            board: next,
            rows_cleared: 0,
            terminal: true,
        };
    }
    let full = next.full_mask();
    let mut write = 0;
    let mut cleared = 0;
    for read in 0..ROWS {
        let row = next.rows[read];
        if row == full {
            cleared += 1;
        } else {
            next.rows[write] = row;
            write += 1;
        }
    }
    for r in write..ROWS {
        next.rows[r] = 0;
    }
    DropResult {
        board: next,
        rows_cleared: cleared,
        terminal: false,
    }
}

/// Points awarded for a drop: one per cleared row.
pub fn score_delta(rows_cleared: u32) -> u32 {
    rows_cleared
}

/// Hole-based shaping reward `exp(-holes / divisor)`.
pub fn shaped_reward_with(board: &Board, divisor: f64) -> f64 {
    (-(count_holes(board) as f64) / divisor).exp()
}

pub fn shaped_reward(board: &Board, variant: TetrisVariant) -> f64 {
    shaped_reward_with(board, variant.reward_divisor())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TetrisVariant {
    /// 10x20 board, S and Z pieces only.
    Sz,
    /// 10x10 board, all seven pieces.
    Tetris10,
}

impl TetrisVariant {
    pub fn width(self) -> usize {
        10
    }

    pub fn height(self) -> usize {
        match self {
            TetrisVariant::Sz => 20,
            TetrisVariant::Tetris10 => 10,
        }
    }

    pub fn pieces(self) -> &'static [PieceKind] {
        match self {
            TetrisVariant::Sz => &PieceKind::ALL[..2],
            TetrisVariant::Tetris10 => &PieceKind::ALL,
        }
    }

    pub fn reward_divisor(self) -> f64 {
        match self {
            TetrisVariant::Sz => 33.0,
            TetrisVariant::Tetris10 => 16.5,
        }
    }

    pub fn empty_board(self) -> Board {
        Board::new(self.width(), self.height()).expect("variant sizes are valid")
    }

    /// Uniform i.i.d. draw from the variant's piece set.
    pub fn spawn<R: Rng + ?Sized>(self, rng: &mut R) -> PieceKind {
        let pieces = self.pieces();
        pieces[rng.random_range(0..pieces.len())]
    }

    /// Total number of (piece, placement) pairs, the width of a per-action
    /// output layer.
    pub fn action_slots(self) -> usize {
        self.pieces()
            .iter()
            .map(|&k| enumerate_actions(self.width(), k).len())
            .sum()
    }

    /// Offset of `kind`'s first action in the per-action output layer.
    pub fn action_offset(self, kind: PieceKind) -> usize {
        self.pieces()
            .iter()
            .take_while(|&&k| k != kind)
            .map(|&k| enumerate_actions(self.width(), k).len())
            .sum()
    }
}

pub fn spawn<R: Rng + ?Sized>(rng: &mut R, variant: TetrisVariant) -> PieceKind {
    variant.spawn(rng)
}
