//! Column-height features and their one-hot state encoding.
//!
//! A [`FeatureSet`] holds, for a board of width `W` and visible height `H`:
//! `W` column heights, `W - 1` signed neighbour differences
//! `height[i + 1] - height[i]`, and the hole count. With `W = 10` that is
//! 20 scalars.
//!
//! [`encode_binary`] turns a feature set into one one-hot group per scalar,
//! concatenated in this frozen order:
//!
//! | group | slots | value of slot `j` |
//! |---|---|---|
//! | height of column `c` (`c = 0..W`) | `H + 1` | `j` |
//! | diff `i` (`i = 0..W-1`) | `2D + 1` | `j - D` |
//! | holes | `K + 1` | `j` |
//!
//! Diffs are clamped to `[-D, D]` and holes to `[0, K]`. The two shipped
//! layouts are
//!
//! * 10x20: `H = 20, D = 12, K = 24`, so `210 + 225 + 25 = 460` slots;
//! * 10x10: `H = 10, D = 7, K = 14`, so `110 + 135 + 15 = 260` slots.

use serde::{Deserialize, Serialize};

use crate::env::tetris::{count_holes, Board, TetrisVariant};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureSet {
    pub heights: Vec<u32>,
    pub diffs: Vec<i32>,
    pub holes: u32,
}

/// Column heights (clamped to the visible height), neighbour differences and
/// holes.
pub fn extract_features(board: &Board) -> FeatureSet {
    let h = board.height() as u32;
    let heights: Vec<u32> = (0..board.width())
        .map(|c| (board.column_height(c) as u32).min(h))
        .collect();
    let diffs = heights
        .windows(2)
        .map(|w| w[1] as i32 - w[0] as i32)
        .collect();
    FeatureSet {
        heights,
        diffs,
        holes: count_holes(board),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncodingLayout {
    pub width: usize,
    pub max_height: u32,
    pub diff_clamp: i32,
    pub hole_clamp: u32,
}

impl EncodingLayout {
    pub fn for_variant(variant: TetrisVariant) -> Self {
        match variant {
            TetrisVariant::Sz => EncodingLayout {
                width: 10,
                max_height: 20,
                diff_clamp: 12,
                hole_clamp: 24,
            },
            TetrisVariant::Tetris10 => EncodingLayout {
                width: 10,
                max_height: 10,
                diff_clamp: 7,
                hole_clamp: 14,
            },
        }
    }

    pub fn height_slots(&self) -> usize {
        self.max_height as usize + 1
    }

    pub fn diff_slots(&self) -> usize {
        2 * self.diff_clamp as usize + 1
    }

    pub fn hole_slots(&self) -> usize {
        self.hole_clamp as usize + 1
    }

    pub fn len(&self) -> usize {
        self.width * self.height_slots() + (self.width - 1) * self.diff_slots() + self.hole_slots()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of one-hot groups, and so of set bits per vector.
    pub fn groups(&self) -> usize {
        2 * self.width
    }

    /// Index of the set bit for each group, in group order.
    pub fn active_indices(&self, f: &FeatureSet) -> Vec<usize> {
        assert_eq!(f.heights.len(), self.width, "feature width mismatch");
        let mut out = Vec::with_capacity(self.groups());
        let mut base = 0;
        for &h in &f.heights {
            out.push(base + h.min(self.max_height) as usize);
            base += self.height_slots();
        }
        for &d in &f.diffs {
            out.push(
                base + (d.clamp(-self.diff_clamp, self.diff_clamp) + self.diff_clamp) as usize,
            );
            base += self.diff_slots();
        }
        out.push(base + f.holes.min(self.hole_clamp) as usize);
        out
    }
}

/// Fixed-length binary state vector with one set bit per feature group.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryStateVector {
    bits: Vec<bool>,
}

impl BinaryStateVector {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn ones(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.bits
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect()
    }
}

pub fn encode_binary(features: &FeatureSet, layout: &EncodingLayout) -> BinaryStateVector {
    let mut bits = vec![false; layout.len()];
    for i in layout.active_indices(features) {
        bits[i] = true;
    }
    BinaryStateVector { bits }
}

/// Writes the one-hot encoding of `board` as 0.0/1.0 into `out`.
pub fn encode_board_into(board: &Board, layout: &EncodingLayout, out: &mut [f64]) {
    assert_eq!(out.len(), layout.len(), "encoding buffer length mismatch");
    out.fill(0.0);
    for i in layout.active_indices(&extract_features(board)) {
        out[i] = 1.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::tetris::{afterstate, enumerate_actions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Test-only inverse of the encoding.
    fn decode(v: &BinaryStateVector, layout: &EncodingLayout) -> FeatureSet {
        let ones = v.ones();
        assert_eq!(ones.len(), layout.groups());
        let mut base = 0;
        let mut heights = Vec::new();
        for &i in &ones[..layout.width] {
            heights.push((i - base) as u32);
            base += layout.height_slots();
        }
        let mut diffs = Vec::new();
        for &i in &ones[layout.width..2 * layout.width - 1] {
            diffs.push((i - base) as i32 - layout.diff_clamp);
            base += layout.diff_slots();
        }
        let holes = (ones[2 * layout.width - 1] - base) as u32;
        FeatureSet {
            heights,
            diffs,
            holes,
        }
    }

    fn clamp(f: &FeatureSet, layout: &EncodingLayout) -> FeatureSet {
        FeatureSet {
            heights: f
                .heights
                .iter()
                .map(|&h| h.min(layout.max_height))
                .collect(),
            diffs: f
                .diffs
                .iter()
                .map(|&d| d.clamp(-layout.diff_clamp, layout.diff_clamp))
                .collect(),
            holes: f.holes.min(layout.hole_clamp),
        }
    }

    fn random_board(rng: &mut ChaCha8Rng, variant: TetrisVariant) -> Board {
        let mut board = variant.empty_board();
        let drops = rng.random_range(0..40);
        for _ in 0..drops {
            let kind = variant.spawn(rng);
            let actions = enumerate_actions(board.width(), kind);
            let p = actions[rng.random_range(0..actions.len())];
            let res = afterstate(&board, kind, p);
            if res.terminal {
                break;
            }
            board = res.board;
        }
        board
    }

    #[test]
    fn layout_lengths() {
        assert_eq!(EncodingLayout::for_variant(TetrisVariant::Sz).len(), 460);
        assert_eq!(
            EncodingLayout::for_variant(TetrisVariant::Tetris10).len(),
            260
        );
    }

    #[test]
    fn empty_board_features_and_bits() {
        let layout = EncodingLayout::for_variant(TetrisVariant::Sz);
        let f = extract_features(&TetrisVariant::Sz.empty_board());
        assert_eq!(f.heights, vec![0; 10]);
        assert_eq!(f.diffs, vec![0; 9]);
        assert_eq!(f.holes, 0);
        let v = encode_binary(&f, &layout);
        let mut expected: Vec<usize> = (0..10).map(|c| c * 21).collect();
        expected.extend((0..9).map(|i| 210 + i * 25 + 12));
        expected.push(435);
        assert_eq!(v.ones(), expected);
    }

    #[test]
    fn bottom_row_missing_last_column() {
        let mut board = TetrisVariant::Sz.empty_board();
        for c in 0..9 {
            board.set(0, c, true);
        }
        let f = extract_features(&board);
        assert_eq!(f.heights, vec![1, 1, 1, 1, 1, 1, 1, 1, 1, 0]);
        assert_eq!(f.diffs, vec![0, 0, 0, 0, 0, 0, 0, 0, -1]);
        assert_eq!(f.holes, 0);
    }

    #[test]
    fn out_of_range_values_clamp() {
        let layout = EncodingLayout::for_variant(TetrisVariant::Tetris10);
        let f = FeatureSet {
            heights: vec![10, 0, 0, 0, 0, 0, 0, 0, 0, 10],
            diffs: vec![-10, 0, 0, 0, 0, 0, 0, 0, 10],
            holes: 40,
        };
        let back = decode(&encode_binary(&f, &layout), &layout);
        assert_eq!(back.diffs[0], -7);
        assert_eq!(back.diffs[8], 7);
        assert_eq!(back.holes, 14);
    }

    #[test]
    fn random_boards_encode_consistently() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for variant in [TetrisVariant::Sz, TetrisVariant::Tetris10] {
            let layout = EncodingLayout::for_variant(variant);
            for _ in 0..2_000 {
                let board = random_board(&mut rng, variant);
                let f = extract_features(&board);
                let heights = board.column_heights();
                for i in 0..9 {
                    assert_eq!(f.diffs[i], heights[i + 1] as i32 - heights[i] as i32);
                }
                let v = encode_binary(&f, &layout);
                assert_eq!(v.len(), layout.len());
                assert_eq!(v.count_ones(), 20);
                assert_eq!(decode(&v, &layout), clamp(&f, &layout));
                let mut buf = vec![0.0; layout.len()];
                encode_board_into(&board, &layout, &mut buf);
                assert_eq!(buf, v.to_f64());
            }
        }
    }

    #[test]
    fn encoding_is_injective_on_clamped_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let layout = EncodingLayout::for_variant(TetrisVariant::Sz);
        let mut seen = std::collections::HashMap::new();
        for _ in 0..20_000 {
            let f = FeatureSet {
                heights: (0..10).map(|_| rng.random_range(0..=20)).collect(),
                diffs: (0..9).map(|_| rng.random_range(-14..=14)).collect(),
                holes: rng.random_range(0..30),
            };
            let key = clamp(&f, &layout);
            let v = encode_binary(&f, &layout);
            if let Some(prev) = seen.insert(v, key.clone()) {
                assert_eq!(prev, key, "two clamped feature sets share an encoding");
            }
        }
    }
}
