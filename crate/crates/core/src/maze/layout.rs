use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Cell coordinates; row 0 is the bottom row, column 0 the left column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Cell {
    pub col: usize,
    pub row: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    North,
    East,
    South,
    West,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::North, Side::East, Side::South, Side::West];

    fn bit(self) -> u8 {
        match self {
            Side::North => 1,
            Side::East => 2,
            Side::South => 4,
            Side::West => 8,
        }
    }

    fn opposite(self) -> Side {
        match self {
            Side::North => Side::South,
            Side::East => Side::West,
            Side::South => Side::North,
            Side::West => Side::East,
        }
    }
}

/// Axis-aligned wall segment in world units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

/// An `n x n` grid of cells with closed/open borders. The world spans
/// `[0, n] x [0, n]`; cell `(col, row)` covers `[col, col+1] x [row, row+1]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MazeLayout {
    n: usize,
    /// Closed-border bitmask per cell, indexed `row * n + col`.
    closed: Vec<u8>,
}

impl MazeLayout {
    /// All borders closed.
    pub fn closed(n: usize) -> Self {
        MazeLayout {
            n,
            closed: vec![0b1111; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn start(&self) -> Cell {
        Cell { col: 0, row: 0 }
    }

    pub fn goal(&self) -> Cell {
        Cell {
            col: 0,
            row: self.n.saturating_sub(1),
        }
    }

    fn index(&self, c: Cell) -> usize {
        c.row * self.n + c.col
    }

    pub fn neighbor(&self, c: Cell, side: Side) -> Option<Cell> {
        match side {
            Side::North if c.row + 1 < self.n => Some(Cell {
                row: c.row + 1,
                ..c
            }),
            Side::East if c.col + 1 < self.n => Some(Cell {
                col: c.col + 1,
                ..c
            }),
            Side::South if c.row > 0 => Some(Cell {
                row: c.row - 1,
                ..c
            }),
            Side::West if c.col > 0 => Some(Cell {
                col: c.col - 1,
                ..c
            }),
            _ => None,
        }
    }

    pub fn is_closed(&self, c: Cell, side: Side) -> bool {
        self.closed[self.index(c)] & side.bit() != 0
    }

    /// Opens or closes an internal border on both of its sides. Outer borders
    /// stay closed.
    pub fn set_border(&mut self, c: Cell, side: Side, closed: bool) {
        let Some(other) = self.neighbor(c, side) else {
            return;
        };
        let (i, j) = (self.index(c), self.index(other));
        if closed {
            self.closed[i] |= side.bit();
            self.closed[j] |= side.opposite().bit();
        } else {
            self.closed[i] &= !side.bit();
            self.closed[j] &= !side.opposite().bit();
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.n).flat_map(move |row| (0..self.n).map(move |col| Cell { col, row }))
    }

    pub fn open_internal_borders(&self) -> usize {
        self.cells()
            .map(|c| {
                [Side::North, Side::East]
                    .into_iter()
                    .filter(|&s| self.neighbor(c, s).is_some() && !self.is_closed(c, s))
                    .count()
            })
            .sum()
    }

    fn reachable_from_start(&self) -> usize {
        if self.n == 0 {
            return 0;
        }
        let mut seen = vec![false; self.n * self.n];
        let mut stack = vec![self.start()];
        seen[0] = true;
        let mut count = 0;
        while let Some(c) = stack.pop() {
            count += 1;
            for side in Side::ALL {
                if self.is_closed(c, side) {
                    continue;
                }
                if let Some(nb) = self.neighbor(c, side) {
                    let k = self.index(nb);
                    if !seen[k] {
                        seen[k] = true;
                        stack.push(nb);
                    }
                }
            }
        }
        count
    }

    /// Border flags agree on both sides of every shared border and the outer
    /// boundary is closed.
    pub fn is_consistent(&self) -> bool {
        self.cells().all(|c| {
            Side::ALL.into_iter().all(|s| match self.neighbor(c, s) {
                None => self.is_closed(c, s),
                Some(nb) => self.is_closed(c, s) == self.is_closed(nb, s.opposite()),
            })
        })
    }

    /// Spanning-tree check: consistent, connected and exactly `n^2 - 1` open
    /// internal borders.
    pub fn is_perfect(&self) -> bool {
        self.n >= 1
            && self.is_consistent()
            && self.reachable_from_start() == self.n * self.n
            && self.open_internal_borders() == self.n * self.n - 1
    }

    /// Closed borders as world-space segments, each border listed once.
    pub fn wall_segments(&self) -> Vec<Segment> {
        let mut segs = Vec::new();
        for c in self.cells() {
            let (x, y) = (c.col as f64, c.row as f64);
            if self.is_closed(c, Side::South) {
                segs.push(Segment {
                    a: [x, y],
                    b: [x + 1.0, y],
                });
            }
            if self.is_closed(c, Side::West) {
                segs.push(Segment {
                    a: [x, y],
                    b: [x, y + 1.0],
                });
            }
            if c.row + 1 == self.n && self.is_closed(c, Side::North) {
                segs.push(Segment {
                    a: [x, y + 1.0],
                    b: [x + 1.0, y + 1.0],
                });
            }
            if c.col + 1 == self.n && self.is_closed(c, Side::East) {
                segs.push(Segment {
                    a: [x + 1.0, y],
                    b: [x + 1.0, y + 1.0],
                });
            }
        }
        segs
    }

    /// Row-major (bottom row first) east/south closed flags, two bits per
    /// cell, packed MSB first and hex encoded.
    pub fn canonical_hex(&self) -> String {
        let bits: Vec<bool> = self
            .cells()
            .flat_map(|c| {
                [
                    self.is_closed(c, Side::East),
                    self.is_closed(c, Side::South),
                ]
            })
            .collect();
        let bytes: Vec<u8> = bits
            .chunks(8)
            .map(|chunk| {
                chunk
                    .iter()
                    .enumerate()
                    .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i)))
            })
            .collect();
        hex::encode(bytes)
    }

    pub fn from_canonical_hex(n: usize, text: &str) -> Result<Self> {
        let bytes = hex::decode(text).map_err(|e| Error::format("maze encoding", e.to_string()))?;
        let nbits = 2 * n * n;
        if bytes.len() != nbits.div_ceil(8) {
            return Err(Error::format(
                "maze encoding",
                format!(
                    "expected {} bytes for n={n}, got {}",
                    nbits.div_ceil(8),
                    bytes.len()
                ),
            ));
        }
        let bit = |i: usize| bytes[i / 8] >> (7 - i % 8) & 1 == 1;
        let mut layout = MazeLayout::closed(n);
        for c in layout.clone().cells() {
            let k = 2 * (c.row * n + c.col);
            let (east, south) = (bit(k), bit(k + 1));
            if layout.neighbor(c, Side::East).is_none() && !east
                || layout.neighbor(c, Side::South).is_none() && !south
            {
                return Err(Error::format(
                    "maze encoding",
                    "outer boundary must be closed",
                ));
            }
            layout.set_border(c, Side::East, east);
            layout.set_border(c, Side::South, south);
        }
        Ok(layout)
    }

    /// ASCII drawing, top row first; `S` marks the start cell, `G` the goal.
    pub fn render_ascii(&self) -> String {
        let mut out = String::new();
        for row in (0..self.n).rev() {
            for col in 0..self.n {
                let c = Cell { col, row };
                out.push('+');
                out.push_str(if self.is_closed(c, Side::North) {
                    "---"
                } else {
                    "   "
                });
            }
            out.push_str("+\n");
            for col in 0..self.n {
                let c = Cell { col, row };
                out.push(if self.is_closed(c, Side::West) {
                    '|'
                } else {
                    ' '
                });
                let mark = match (c == self.start(), c == self.goal()) {
                    (true, true) => "S/G",
                    (true, false) => " S ",
                    (false, true) => " G ",
                    _ => "   ",
                };
                out.push_str(mark);
            }
            out.push_str("|\n");
        }
        for _ in 0..self.n {
            out.push_str("+---");
        }
        let _ = writeln!(out, "+");
        out
    }
}

/// Depth-first maze carving with backtracking from a random start cell.
pub fn generate_maze<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<MazeLayout> {
    if n == 0 {
        return Err(Error::config("n", "maze side must be at least 1"));
    }
    let mut layout = MazeLayout::closed(n);
    let mut visited = vec![false; n * n];
    let first = Cell {
        col: rng.random_range(0..n),
        row: rng.random_range(0..n),
    };
    visited[layout.index(first)] = true;
    let mut stack = vec![first];
    let mut options = Vec::with_capacity(4);
    while let Some(&cur) = stack.last() {
        options.clear();
        for side in Side::ALL {
            if let Some(nb) = layout.neighbor(cur, side) {
                if !visited[layout.index(nb)] {
                    options.push((side, nb));
                }
            }
        }
        match options.choose(rng) {
            Some(&(side, nb)) => {
                layout.set_border(cur, side, false);
                visited[layout.index(nb)] = true;
                stack.push(nb);
            }
            None => {
                stack.pop();
            }
        }
    }
    Ok(layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn single_cell() {
        let m = generate_maze(1, &mut stream(0, &[])).unwrap();
        assert_eq!(m.open_internal_borders(), 0);
        assert_eq!(m.start(), m.goal());
        assert!(m.is_perfect());
        assert_eq!(m.wall_segments().len(), 4);
    }

    #[test]
    fn zero_side_rejected() {
        assert!(generate_maze(0, &mut stream(0, &[])).is_err());
    }

    #[test]
    fn eight_by_eight_is_spanning_tree() {
        for seed in 0..50 {
            let m = generate_maze(8, &mut stream(seed, &[])).unwrap();
            assert_eq!(m.open_internal_borders(), 63);
            assert!(m.is_perfect());
            assert_eq!(m.goal(), Cell { col: 0, row: 7 });
        }
    }

    #[test]
    fn same_seed_same_maze() {
        let a = generate_maze(10, &mut stream(42, &[])).unwrap();
        let b = generate_maze(10, &mut stream(42, &[])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fully_closed_is_not_perfect() {
        assert!(!MazeLayout::closed(3).is_perfect());
        let mut m = generate_maze(4, &mut stream(3, &[])).unwrap();
        let c = Cell { col: 1, row: 1 };
        let side = Side::ALL
            .into_iter()
            .find(|&s| m.is_closed(c, s) && m.neighbor(c, s).is_some());
        if let Some(s) = side {
            m.set_border(c, s, false);
            assert!(!m.is_perfect());
        }
    }

    #[test]
    fn canonical_encoding_round_trips() {
        for n in [1, 2, 5, 8] {
            let m = generate_maze(n, &mut stream(n as u64, &[])).unwrap();
            let hex = m.canonical_hex();
            assert_eq!(hex.len(), 2 * (2 * n * n).div_ceil(8));
            assert_eq!(MazeLayout::from_canonical_hex(n, &hex).unwrap(), m);
        }
        assert!(MazeLayout::from_canonical_hex(2, "00").is_err());
        assert!(MazeLayout::from_canonical_hex(2, "zz").is_err());
        assert!(MazeLayout::from_canonical_hex(2, "000").is_err());
    }

    #[test]
    fn segments_count_matches_closed_borders() {
        let m = generate_maze(6, &mut stream(9, &[])).unwrap();
        let internal_closed = 2 * 6 * 5 - m.open_internal_borders();
        assert_eq!(m.wall_segments().len(), internal_closed + 4 * 6);
    }

    #[test]
    fn ascii_marks_start_and_goal() {
        let m = generate_maze(3, &mut stream(1, &[])).unwrap();
        let art = m.render_ascii();
        assert_eq!(art.lines().count(), 7);
        assert!(art.lines().nth(1).unwrap().contains('G'));
        assert!(art.lines().nth(5).unwrap().contains('S'));
    }
}
