//! Grid-subgraph lattices and their directional adjacency.
//!
//! Vertices carry 1-based labels `α = column + (row − 1)·M`, so vertex 1 is the
//! top-left corner, `α + 1` is its right-hand neighbour and `α + M` the vertex
//! directly below. Only axis-aligned nearest-neighbour edges are representable.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Lattice II: two sub-lattices joined through the central vertex, plus four
/// isolated vertices. See the comments in the file for the adopted reading.
pub const LATTICE2_SOURCE: &str = include_str!("../data/lattice2.lat");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LatticeError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: edge ({u}, {v}) is not a grid edge of a {side}x{side} lattice")]
    NotGridEdge {
        line: usize,
        u: usize,
        v: usize,
        side: usize,
    },
    #[error("line {line}: duplicate edge ({u}, {v})")]
    DuplicateEdge { line: usize, u: usize, v: usize },
    #[error("line {line}: vertex {vertex} outside [1, {max}]")]
    VertexOutOfRange {
        line: usize,
        vertex: usize,
        max: usize,
    },
    #[error("missing `M <side>` header")]
    MissingHeader,
    #[error("side length must be at least 1")]
    ZeroSide,
}

/// Geometric direction of a move on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Left,
    Right,
    Down,
    Up,
}

impl Direction {
    pub fn opposite(self) -> Direction {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
            Direction::Down => Direction::Up,
            Direction::Up => Direction::Down,
        }
    }

    fn mirrored(self) -> Direction {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
            d => d,
        }
    }
}

/// Chirality 1 → left, 2 → right, 3 → down, 4 → up.
pub const STANDARD_FRAME: [Direction; 4] = [
    Direction::Left,
    Direction::Right,
    Direction::Down,
    Direction::Up,
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    side: usize,
    edges: BTreeSet<(usize, usize)>,
    /// `frame[k]` is the direction chirality `k + 1` moves along.
    frame: [Direction; 4],
    /// 0-based neighbour table indexed by `[vertex][chirality]`.
    table: Vec<[Option<u32>; 4]>,
}

impl Lattice {
    /// Builds a lattice from 1-based edges, validating the grid-subgraph rule.
    pub fn from_edges<I>(side: usize, edges: I) -> Result<Lattice, LatticeError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let numbered = edges.into_iter().map(|e| (0, e));
        Lattice::from_numbered_edges(side, numbered)
    }

    fn from_numbered_edges<I>(side: usize, edges: I) -> Result<Lattice, LatticeError>
    where
        I: IntoIterator<Item = (usize, (usize, usize))>,
    {
        if side == 0 {
            return Err(LatticeError::ZeroSide);
        }
        let max = side * side;
        let mut set = BTreeSet::new();
        for (line, (u, v)) in edges {
            for vertex in [u, v] {
                if vertex == 0 || vertex > max {
                    return Err(LatticeError::VertexOutOfRange { line, vertex, max });
                }
            }
            let (a, b) = (u.min(v), u.max(v));
            let horizontal = b - a == 1 && (a - 1) / side == (b - 1) / side;
            let vertical = b - a == side;
            if !horizontal && !vertical {
                return Err(LatticeError::NotGridEdge { line, u, v, side });
            }
            if !set.insert((a, b)) {
                return Err(LatticeError::DuplicateEdge { line, u, v });
            }
        }
        let mut lattice = Lattice {
            side,
            edges: set,
            frame: STANDARD_FRAME,
            table: Vec::new(),
        };
        lattice.rebuild_table();
        Ok(lattice)
    }

    fn rebuild_table(&mut self) {
        let side = self.side;
        let mut by_dir = vec![[None::<u32>; 4]; side * side];
        let slot = |d: Direction| match d {
            Direction::Left => 0,
            Direction::Right => 1,
            Direction::Down => 2,
            Direction::Up => 3,
        };
        for &(a, b) in &self.edges {
            let (ia, ib) = (a - 1, b - 1);
            if b - a == side {
                by_dir[ia][slot(Direction::Down)] = Some(ib as u32);
                by_dir[ib][slot(Direction::Up)] = Some(ia as u32);
            } else {
                by_dir[ia][slot(Direction::Right)] = Some(ib as u32);
                by_dir[ib][slot(Direction::Left)] = Some(ia as u32);
            }
        }
        self.table = by_dir
            .into_iter()
            .map(|dirs| {
                let mut row = [None; 4];
                for (k, d) in self.frame.iter().enumerate() {
                    row[k] = dirs[slot(*d)];
                }
                row
            })
            .collect();
    }

    /// The full `M × M` grid graph.
    pub fn full_grid(side: usize) -> Lattice {
        assert!(side >= 1, "side length must be at least 1");
        let mut edges = Vec::with_capacity(2 * side * (side - 1));
        for v in 1..=side * side {
            if v % side != 0 {
                edges.push((v, v + 1));
            }
            if v + side <= side * side {
                edges.push((v, v + side));
            }
        }
        Lattice::from_edges(side, edges).expect("grid edges are valid")
    }

    /// The shipped lattice II reconstruction.
    pub fn lattice2() -> Lattice {
        LATTICE2_SOURCE
            .parse()
            .expect("bundled lattice2 file is valid")
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn vertex_count(&self) -> usize {
        self.side * self.side
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn frame(&self) -> [Direction; 4] {
        self.frame
    }

    /// Neighbour of `vertex` (1-based) in the direction of `chirality` (1..=4).
    pub fn neighbor(&self, vertex: usize, chirality: usize) -> Option<usize> {
        assert!(
            (1..=self.vertex_count()).contains(&vertex),
            "vertex {vertex} out of range"
        );
        assert!(
            (1..=4).contains(&chirality),
            "chirality {chirality} out of range"
        );
        self.table[vertex - 1][chirality - 1].map(|v| v as usize + 1)
    }

    /// 0-based neighbour lookup used by the step kernel.
    #[inline]
    pub(crate) fn neighbor_index(&self, vertex: usize, chirality: usize) -> Option<usize> {
        self.table[vertex][chirality].map(|v| v as usize)
    }

    /// Number of present directions at `vertex` (its degree).
    pub fn degree(&self, vertex: usize) -> usize {
        self.table[vertex - 1]
            .iter()
            .filter(|n| n.is_some())
            .count()
    }

    /// Vertex label reflected through the vertical centre line.
    pub fn mirror_vertex(&self, vertex: usize) -> usize {
        let row = (vertex - 1) / self.side;
        let col = (vertex - 1) % self.side;
        row * self.side + (self.side - 1 - col) + 1
    }

    /// Left-right reflection of the lattice together with its direction frame,
    /// so the chirality that moved right before moves left afterwards.
    pub fn mirrored(&self) -> Lattice {
        let edges = self
            .edges
            .iter()
            .map(|&(a, b)| (self.mirror_vertex(a), self.mirror_vertex(b)));
        let mut out =
            Lattice::from_edges(self.side, edges).expect("reflection preserves grid edges");
        out.frame = self.frame.map(Direction::mirrored);
        out.rebuild_table();
        out
    }

    /// Serialises in the line format accepted by [`str::parse`].
    pub fn to_lattice_file(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "M {}", self.side)?;
        for (a, b) in &self.edges {
            writeln!(f, "E {a} {b}")?;
        }
        Ok(())
    }
}

impl FromStr for Lattice {
    type Err = LatticeError;

    /// Parses `M <side>` followed by `E <u> <v>` lines; `#` starts a comment.
    fn from_str(text: &str) -> Result<Lattice, LatticeError> {
        let mut side = None;
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut tokens = content.split_whitespace();
            let tag = tokens.next().unwrap_or("");
            let nums: Result<Vec<usize>, _> = tokens.map(str::parse::<usize>).collect();
            let nums = nums.map_err(|e| LatticeError::Parse {
                line,
                msg: e.to_string(),
            })?;
            match (tag, side, nums.as_slice()) {
                ("M", None, &[m]) => {
                    if m == 0 {
                        return Err(LatticeError::ZeroSide);
                    }
                    side = Some(m);
                }
                ("M", Some(_), _) => {
                    return Err(LatticeError::Parse {
                        line,
                        msg: "repeated `M` header".into(),
                    })
                }
                ("E", Some(_), &[u, v]) => edges.push((line, (u, v))),
                ("E", None, _) => return Err(LatticeError::MissingHeader),
                _ => {
                    return Err(LatticeError::Parse {
                        line,
                        msg: format!("expected `M <side>` or `E <u> <v>`, got `{content}`"),
                    })
                }
            }
        }
        let side = side.ok_or(LatticeError::MissingHeader)?;
        Lattice::from_numbered_edges(side, edges)
    }
}
