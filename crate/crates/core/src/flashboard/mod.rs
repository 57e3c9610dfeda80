//! Virtual flashboards.
//!
//! The physical 6x6 grid never changes. A scheme only decides which cells
//! light up together: each [`VirtualLayout`] places every symbol on a
//! virtual 6x6 grid, and the virtual rows and columns become the
//! highlight groups.

mod huffman;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use huffman::{
    build_huffman, huffman_next_flash, HuffmanCursor, HuffmanNode, HuffmanStep, HuffmanTree,
    NodeId, NodeKind,
};

use crate::error::{Error, Result};
use crate::symbol::{BoardVector, SymbolId, SymbolSet, GRID, NUM_SYMBOLS};

/// The static alphabetical board: `A`..`Z`, space, backspace, eight
/// suggestion slots, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhysicalBoard;

impl PhysicalBoard {
    pub fn cells() -> [SymbolId; NUM_SYMBOLS] {
        std::array::from_fn(|i| SymbolId::new(i).expect("index in range"))
    }

    pub fn cell_at(row: usize, col: usize) -> SymbolId {
        SymbolId::new(row * GRID + col).expect("cell in range")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutScheme {
    /// Virtual grid identical to the physical board.
    Alphabetical,
    /// Row-major in descending prior.
    Sequential,
    /// Main diagonal first, then wrap-around diagonals alternating above
    /// and below it, in descending prior.
    Diagonal,
}

impl FromStr for LayoutScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "alphabetical" => Ok(LayoutScheme::Alphabetical),
            "sequential" => Ok(LayoutScheme::Sequential),
            "diagonal" => Ok(LayoutScheme::Diagonal),
            _ => Err(Error::UnknownScheme(s.to_owned())),
        }
    }
}

/// Column offsets of the six wrap-around diagonals in fill order.
const DIAGONAL_OFFSETS: [usize; GRID] = [0, 1, 5, 2, 4, 3];

#[derive(Clone, Debug, PartialEq)]
pub struct VirtualLayout {
    scheme: LayoutScheme,
    placement: [(u8, u8); NUM_SYMBOLS],
    grid: [[SymbolId; GRID]; GRID],
}

impl VirtualLayout {
    pub fn scheme(&self) -> LayoutScheme {
        self.scheme
    }

    pub fn position(&self, s: SymbolId) -> (usize, usize) {
        let (r, c) = self.placement[s.index()];
        (r as usize, c as usize)
    }

    pub fn at(&self, row: usize, col: usize) -> SymbolId {
        self.grid[row][col]
    }

    pub fn row(&self, row: usize) -> SymbolSet {
        self.grid[row].iter().copied().collect()
    }

    pub fn column(&self, col: usize) -> SymbolSet {
        self.grid.iter().map(|r| r[col]).collect()
    }

    /// Symbol name to virtual `[row, col]`, for fixture diffing.
    pub fn to_json(&self) -> String {
        let map: BTreeMap<String, (usize, usize)> = SymbolId::all()
            .map(|s| (s.to_string(), self.position(s)))
            .collect();
        serde_json::to_string_pretty(&map).expect("plain map serializes")
    }
}

/// Symbols sorted by descending prior; ties go to the lower id.
pub fn rank_by_prior(prior: &BoardVector) -> [SymbolId; NUM_SYMBOLS] {
    let mut order = PhysicalBoard::cells();
    order.sort_by(|a, b| {
        let (pa, pb) = (prior[a.index()], prior[b.index()]);
        pb.partial_cmp(&pa)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    });
    order
}

pub fn build_layout(scheme: LayoutScheme, prior: &BoardVector) -> VirtualLayout {
    let order = match scheme {
        LayoutScheme::Alphabetical => PhysicalBoard::cells(),
        _ => rank_by_prior(prior),
    };
    let mut placement = [(0u8, 0u8); NUM_SYMBOLS];
    let mut grid = [[SymbolId::SPACE; GRID]; GRID];
    for (rank, sym) in order.into_iter().enumerate() {
        let (row, col) = match scheme {
            LayoutScheme::Alphabetical | LayoutScheme::Sequential => (rank / GRID, rank % GRID),
            LayoutScheme::Diagonal => {
                let (diag, row) = (rank / GRID, rank % GRID);
                (row, (row + DIAGONAL_OFFSETS[diag]) % GRID)
            }
        };
        placement[sym.index()] = (row as u8, col as u8);
        grid[row][col] = sym;
    }
    VirtualLayout {
        scheme,
        placement,
        grid,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupLabel {
    Row(u8),
    Column(u8),
    Subtree,
    Leaf,
}

/// One highlight: the cells lit together and their summed prior.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlashGroup {
    pub members: SymbolSet,
    pub weight: f64,
    pub label: GroupLabel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderMode {
    /// Uniform permutation of the twelve groups per sequence.
    Random,
    /// Rows top to bottom, then columns left to right.
    Deterministic,
    /// Descending group prior mass.
    Weighted,
}

/// The twelve virtual row/column groups of one flash sequence.
pub fn highlight_schedule<R: Rng + ?Sized>(
    layout: &VirtualLayout,
    prior: &BoardVector,
    mode: OrderMode,
    rng: &mut R,
) -> Vec<FlashGroup> {
    let mut groups: Vec<FlashGroup> = (0..GRID)
        .map(|r| {
            let members = layout.row(r);
            FlashGroup {
                members,
                weight: members.mass(prior),
                label: GroupLabel::Row(r as u8),
            }
        })
        .chain((0..GRID).map(|c| {
            let members = layout.column(c);
            FlashGroup {
                members,
                weight: members.mass(prior),
                label: GroupLabel::Column(c as u8),
            }
        }))
        .collect();
    match mode {
        OrderMode::Deterministic => {}
        OrderMode::Random => groups.shuffle(rng),
        OrderMode::Weighted => {
            // stable sort keeps rows ahead of columns on equal mass
            groups.sort_by(|a, b| {
                b.weight
                    .partial_cmp(&a.weight)
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
        }
    }
    groups
}

/// Complete flashing schemes compared by the simulator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Random,
    Deterministic,
    FreqSorted,
    Diagonal,
    Huffman,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Random,
        Scheme::Deterministic,
        Scheme::FreqSorted,
        Scheme::Diagonal,
        Scheme::Huffman,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Random => "random",
            Scheme::Deterministic => "deterministic",
            Scheme::FreqSorted => "freqsorted",
            Scheme::Diagonal => "diagonal",
            Scheme::Huffman => "huffman",
        }
    }

    /// Layout and group order for row/column schemes; `None` for Huffman.
    pub fn row_column(self) -> Option<(LayoutScheme, OrderMode)> {
        match self {
            Scheme::Random => Some((LayoutScheme::Alphabetical, OrderMode::Random)),
            Scheme::Deterministic => Some((LayoutScheme::Alphabetical, OrderMode::Deterministic)),
            Scheme::FreqSorted => Some((LayoutScheme::Sequential, OrderMode::Weighted)),
            Scheme::Diagonal => Some((LayoutScheme::Diagonal, OrderMode::Weighted)),
            Scheme::Huffman => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" | "regular" => Ok(Scheme::Random),
            "deterministic" => Ok(Scheme::Deterministic),
            "freqsorted" | "frequency-sorted" | "sequential" => Ok(Scheme::FreqSorted),
            "diagonal" => Ok(Scheme::Diagonal),
            "huffman" => Ok(Scheme::Huffman),
            _ => Err(Error::UnknownScheme(s.to_owned())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn english_prior() -> BoardVector {
        // Relative letter frequencies of English text (percent).
        const FREQ: [f64; 26] = [
            8.167, 1.492, 2.782, 4.253, 12.702, 2.228, 2.015, 6.094, 6.966, 0.153, 0.772, 4.025,
            2.406, 6.749, 7.507, 1.929, 0.095, 5.987, 6.327, 9.056, 2.758, 0.978, 2.360, 0.150,
            1.974, 0.074,
        ];
        let total: f64 = FREQ.iter().sum();
        let mut prior = [0.0; NUM_SYMBOLS];
        for (p, f) in prior.iter_mut().zip(FREQ) {
            *p = f / total;
        }
        prior
    }

    fn sym(c: char) -> SymbolId {
        SymbolId::from_char(c).unwrap()
    }

    #[test]
    fn diagonal_layout_puts_top_letters_on_main_diagonal() {
        let layout = build_layout(LayoutScheme::Diagonal, &english_prior());
        let diag: Vec<SymbolId> = (0..GRID).map(|i| layout.at(i, i)).collect();
        assert_eq!(&diag[..3], &[sym('E'), sym('T'), sym('A')]);
        let mut set: Vec<char> = diag.iter().map(|s| s.as_char().unwrap()).collect();
        set.sort();
        assert_eq!(set, vec!['A', 'E', 'I', 'N', 'O', 'T']);
    }

    #[test]
    fn diagonal_rank_is_nonincreasing_along_fill_order() {
        let prior = english_prior();
        let layout = build_layout(LayoutScheme::Diagonal, &prior);
        let mut last = f64::INFINITY;
        for off in DIAGONAL_OFFSETS {
            for r in 0..GRID {
                let p = prior[layout.at(r, (r + off) % GRID).index()];
                assert!(p <= last);
                last = p;
            }
        }
    }

    #[test]
    fn uniform_sequential_equals_alphabetical() {
        let prior = [1.0 / 36.0; NUM_SYMBOLS];
        let seq = build_layout(LayoutScheme::Sequential, &prior);
        for s in SymbolId::all() {
            assert_eq!(seq.position(s), s.physical_cell());
        }
    }

    #[test]
    fn unknown_scheme_is_rejected() {
        assert!(matches!(
            "checkerboard".parse::<Scheme>(),
            Err(Error::UnknownScheme(_))
        ));
        assert!("zigzag".parse::<LayoutScheme>().is_err());
        assert_eq!("Diagonal".parse::<Scheme>().unwrap(), Scheme::Diagonal);
    }

    #[test]
    fn weighted_schedule_starts_with_heaviest_group() {
        let prior = english_prior();
        let layout = build_layout(LayoutScheme::Diagonal, &prior);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sched = highlight_schedule(&layout, &prior, OrderMode::Weighted, &mut rng);
        let max = sched.iter().map(|g| g.weight).fold(f64::MIN, f64::max);
        assert_eq!(sched[0].weight, max);
        assert!(sched.windows(2).all(|w| w[0].weight >= w[1].weight));
    }

    #[test]
    fn random_schedule_is_reproducible_under_seed() {
        let prior = english_prior();
        let layout = build_layout(LayoutScheme::Alphabetical, &prior);
        let a = highlight_schedule(
            &layout,
            &prior,
            OrderMode::Random,
            &mut ChaCha8Rng::seed_from_u64(9),
        );
        let b = highlight_schedule(
            &layout,
            &prior,
            OrderMode::Random,
            &mut ChaCha8Rng::seed_from_u64(9),
        );
        assert_eq!(a, b);
    }

    #[test]
    fn every_schedule_covers_each_cell_twice() {
        let prior = english_prior();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for scheme in [
            LayoutScheme::Alphabetical,
            LayoutScheme::Sequential,
            LayoutScheme::Diagonal,
        ] {
            let layout = build_layout(scheme, &prior);
            for mode in [
                OrderMode::Random,
                OrderMode::Deterministic,
                OrderMode::Weighted,
            ] {
                let sched = highlight_schedule(&layout, &prior, mode, &mut rng);
                assert_eq!(sched.len(), 12);
                for s in SymbolId::all() {
                    let rows = sched
                        .iter()
                        .filter(|g| matches!(g.label, GroupLabel::Row(_)) && g.members.contains(s))
                        .count();
                    let cols = sched
                        .iter()
                        .filter(|g| {
                            matches!(g.label, GroupLabel::Column(_)) && g.members.contains(s)
                        })
                        .count();
                    assert_eq!((rows, cols), (1, 1), "{scheme:?} {mode:?} {s}");
                }
            }
        }
    }

    #[test]
    fn layout_json_lists_every_symbol() {
        let layout = build_layout(LayoutScheme::Alphabetical, &[0.0; NUM_SYMBOLS]);
        let map: BTreeMap<String, (usize, usize)> =
            serde_json::from_str(&layout.to_json()).unwrap();
        assert_eq!(map.len(), NUM_SYMBOLS);
        assert_eq!(map["SP"], (4, 2));
        assert_eq!(map["W8"], (5, 5));
    }
}
