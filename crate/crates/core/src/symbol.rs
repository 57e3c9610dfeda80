//! The 36-cell speller alphabet.
//!
//! Ids are laid out in physical row-major order: `A`..`Z` (0..=25), word
//! space (26), backspace (27) and eight word-suggestion slots (28..=35).

use serde::{Deserialize, Serialize};
use std::fmt;

pub const NUM_SYMBOLS: usize = 36;
pub const NUM_LETTERS: usize = 26;
/// Letters plus word space: the symbols the language model predicts.
pub const NUM_CHARS: usize = 27;
pub const SLOT_COUNT: usize = 8;
pub const GRID: usize = 6;

/// Prior or posterior over every board cell.
pub type BoardVector = [f64; NUM_SYMBOLS];
/// Distribution over letters and word space, indexed like [`SymbolId`].
pub type CharVector = [f64; NUM_CHARS];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SymbolId(u8);

impl SymbolId {
    pub const SPACE: SymbolId = SymbolId(26);
    pub const BACKSPACE: SymbolId = SymbolId(27);
    pub const FIRST_SLOT: SymbolId = SymbolId(28);

    pub fn new(index: usize) -> Option<Self> {
        (index < NUM_SYMBOLS).then_some(SymbolId(index as u8))
    }

    pub fn slot(slot: usize) -> Option<Self> {
        (slot < SLOT_COUNT).then(|| SymbolId((28 + slot) as u8))
    }

    /// Maps an uppercase letter or space onto its cell.
    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'A'..='Z' => Some(SymbolId(c as u8 - b'A')),
            ' ' => Some(Self::SPACE),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_letter(self) -> bool {
        (self.0 as usize) < NUM_LETTERS
    }

    /// Letter or word space.
    pub fn is_char(self) -> bool {
        (self.0 as usize) < NUM_CHARS
    }

    pub fn is_backspace(self) -> bool {
        self == Self::BACKSPACE
    }

    pub fn slot_index(self) -> Option<usize> {
        (self.0 >= 28).then(|| self.0 as usize - 28)
    }

    pub fn as_char(self) -> Option<char> {
        match self.0 {
            0..=25 => Some((b'A' + self.0) as char),
            26 => Some(' '),
            _ => None,
        }
    }

    /// Physical (row, col) on the static board.
    pub fn physical_cell(self) -> (usize, usize) {
        (self.index() / GRID, self.index() % GRID)
    }

    pub fn all() -> impl Iterator<Item = SymbolId> {
        (0..NUM_SYMBOLS as u8).map(SymbolId)
    }
}

impl fmt::Display for SymbolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            0..=25 => write!(f, "{}", (b'A' + self.0) as char),
            26 => f.write_str("SP"),
            27 => f.write_str("BS"),
            s => write!(f, "W{}", s - 27),
        }
    }
}

/// Compact set of board cells.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymbolSet(u64);

impl SymbolSet {
    pub fn empty() -> Self {
        SymbolSet(0)
    }

    pub fn insert(&mut self, s: SymbolId) {
        self.0 |= 1 << s.index();
    }

    pub fn contains(self, s: SymbolId) -> bool {
        self.0 & (1 << s.index()) != 0
    }

    pub fn union(self, other: SymbolSet) -> SymbolSet {
        SymbolSet(self.0 | other.0)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = SymbolId> {
        SymbolId::all().filter(move |s| self.contains(*s))
    }

    pub fn mass(self, prior: &BoardVector) -> f64 {
        self.iter().map(|s| prior[s.index()]).sum()
    }
}

impl FromIterator<SymbolId> for SymbolSet {
    fn from_iter<I: IntoIterator<Item = SymbolId>>(iter: I) -> Self {
        let mut set = SymbolSet::empty();
        for s in iter {
            set.insert(s);
        }
        set
    }
}
