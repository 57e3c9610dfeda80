use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbol::{SymbolId, NUM_CHARS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Unigram,
    Bigram,
    Trigram,
    Word,
    Biword,
}

impl Level {
    pub const ALL: [Level; 5] = [
        Level::Unigram,
        Level::Bigram,
        Level::Trigram,
        Level::Word,
        Level::Biword,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Level::Unigram => "unigram",
            Level::Bigram => "bigram",
            Level::Trigram => "trigram",
            Level::Word => "word",
            Level::Biword => "biword",
        }
    }

    fn fixed_key_len(self) -> Option<usize> {
        match self {
            Level::Unigram => Some(1),
            Level::Bigram => Some(2),
            Level::Trigram => Some(3),
            Level::Word | Level::Biword => None,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Level::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model level `{s}`")))
    }
}

/// Counts of every letter/space that follows one context string.
#[derive(Clone, Debug, PartialEq)]
pub struct Continuations {
    pub counts: [u32; NUM_CHARS],
    pub total: u64,
    pub distinct: u32,
}

impl Default for Continuations {
    fn default() -> Self {
        Continuations {
            counts: [0; NUM_CHARS],
            total: 0,
            distinct: 0,
        }
    }
}

/// One level of the model hierarchy.
///
/// `counts` holds the stored n-gram keys. The context count used as a
/// smoothing denominator is the number of stored keys that extend the
/// context by one character, so continuation counts always sum to it.
#[derive(Clone, Debug)]
pub struct CountTable {
    level: Level,
    counts: HashMap<String, u64>,
    contexts: HashMap<String, Continuations>,
    total: u64,
}

static EMPTY: Continuations = Continuations {
    counts: [0; NUM_CHARS],
    total: 0,
    distinct: 0,
};

impl CountTable {
    pub fn new(level: Level) -> Self {
        CountTable {
            level,
            counts: HashMap::new(),
            contexts: HashMap::new(),
            total: 0,
        }
    }

    pub(crate) fn from_counts(level: Level, counts: HashMap<String, u64>) -> Result<Self> {
        let mut table = CountTable::new(level);
        for (key, count) in counts {
            table.insert(key, count)?;
        }
        Ok(table)
    }

    pub(crate) fn add(&mut self, key: &str) {
        *self.counts.entry(key.to_owned()).or_insert(0) += 1;
        self.total += 1;
        let (ctx, last) = split_last(key).expect("keys are nonempty");
        let entry = self.contexts.entry(ctx.to_owned()).or_default();
        let slot = &mut entry.counts[last.index()];
        if *slot == 0 {
            entry.distinct += 1;
        }
        *slot += 1;
        entry.total += 1;
    }

    fn insert(&mut self, key: String, count: u64) -> Result<()> {
        if count == 0 {
            return Err(Error::InvalidArgument(format!(
                "{} table: zero count for key `{key}`",
                self.level
            )));
        }
        if let Some(len) = self.level.fixed_key_len() {
            if key.len() != len {
                return Err(Error::InvalidArgument(format!(
                    "{} table: key `{key}` must have length {len}",
                    self.level
                )));
            }
        }
        let (ctx, last) = split_last(&key).ok_or_else(|| {
            Error::InvalidArgument(format!("{} table: invalid key `{key}`", self.level))
        })?;
        let entry = self.contexts.entry(ctx.to_owned()).or_default();
        if entry.counts[last.index()] == 0 {
            entry.distinct += 1;
        }
        entry.counts[last.index()] = u32::try_from(count)
            .map_err(|_| Error::InvalidArgument(format!("count overflow for `{key}`")))?;
        entry.total += count;
        self.total += count;
        self.counts.insert(key, count);
        Ok(())
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn count(&self, key: &str) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    /// Sum of all stored counts; for the unigram level this is the
    /// `unigram_model('')` denominator.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn continuations(&self, context: &str) -> &Continuations {
        self.contexts.get(context).unwrap_or(&EMPTY)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Writes `key<TAB>count` lines sorted by key.
    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        let mut keys: Vec<_> = self.counts.iter().collect();
        keys.sort();
        for (key, count) in keys {
            writeln!(out, "{key}\t{count}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(level: Level, path: &Path) -> Result<Self> {
        let reader = BufReader::new(fs::File::open(path)?);
        let mut table = CountTable::new(level);
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg,
            };
            let (key, count) = line
                .rsplit_once('\t')
                .ok_or_else(|| parse_err("expected key<TAB>count".into()))?;
            let count: u64 = count
                .parse()
                .map_err(|e| parse_err(format!("bad count `{count}`: {e}")))?;
            if table.counts.contains_key(key) {
                return Err(parse_err(format!("duplicate key `{key}`")));
            }
            table
                .insert(key.to_owned(), count)
                .map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(table)
    }
}

fn split_last(key: &str) -> Option<(&str, SymbolId)> {
    let last = key.chars().last()?;
    let sym = SymbolId::from_char(last)?;
    Some((&key[..key.len() - 1], sym))
}
