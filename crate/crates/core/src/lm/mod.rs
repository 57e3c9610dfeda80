//! Layered character language models with Kneser-Ney style back-off.
//!
//! Five count tables are built from a corpus: unigram, bigram and trigram
//! character n-grams over the running text, a word model holding every
//! within-word prefix, and a biword model holding `previous-word prefix`
//! strings. A next-character probability starts at the biword level and
//! backs off through word, trigram and bigram to the unigram relative
//! frequency. Each level contributes
//!
//! ```text
//! max(count(ctx + c) - d, 0) / count(ctx) + d * L * p_lower(c)
//! ```
//!
//! where `L` is the number of distinct continuations of `ctx` divided by
//! `count(ctx)`, or 1 with a zero discounted term when the context was
//! never seen.

mod table;
pub mod text;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use table::{Continuations, CountTable, Level};
pub use text::{normalize, Contexts};

use crate::error::{Error, Result};
use crate::symbol::{CharVector, SymbolId, NUM_CHARS};

/// Absolute discounts of the biword, word, trigram and bigram levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        SmoothingParams::uniform(0.5)
    }
}

impl SmoothingParams {
    pub fn uniform(d: f64) -> Self {
        SmoothingParams {
            d1: d,
            d2: d,
            d3: d,
            d4: d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, d) in [
            ("d1", self.d1),
            ("d2", self.d2),
            ("d3", self.d3),
            ("d4", self.d4),
        ] {
            if !(0.0..=1.0).contains(&d) {
                return Err(Error::InvalidArgument(format!("{name}={d} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// The five-level model hierarchy. Immutable once built.
#[derive(Clone, Debug)]
pub struct ModelStack {
    unigram: CountTable,
    bigram: CountTable,
    trigram: CountTable,
    word: CountTable,
    biword: CountTable,
    params: SmoothingParams,
}

/// Builds every level from raw corpus text.
pub fn build_models(corpus: &str, params: SmoothingParams) -> Result<ModelStack> {
    params.validate()?;
    let text = normalize(corpus);
    if text.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut unigram = CountTable::new(Level::Unigram);
    let mut bigram = CountTable::new(Level::Bigram);
    let mut trigram = CountTable::new(Level::Trigram);
    let mut word = CountTable::new(Level::Word);
    let mut biword = CountTable::new(Level::Biword);

    let bytes = text.as_bytes();
    for i in 0..bytes.len() {
        unigram.add(&text[i..i + 1]);
        if i + 2 <= bytes.len() {
            bigram.add(&text[i..i + 2]);
        }
        if i + 3 <= bytes.len() {
            trigram.add(&text[i..i + 3]);
        }
    }

    let mut prev: Option<&str> = None;
    let mut key = String::new();
    for w in text::words(&text) {
        for end in 1..=w.len() {
            word.add(&w[..end]);
        }
        key.clear();
        key.push_str(w);
        key.push(' ');
        word.add(&key);
        if let Some(p) = prev {
            key.clear();
            key.push_str(p);
            key.push(' ');
            let base = key.len();
            for end in 1..=w.len() {
                key.truncate(base);
                key.push_str(&w[..end]);
                biword.add(&key);
            }
            key.push(' ');
            biword.add(&key);
        }
        prev = Some(w);
    }

    Ok(ModelStack {
        unigram,
        bigram,
        trigram,
        word,
        biword,
        params,
    })
}

impl ModelStack {
    pub fn from_tables(tables: [CountTable; 5], params: SmoothingParams) -> Result<Self> {
        params.validate()?;
        let [unigram, bigram, trigram, word, biword] = tables;
        for (t, want) in [&unigram, &bigram, &trigram, &word, &biword]
            .into_iter()
            .zip(Level::ALL)
        {
            if t.level() != want {
                return Err(Error::InvalidArgument(format!(
                    "expected {want} table, got {}",
                    t.level()
                )));
            }
        }
        Ok(ModelStack {
            unigram,
            bigram,
            trigram,
            word,
            biword,
            params,
        })
    }

    pub fn params(&self) -> SmoothingParams {
        self.params
    }

    pub fn with_params(mut self, params: SmoothingParams) -> Result<Self> {
        params.validate()?;
        self.params = params;
        Ok(self)
    }

    pub fn table(&self, level: Level) -> &CountTable {
        match level {
            Level::Unigram => &self.unigram,
            Level::Bigram => &self.bigram,
            Level::Trigram => &self.trigram,
            Level::Word => &self.word,
            Level::Biword => &self.biword,
        }
    }

    pub(crate) fn table_mut(&mut self, level: Level) -> &mut CountTable {
        match level {
            Level::Unigram => &mut self.unigram,
            Level::Bigram => &mut self.bigram,
            Level::Trigram => &mut self.trigram,
            Level::Word => &mut self.word,
            Level::Biword => &mut self.biword,
        }
    }

    /// Replaces one level with an empty table.
    pub fn without_level(mut self, level: Level) -> Self {
        *self.table_mut(level) = CountTable::new(level);
        self
    }

    /// Writes `<level>.counts` for every level into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for level in Level::ALL {
            self.table(level)
                .save(&dir.join(format!("{}.counts", level.name())))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, params: SmoothingParams) -> Result<Self> {
        let load =
            |level: Level| CountTable::load(level, &dir.join(format!("{}.counts", level.name())));
        ModelStack::from_tables(
            [
                load(Level::Unigram)?,
                load(Level::Bigram)?,
                load(Level::Trigram)?,
                load(Level::Word)?,
                load(Level::Biword)?,
            ],
            params,
        )
    }

    /// The unnormalized back-off chain for every letter and word space.
    pub fn raw_distribution(&self, history: &str) -> CharVector {
        let ctx = Contexts::of(history);
        let uni = self.unigram.continuations("");
        let mut p = [0.0; NUM_CHARS];
        if uni.total > 0 {
            for (pc, &n) in p.iter_mut().zip(&uni.counts) {
                *pc = f64::from(n) / uni.total as f64;
            }
        }
        let d = self.params;
        let p = back_off(&self.bigram, ctx.bigram, d.d4, &p);
        let p = back_off(&self.trigram, ctx.trigram, d.d3, &p);
        let p = back_off(&self.word, Some(ctx.word), d.d2, &p);
        back_off(&self.biword, ctx.biword.as_deref(), d.d1, &p)
    }
}

fn back_off(table: &CountTable, context: Option<&str>, d: f64, lower: &CharVector) -> CharVector {
    let cont = context.map(|c| table.continuations(c));
    let mut out = [0.0; NUM_CHARS];
    match cont {
        Some(cont) if cont.total > 0 => {
            let total = cont.total as f64;
            let norm = f64::from(cont.distinct) / total;
            for (i, o) in out.iter_mut().enumerate() {
                let discounted = (f64::from(cont.counts[i]) - d).max(0.0) / total;
                *o = discounted + d * norm * lower[i];
            }
        }
        _ => {
            for (o, l) in out.iter_mut().zip(lower) {
                *o = d * l;
            }
        }
    }
    out
}

/// Probability of `c` following `history` under the full back-off chain.
///
/// `history` is decoded text (uppercase letters and single spaces). Returns
/// 0 for symbols the language model does not predict.
pub fn smoothed_char_prob(stack: &ModelStack, history: &str, c: SymbolId) -> f64 {
    if !c.is_char() {
        return 0.0;
    }
    stack.raw_distribution(history)[c.index()]
}

/// Back-off chain renormalized over letters and word space.
pub fn char_prior(stack: &ModelStack, history: &str) -> CharVector {
    let raw = stack.raw_distribution(history);
    let sum: f64 = raw.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        raw.map(|p| p / sum)
    } else {
        [1.0 / NUM_CHARS as f64; NUM_CHARS]
    }
}

/// Builds a stack directly from per-level key counts (for fixtures).
pub fn stack_from_counts(
    counts: [HashMap<String, u64>; 5],
    params: SmoothingParams,
) -> Result<ModelStack> {
    let [u, b, t, w, bw] = counts;
    ModelStack::from_tables(
        [
            CountTable::from_counts(Level::Unigram, u)?,
            CountTable::from_counts(Level::Bigram, b)?,
            CountTable::from_counts(Level::Trigram, t)?,
            CountTable::from_counts(Level::Word, w)?,
            CountTable::from_counts(Level::Biword, bw)?,
        ],
        params,
    )
}
