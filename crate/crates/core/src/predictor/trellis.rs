//! Word completion by max-product search over the character models.
//!
//! Every candidate completion is one path through the prefix tree; its
//! probability is the product of the character probabilities along the path
//! times the probability of the closing word space. Because every factor is
//! at most one, a path can only lose probability as it grows, so expanding
//! nodes best-first yields completed words in exact descending order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{Source, Suggestion};
use crate::error::{Error, Result};
use crate::lm::{char_prior, ModelStack};
use crate::symbol::{SymbolId, NUM_LETTERS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrellisConfig {
    /// Longest word (prefix included) the search may produce.
    pub max_len: usize,
    /// A path also completes when word space has at least this probability.
    pub space_floor: f64,
    /// Node expansions before the search gives up with what it has.
    pub max_expansions: usize,
}

impl Default for TrellisConfig {
    fn default() -> Self {
        TrellisConfig {
            max_len: 16,
            space_floor: 0.1,
            max_expansions: 4000,
        }
    }
}

#[derive(Debug, PartialEq)]
struct Entry {
    score: f64,
    terminal: bool,
    word: String,
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Max-heap order: higher score, then open nodes before finished words
    // (their descendants may tie), then the alphabetically smaller word.
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then(other.terminal.cmp(&self.terminal))
            .then(other.word.cmp(&self.word))
    }
}

/// Decoded history for the language model: committed text, one space, prefix.
pub(crate) fn history(context: &str, prefix: &str) -> String {
    let ctx = context.trim_end();
    if ctx.is_empty() {
        prefix.to_owned()
    } else {
        format!("{ctx} {prefix}")
    }
}

pub(crate) fn check_prefix(prefix: &str) -> Result<()> {
    if prefix.bytes().all(|b| b.is_ascii_uppercase()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "prefix `{prefix}` must be uppercase letters"
        )))
    }
}

/// Whether a path ending here emits a completed word.
fn completes(dist: &[f64], floor: f64) -> bool {
    let space = dist[SymbolId::SPACE.index()];
    let best_letter = dist[..NUM_LETTERS].iter().copied().fold(0.0, f64::max);
    space > 0.0 && (space >= floor || space >= best_letter)
}

/// Top `n` completions of `prefix` after the committed `context`.
///
/// A completion adds at least one letter. Scores are path probabilities;
/// ties are broken alphabetically. Fewer than `n` words are returned when
/// the search space or the expansion budget runs out.
pub fn trellis_complete(
    stack: &ModelStack,
    context: &str,
    prefix: &str,
    cfg: &TrellisConfig,
    n: usize,
) -> Result<Vec<Suggestion>> {
    check_prefix(prefix)?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if cfg.max_len < prefix.len() {
        return Err(Error::InvalidArgument(format!(
            "max_len {} shorter than prefix `{prefix}`",
            cfg.max_len
        )));
    }
    let base = history(context, "");
    let mut heap = BinaryHeap::new();
    heap.push(Entry {
        score: 1.0,
        terminal: false,
        word: prefix.to_owned(),
    });
    let mut out = Vec::with_capacity(n);
    let mut expansions = 0;
    while let Some(Entry {
        score,
        terminal,
        word,
    }) = heap.pop()
    {
        if terminal {
            out.push(Suggestion {
                word,
                score,
                source: Source::Trellis,
                prob: score,
            });
            if out.len() == n {
                break;
            }
            continue;
        }
        if expansions == cfg.max_expansions {
            log::debug!("trellis budget exhausted for prefix `{prefix}`");
            break;
        }
        expansions += 1;
        let dist = char_prior(stack, &format!("{base}{word}"));
        if word.len() > prefix.len() && completes(&dist, cfg.space_floor) {
            heap.push(Entry {
                score: score * dist[SymbolId::SPACE.index()],
                terminal: true,
                word: word.clone(),
            });
        }
        if word.len() < cfg.max_len {
            for (i, &p) in dist[..NUM_LETTERS].iter().enumerate() {
                if p > 0.0 {
                    let mut next = word.clone();
                    next.push(char::from(b'A' + i as u8));
                    heap.push(Entry {
                        score: score * p,
                        terminal: false,
                        word: next,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Best path ending in each letter after one more stage.
#[derive(Clone, Debug, PartialEq)]
pub struct TrellisStage {
    pub best: Vec<Option<(String, f64)>>,
}

/// Classic per-stage max retention: of all paths entering a letter at a
/// stage only the most probable survives. Diagnostic view of the search.
pub fn viterbi_stages(
    stack: &ModelStack,
    context: &str,
    prefix: &str,
    stages: usize,
) -> Result<Vec<TrellisStage>> {
    check_prefix(prefix)?;
    let base = history(context, "");
    let mut frontier: Vec<(String, f64)> = vec![(prefix.to_owned(), 1.0)];
    let mut out = Vec::with_capacity(stages);
    for _ in 0..stages {
        let mut best: Vec<Option<(String, f64)>> = vec![None; NUM_LETTERS];
        for (path, p) in &frontier {
            let dist = char_prior(stack, &format!("{base}{path}"));
            for (i, slot) in best.iter_mut().enumerate() {
                let q = p * dist[i];
                if q > 0.0 && slot.as_ref().is_none_or(|(_, b)| q > *b) {
                    let mut next = path.clone();
                    next.push(char::from(b'A' + i as u8));
                    *slot = Some((next, q));
                }
            }
        }
        frontier = best.iter().flatten().cloned().collect();
        out.push(TrellisStage { best });
        if frontier.is_empty() {
            break;
        }
    }
    Ok(out)
}
