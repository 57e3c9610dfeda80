//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use speller_core::lm::{char_prior, Level, ModelStack, SmoothingParams};
use speller_core::predictor::TrellisConfig;
use speller_core::symbol::NUM_CHARS;

pub const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

/// Every corpus file in name order, one per line.
pub fn corpus_text() -> String {
    let mut names: Vec<_> = std::fs::read_dir(format!("{DATA}/corpus"))
        .expect("corpus dir")
        .map(|e| e.expect("dir entry").path())
        .collect();
    names.sort();
    names
        .iter()
        .map(|p| std::fs::read_to_string(p).expect("corpus file"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn doi_text() -> String {
    std::fs::read_to_string(format!("{DATA}/doi.txt")).expect("doi text")
}

/// The DOI body from its first sentence, as typed by simulated users.
pub fn doi_body() -> String {
    let doi = doi_text();
    doi[doi.find("When in").expect("DOI body")..].to_owned()
}

/// Random words over the first `letters` letters of the alphabet.
pub fn random_corpus(
    rng: &mut ChaCha8Rng,
    letters: usize,
    words: usize,
    max_word: usize,
) -> String {
    let alphabet: Vec<char> = (b'A'..b'A' + letters as u8).map(char::from).collect();
    // A small vocabulary so that words and word pairs repeat.
    let vocab: Vec<String> = (0..rng.gen_range(3..12))
        .map(|_| {
            let len = rng.gen_range(1..=max_word);
            (0..len)
                .map(|_| *alphabet.choose(rng).expect("letters"))
                .collect()
        })
        .collect();
    (0..words)
        .map(|_| vocab.choose(rng).expect("vocab").as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

fn counts(stack: &ModelStack, level: Level) -> HashMap<String, u64> {
    stack
        .table(level)
        .entries()
        .map(|(k, v)| (k.to_owned(), v))
        .collect()
}

/// Count of a context: the stored keys extending it by one character.
fn context_count(model: &HashMap<String, u64>, ctx: &str) -> (u64, usize) {
    let mut total = 0;
    let mut distinct = 0;
    for (key, n) in model {
        if key.len() == ctx.len() + 1 && key.starts_with(ctx) && *n > 0 {
            total += n;
            distinct += 1;
        }
    }
    (total, distinct)
}

/// One smoothing level written out term by term.
fn kn_level(model: &HashMap<String, u64>, ctx: Option<&str>, c: char, d: f64, lower: f64) -> f64 {
    let Some(ctx) = ctx else { return d * lower };
    let (denom, distinct) = context_count(model, ctx);
    if denom == 0 {
        return d * 1.0 * lower;
    }
    let seen = model.get(&format!("{ctx}{c}")).copied().unwrap_or(0) as f64;
    let l = distinct as f64 / denom as f64;
    (seen - d).max(0.0) / denom as f64 + d * l * lower
}

/// Literal biword → word → trigram → bigram → unigram chain.
pub struct LiteralLm {
    uni: HashMap<String, u64>,
    bi: HashMap<String, u64>,
    tri: HashMap<String, u64>,
    word: HashMap<String, u64>,
    biword: HashMap<String, u64>,
}

impl LiteralLm {
    pub fn from_stack(stack: &ModelStack) -> Self {
        LiteralLm {
            uni: counts(stack, Level::Unigram),
            bi: counts(stack, Level::Bigram),
            tri: counts(stack, Level::Trigram),
            word: counts(stack, Level::Word),
            biword: counts(stack, Level::Biword),
        }
    }

    pub fn prob(&self, history: &str, c: char, d: SmoothingParams) -> f64 {
        let total: u64 = self.uni.values().sum();
        let p_uni = if total == 0 {
            0.0
        } else {
            self.uni.get(&c.to_string()).copied().unwrap_or(0) as f64 / total as f64
        };
        let chars: Vec<char> = history.chars().collect();
        let n = chars.len();
        let last1: Option<String> = (n >= 1).then(|| chars[n - 1..].iter().collect());
        let last2: Option<String> = (n >= 2).then(|| chars[n - 2..].iter().collect());
        let pieces: Vec<&str> = history.split(' ').collect();
        let partial = *pieces.last().expect("split yields one piece");
        let previous = pieces[..pieces.len() - 1]
            .iter()
            .rev()
            .find(|w| !w.is_empty());
        let biword_ctx = previous.map(|p| format!("{p} {partial}"));

        let p_bi = kn_level(&self.bi, last1.as_deref(), c, d.d4, p_uni);
        let p_tri = kn_level(&self.tri, last2.as_deref(), c, d.d3, p_bi);
        let p_word = kn_level(&self.word, Some(partial), c, d.d2, p_tri);
        kn_level(&self.biword, biword_ctx.as_deref(), c, d.d1, p_word)
    }
}

/// Histories drawn from the corpus itself, truncated mid-word or at a
/// space, plus a share of arbitrary strings over the alphabet.
pub fn random_history(rng: &mut ChaCha8Rng, corpus: &str, letters: usize) -> String {
    if rng.gen_bool(0.2) {
        let len = rng.gen_range(0..8);
        return (0..len)
            .map(|_| {
                if rng.gen_bool(0.2) {
                    ' '
                } else {
                    char::from(b'A' + rng.gen_range(0..letters as u8 + 1))
                }
            })
            .collect::<String>()
            .trim_start()
            .replace("  ", " ");
    }
    let end = rng.gen_range(0..=corpus.len());
    let start = end.saturating_sub(rng.gen_range(0..20));
    corpus[start..end].trim_start().to_owned()
}

pub fn char_of(index: usize) -> char {
    if index < 26 {
        char::from(b'A' + index as u8)
    } else {
        ' '
    }
}

/// Every completion scored by enumerating all paths up to `max_len`,
/// top `n` by score then alphabetically.
pub fn trellis_exhaustive(
    stack: &ModelStack,
    context: &str,
    prefix: &str,
    cfg: &TrellisConfig,
    n: usize,
) -> Vec<(String, f64)> {
    let ctx = context.trim_end();
    let base = if ctx.is_empty() {
        String::new()
    } else {
        format!("{ctx} ")
    };
    let mut found = Vec::new();
    let mut stack_nodes = vec![(prefix.to_owned(), 1.0f64)];
    while let Some((word, score)) = stack_nodes.pop() {
        let dist = char_prior(stack, &format!("{base}{word}"));
        let space = dist[NUM_CHARS - 1];
        let best_letter = dist[..26].iter().copied().fold(0.0, f64::max);
        let emits = space > 0.0 && (space >= cfg.space_floor || space >= best_letter);
        if word.len() > prefix.len() && emits {
            found.push((word.clone(), score * space));
        }
        if word.len() < cfg.max_len {
            for (i, &p) in dist[..26].iter().enumerate() {
                if p > 0.0 {
                    stack_nodes.push((format!("{word}{}", char_of(i)), score * p));
                }
            }
        }
    }
    found.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    found.truncate(n);
    found
}

/// Smallest expected length over all code-length vectors obeying Kraft's
/// inequality; any such vector is realized by some prefix code.
pub fn brute_force_optimal_length(p: &[f64]) -> f64 {
    let n = p.len();
    if n == 1 {
        return 0.0;
    }
    let total: f64 = p.iter().sum();
    let mut lengths = vec![1usize; n];
    let mut best = f64::INFINITY;
    loop {
        let kraft: f64 = lengths.iter().map(|&l| 0.5f64.powi(l as i32)).sum();
        if kraft <= 1.0 + 1e-12 {
            let e: f64 = p
                .iter()
                .zip(&lengths)
                .map(|(pi, &l)| pi / total * l as f64)
                .sum();
            best = best.min(e);
        }
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            lengths[i] += 1;
            if lengths[i] < n {
                break;
            }
            lengths[i] = 1;
            i += 1;
        }
    }
}

/// Average ranks of `x`, 1-based.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&u| u < v).count() as f64;
            let equal = x.iter().filter(|&&u| u == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Two-sided exact signed-rank p by listing all 2^n sign patterns.
pub fn wilcoxon_enumerated_p(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|v| *v != 0.0)
        .collect();
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = average_ranks(&abs);
    let observed: f64 = ranks
        .iter()
        .zip(&d)
        .filter(|(_, v)| **v > 0.0)
        .map(|(r, _)| r)
        .sum();
    let n = d.len();
    let (mut lower, mut upper) = (0u64, 0u64);
    for mask in 0u64..1 << n {
        let w: f64 = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        if w <= observed + 1e-9 {
            lower += 1;
        }
        if w >= observed - 1e-9 {
            upper += 1;
        }
    }
    let total = (1u64 << n) as f64;
    (2.0 * lower.min(upper) as f64 / total).min(1.0)
}

/// Tie-corrected H statistic.
pub fn kruskal_h(groups: &[Vec<f64>]) -> f64 {
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    let ranks = average_ranks(&pooled);
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let h = 12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0);
    let mut ties = 0.0;
    let mut seen: Vec<f64> = Vec::new();
    for &v in &pooled {
        if !seen.contains(&v) {
            seen.push(v);
            let t = pooled.iter().filter(|&&u| u == v).count() as f64;
            ties += t * t * t - t;
        }
    }
    h / (1.0 - ties / (n * n * n - n))
}

/// Permutation p of H: the share of all orderings of the pooled data,
/// cut into the observed group sizes, whose H reaches the observed one.
pub fn kruskal_permutation_p(groups: &[Vec<f64>]) -> (f64, f64) {
    let observed = kruskal_h(groups);
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    let (mut hits, mut total) = (0u64, 0u64);
    permute(&mut idx, 0, &mut |order| {
        let mut offset = 0;
        let regrouped: Vec<Vec<f64>> = sizes
            .iter()
            .map(|&s| {
                let g = order[offset..offset + s]
                    .iter()
                    .map(|&i| pooled[i])
                    .collect();
                offset += s;
                g
            })
            .collect();
        total += 1;
        if kruskal_h(&regrouped) >= observed - 1e-9 {
            hits += 1;
        }
    });
    (observed, hits as f64 / total as f64)
}

fn permute(v: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == v.len() {
        visit(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, visit);
        v.swap(k, i);
    }
}
