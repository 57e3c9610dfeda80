//! Corpus normalization shared by model building and simulation targets.

/// Uppercase-folds, strips everything that is not an ASCII letter or
/// whitespace, and collapses whitespace runs into single spaces.
pub fn normalize(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for ch in raw.chars() {
        if ch.is_whitespace() {
            pending_space = !out.is_empty();
        } else if ch.is_ascii_alphabetic() {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(ch.to_ascii_uppercase());
        }
    }
    out
}

/// Splits normalized text into words.
pub fn words(normalized: &str) -> impl Iterator<Item = &str> {
    normalized.split(' ').filter(|w| !w.is_empty())
}

/// Language-model contexts implied by a decoded history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contexts<'a> {
    /// Previous word, space, current word prefix; `None` without a previous word.
    pub biword: Option<String>,
    /// Current (partial) word, empty at a word boundary.
    pub word: &'a str,
    pub trigram: Option<&'a str>,
    pub bigram: Option<&'a str>,
}

impl<'a> Contexts<'a> {
    pub fn of(history: &'a str) -> Self {
        let (before, word) = match history.rfind(' ') {
            Some(i) => (&history[..i], &history[i + 1..]),
            None => ("", history),
        };
        let biword = before
            .trim_end()
            .rsplit(' ')
            .next()
            .filter(|w| !w.is_empty())
            .map(|prev| format!("{prev} {word}"));
        let n = history.len();
        Contexts {
            biword,
            word,
            trigram: (n >= 2).then(|| &history[n - 2..]),
            bigram: (n >= 1).then(|| &history[n - 1..]),
        }
    }
}
