//! Word suggestions for the spare board cells.
//!
//! An external next-word service is consulted first; whatever it cannot
//! supply is filled from a search over the character models.

mod external;
mod trellis;

use serde::{Deserialize, Serialize};

pub use external::{
    context_tail, CompletionRequest, CompletionResponse, CorpusPredictor, HttpPredictor,
    MockPredictor, WordPredictor, WordScore,
};
pub use trellis::{trellis_complete, viterbi_stages, TrellisConfig, TrellisStage};

use crate::error::{Error, Result};
use crate::lm::ModelStack;
use crate::symbol::{BoardVector, CharVector, SymbolId, NUM_CHARS, NUM_SYMBOLS, SLOT_COUNT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    External,
    Trellis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub word: String,
    /// Rank weight; sums to one over a suggestion list.
    pub score: f64,
    pub source: Source,
    /// Probability of the word given context and prefix under its source
    /// model, before any normalization.
    #[serde(default)]
    pub prob: f64,
}

/// Characters of typed history sent to the external service.
pub const CONTEXT_WINDOW: usize = 512;

fn window(context: &str) -> &str {
    let start = context.len().saturating_sub(CONTEXT_WINDOW);
    let start = (start..=context.len())
        .find(|i| context.is_char_boundary(*i))
        .unwrap_or(0);
    &context[start..]
}

fn usable(word: &str, prefix: &str) -> Option<String> {
    let word = word.trim().to_ascii_uppercase();
    (word.bytes().all(|b| b.is_ascii_uppercase())
        && word.len() > prefix.len()
        && word.starts_with(prefix))
    .then_some(word)
}

/// Up to `n` suggestions: the external service's usable words first, then
/// trellis completions, without duplicates.
///
/// Scores are normalized within each source and then weighted by that
/// source's share of the returned list, so they sum to one. Service
/// failures are logged and treated as an empty answer.
pub fn layered_predict(
    client: Option<&dyn WordPredictor>,
    stack: &ModelStack,
    context: &str,
    prefix: &str,
    n: usize,
    cfg: &TrellisConfig,
) -> Result<Vec<Suggestion>> {
    trellis::check_prefix(prefix)?;
    if !(1..=SLOT_COUNT).contains(&n) {
        return Err(Error::InvalidArgument(format!(
            "n={n} outside 1..={SLOT_COUNT}"
        )));
    }
    let mut external: Vec<(String, f64)> = Vec::new();
    if let Some(client) = client {
        let request = CompletionRequest {
            context: window(context).to_owned(),
            prefix: prefix.to_owned(),
            n,
        };
        match client.complete(&request) {
            Ok(resp) => {
                for s in resp.suggestions {
                    if external.len() == n {
                        break;
                    }
                    if let Some(w) = usable(&s.word, prefix) {
                        if s.logprob.is_finite() && !external.iter().any(|(e, _)| *e == w) {
                            external.push((w, s.logprob));
                        }
                    }
                }
            }
            Err(e) => log::warn!("word predictor unavailable, using trellis only: {e}"),
        }
    }

    let mut trellis = Vec::new();
    if external.len() < n {
        let want = n - external.len();
        for s in trellis_complete(stack, context, prefix, cfg, n)? {
            if trellis.len() == want {
                break;
            }
            if !external.iter().any(|(e, _)| *e == s.word) {
                trellis.push((s.word, s.score));
            }
        }
    }

    let total = (external.len() + trellis.len()) as f64;
    let mut out = Vec::with_capacity(n);
    let max_lp = external
        .iter()
        .map(|(_, lp)| *lp)
        .fold(f64::NEG_INFINITY, f64::max);
    let ext_weights: Vec<f64> = external.iter().map(|(_, lp)| (lp - max_lp).exp()).collect();
    let ext_probs: Vec<f64> = external.iter().map(|(_, lp)| lp.exp()).collect();
    push_normalized(
        &mut out,
        external,
        &ext_weights,
        &ext_probs,
        Source::External,
        total,
    );
    let tr_weights: Vec<f64> = trellis.iter().map(|(_, p)| *p).collect();
    push_normalized(
        &mut out,
        trellis,
        &tr_weights,
        &tr_weights,
        Source::Trellis,
        total,
    );
    Ok(out)
}

fn push_normalized(
    out: &mut Vec<Suggestion>,
    words: Vec<(String, f64)>,
    weights: &[f64],
    probs: &[f64],
    source: Source,
    total: f64,
) {
    let sum: f64 = weights.iter().sum();
    let share = words.len() as f64 / total;
    let k = words.len() as f64;
    for (((word, _), w), &prob) in words.into_iter().zip(weights).zip(probs) {
        let score = if sum > 0.0 {
            share * w / sum
        } else {
            share / k
        };
        out.push(Suggestion {
            word,
            score,
            source,
            prob,
        });
    }
}

/// Board prior with suggestion `i` in slot cell `i`.
///
/// Slots share `lambda` in proportion to suggestion scores, characters
/// share the rest in proportion to `chars`. Without usable suggestions the
/// whole mass goes to characters. Backspace gets nothing here.
pub fn attach_suggestions(
    chars: &CharVector,
    suggestions: &[Suggestion],
    lambda: f64,
) -> Result<BoardVector> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!(
            "lambda={lambda} outside [0, 1]"
        )));
    }
    if suggestions.len() > SLOT_COUNT {
        return Err(Error::InvalidArgument(format!(
            "{} suggestions for {SLOT_COUNT} slots",
            suggestions.len()
        )));
    }
    if suggestions
        .iter()
        .any(|s| !s.score.is_finite() || s.score < 0.0)
    {
        return Err(Error::InvalidArgument(
            "suggestion scores must be finite and nonnegative".into(),
        ));
    }
    let score_sum: f64 = suggestions.iter().map(|s| s.score).sum();
    let lambda = if score_sum > 0.0 { lambda } else { 0.0 };
    let char_sum: f64 = chars.iter().sum();
    let mut out = [0.0; NUM_SYMBOLS];
    for (o, c) in out[..NUM_CHARS].iter_mut().zip(chars) {
        *o = if char_sum > 0.0 {
            (1.0 - lambda) * c / char_sum
        } else {
            (1.0 - lambda) / NUM_CHARS as f64
        };
    }
    for (i, s) in suggestions.iter().enumerate() {
        let slot = SymbolId::slot(i).expect("count checked");
        out[slot.index()] = lambda * s.score / score_sum;
    }
    Ok(out)
}

/// Board prior where each slot carries its word's own probability.
///
/// A user who wants a shown word picks its slot instead of typing on, so
/// the word's probability is removed from the character that continues
/// `prefix` towards it (never below zero) and placed on the slot; the
/// result is renormalized. For suggestions drawn from the same model as
/// `chars` the total is already one and the split is exact.
pub fn attach_by_probability(
    chars: &CharVector,
    prefix: &str,
    suggestions: &[Suggestion],
) -> Result<BoardVector> {
    if suggestions.len() > SLOT_COUNT {
        return Err(Error::InvalidArgument(format!(
            "{} suggestions for {SLOT_COUNT} slots",
            suggestions.len()
        )));
    }
    if suggestions
        .iter()
        .any(|s| !s.prob.is_finite() || s.prob < 0.0)
    {
        return Err(Error::InvalidArgument(
            "suggestion probabilities must be finite and nonnegative".into(),
        ));
    }
    let char_sum: f64 = chars.iter().sum();
    let mut out = [0.0; NUM_SYMBOLS];
    for (o, c) in out[..NUM_CHARS].iter_mut().zip(chars) {
        *o = if char_sum > 0.0 {
            c / char_sum
        } else {
            1.0 / NUM_CHARS as f64
        };
    }
    for (i, s) in suggestions.iter().enumerate() {
        let next = s
            .word
            .get(prefix.len()..)
            .and_then(|rest| rest.chars().next())
            .and_then(SymbolId::from_char);
        if let Some(c) = next {
            out[c.index()] = (out[c.index()] - s.prob).max(0.0);
        }
        out[SymbolId::slot(i).expect("count checked").index()] = s.prob;
    }
    let total: f64 = out.iter().sum();
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{build_models, char_prior, SmoothingParams};
    use proptest::prelude::*;

    struct Fixed(Vec<&'static str>);

    impl WordPredictor for Fixed {
        fn complete(&self, _: &CompletionRequest) -> Result<CompletionResponse> {
            Ok(CompletionResponse {
                suggestions: self
                    .0
                    .iter()
                    .map(|w| WordScore {
                        word: w.to_string(),
                        logprob: -1.0,
                    })
                    .collect(),
            })
        }
    }

    struct Down;

    impl WordPredictor for Down {
        fn complete(&self, _: &CompletionRequest) -> Result<CompletionResponse> {
            Err(Error::Predictor("connection refused".into()))
        }
    }

    fn stack() -> ModelStack {
        build_models(
            include_str!("../../data/doi.txt"),
            SmoothingParams::default(),
        )
        .unwrap()
    }

    fn with_prob(word: &str, prob: f64) -> Suggestion {
        Suggestion {
            word: word.into(),
            score: 1.0,
            source: Source::External,
            prob,
        }
    }

    #[test]
    fn probability_slots_take_mass_from_the_continuing_char() {
        let t = SymbolId::from_char('T').unwrap().index();
        let a = SymbolId::from_char('A').unwrap().index();
        let mut chars = [0.0; NUM_CHARS];
        chars[t] = 0.5;
        chars[a] = 0.5;
        let slot0 = SymbolId::slot(0).unwrap().index();
        let out = attach_by_probability(&chars, "", &[with_prob("THE", 0.2)]).unwrap();
        assert!((out[t] - 0.3).abs() < 1e-12 && (out[slot0] - 0.2).abs() < 1e-12);
        assert!((out[a] - 0.5).abs() < 1e-12);

        // More mass than the character had: it bottoms out at zero.
        let out = attach_by_probability(&chars, "", &[with_prob("THE", 0.2), with_prob("TO", 0.7)])
            .unwrap();
        assert_eq!(out[t], 0.0);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((out[SymbolId::slot(1).unwrap().index()] - 0.5).abs() < 1e-12);
    }

    fn words(s: &[Suggestion]) -> Vec<&str> {
        s.iter().map(|s| s.word.as_str()).collect()
    }

    #[test]
    fn six_external_words_need_no_fallback() {
        let ext = Fixed(vec!["THE", "THEY", "THEIR", "THESE", "THEM", "THERE"]);
        let out =
            layered_predict(Some(&ext), &stack(), "", "TH", 6, &TrellisConfig::default()).unwrap();
        assert_eq!(
            words(&out),
            ["THE", "THEY", "THEIR", "THESE", "THEM", "THERE"]
        );
        assert!(out.iter().all(|s| s.source == Source::External));
    }

    #[test]
    fn empty_or_failing_service_equals_trellis() {
        let stack = stack();
        let cfg = TrellisConfig::default();
        let trellis = trellis_complete(&stack, "OF", "TH", &cfg, 6).unwrap();
        for client in [
            Some(&Fixed(vec![]) as &dyn WordPredictor),
            Some(&Down),
            None,
        ] {
            let out = layered_predict(client, &stack, "OF", "TH", 6, &cfg).unwrap();
            assert_eq!(words(&out), words(&trellis));
        }
    }

    #[test]
    fn partial_answer_is_topped_up_without_duplicates() {
        let stack = stack();
        let cfg = TrellisConfig::default();
        let trellis = trellis_complete(&stack, "OF", "TH", &cfg, 6).unwrap();
        // Merge oracle: external list, then trellis order minus those words.
        let ext = ["THEIR", trellis[0].word.as_str()];
        let mut expected: Vec<&str> = ext.to_vec();
        expected.extend(
            words(&trellis)
                .into_iter()
                .filter(|w| !ext.contains(w))
                .take(4),
        );
        let client = Fixed(vec![
            "THEIR",
            Box::leak(trellis[0].word.clone().into_boxed_str()),
        ]);
        let out = layered_predict(Some(&client), &stack, "OF", "TH", 6, &cfg).unwrap();
        assert_eq!(words(&out), expected);
        assert_eq!(
            out.iter().filter(|s| s.source == Source::External).count(),
            2
        );
        assert!((out.iter().map(|s| s.score).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unusable_external_words_are_dropped() {
        let client = Fixed(vec!["th", "THE", "the", "OTHER", "TH3M", "thy"]);
        let out = layered_predict(
            Some(&client),
            &stack(),
            "",
            "TH",
            2,
            &TrellisConfig::default(),
        )
        .unwrap();
        assert_eq!(words(&out), ["THE", "THY"]);
    }

    #[test]
    fn attach_identity_and_proportional_cases() {
        let chars = char_prior(&stack(), "WE H");
        let out = attach_suggestions(&chars, &[], 0.5).unwrap();
        for (o, c) in out.iter().zip(&chars) {
            assert!((o - c).abs() < 1e-15);
        }
        assert!(out[NUM_CHARS..].iter().all(|p| *p == 0.0));

        let s = |w: &str| Suggestion {
            word: w.into(),
            score: 0.3,
            source: Source::Trellis,
            prob: 0.3,
        };
        let out = attach_suggestions(&chars, &[s("HOLD"), s("HAVE")], 0.5).unwrap();
        assert_eq!(out[SymbolId::slot(0).unwrap().index()], 0.25);
        assert_eq!(out[SymbolId::slot(1).unwrap().index()], 0.25);
        assert_eq!(out[SymbolId::BACKSPACE.index()], 0.0);
        assert!(attach_suggestions(&chars, &[], 1.5).is_err());
    }

    proptest! {
        #[test]
        fn attach_sums_to_one_and_keeps_char_order(
            chars in prop::array::uniform27(0.0f64..1.0),
            scores in prop::collection::vec(0.0f64..5.0, 0..=SLOT_COUNT),
            lambda in 0.0f64..=1.0,
        ) {
            prop_assume!(chars.iter().sum::<f64>() > 0.0);
            let sugg: Vec<_> = scores.iter().map(|&score| Suggestion { word: "A".into(), score, source: Source::External, prob: score }).collect();
            let out = attach_suggestions(&chars, &sugg, lambda).unwrap();
            prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 0..NUM_CHARS {
                for j in 0..NUM_CHARS {
                    if chars[i] < chars[j] {
                        prop_assert!(out[i] <= out[j]);
                    }
                }
            }
        }
    }
}
