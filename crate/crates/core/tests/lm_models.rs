//! Character models built from the bundled corpus.

mod common;

use std::sync::OnceLock;

use proptest::prelude::*;
use speller_core::lm::{
    build_models, char_prior, normalize, smoothed_char_prob, ModelStack, SmoothingParams,
};
use speller_core::symbol::{SymbolId, NUM_CHARS};

use common::{char_of, corpus_text, doi_body, LiteralLm};

fn stack() -> &'static ModelStack {
    static STACK: OnceLock<ModelStack> = OnceLock::new();
    STACK.get_or_init(|| build_models(&corpus_text(), SmoothingParams::default()).expect("models"))
}

#[test]
fn matches_literal_chain_on_unseen_text() {
    let stack = stack();
    let oracle = LiteralLm::from_stack(stack);
    let body = normalize(&doi_body());
    let mut worst = 0.0f64;
    for end in (0..400).step_by(7) {
        let history = &body[..end];
        for i in 0..NUM_CHARS {
            let got = smoothed_char_prob(stack, history, SymbolId::new(i).expect("char"));
            worst = worst.max((got - oracle.prob(history, char_of(i), stack.params())).abs());
        }
    }
    assert!(worst <= 1e-12, "max |diff| {worst}");
}

#[test]
fn saved_models_reload_identically() {
    let dir = tempfile::tempdir().expect("tempdir");
    stack().save(dir.path()).expect("save");
    let loaded = ModelStack::load(dir.path(), SmoothingParams::default()).expect("load");
    for history in ["", "WE HOLD ", "THE SOFTW", "QQQ ZX"] {
        assert_eq!(char_prior(stack(), history), char_prior(&loaded, history));
    }
}

#[test]
fn missing_model_dir_is_an_error() {
    let dir = tempfile::tempdir().expect("tempdir");
    assert!(ModelStack::load(&dir.path().join("absent"), SmoothingParams::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn prior_is_a_distribution(history in "[A-Z ]{0,30}") {
        let dist = char_prior(stack(), &history);
        prop_assert_eq!(dist.len(), NUM_CHARS);
        prop_assert!(dist.iter().all(|p| p.is_finite() && *p > 0.0));
        prop_assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn prior_depends_only_on_recent_text(history in "[A-Z ]{0,30}", pad in "[A-Z]{1,10}") {
        // Text before the previous word cannot reach any model level.
        prop_assume!(history.matches(' ').count() >= 2);
        let cut = history.find(' ').expect("space") + 1;
        let tail = &history[cut..];
        prop_assume!(tail.trim_start().split(' ').count() >= 2 && !tail.starts_with(' '));
        let padded = format!("{pad} {tail}");
        prop_assert_eq!(char_prior(stack(), tail), char_prior(stack(), &padded));
    }
}
