//! Bayesian selection over board items with dynamic stopping.
//!
//! Each flash score `y` is scored under the attended and non-attended
//! Gaussians; items inside the flashed group take the attended density,
//! the rest the non-attended one. The posterior is renormalized after every
//! flash and a selection is made as soon as its maximum reaches the
//! threshold or the flash budget runs out.

use serde::{Deserialize, Serialize};

use crate::eegsim::GaussianParams;
use crate::error::{Error, Result};
use crate::symbol::{SymbolId, SymbolSet, NUM_SYMBOLS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub p_thresh: f64,
    /// Flash sequences before a forced decision.
    pub max_sequences: usize,
    /// Board scans spent on one item before it is abandoned.
    pub abandon_scans: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            p_thresh: 0.95,
            max_sequences: 10,
            abandon_scans: 75,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_thresh > 0.5 && self.p_thresh <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "p_thresh={} outside (0.5, 1]",
                self.p_thresh
            )));
        }
        if self.max_sequences == 0 || self.abandon_scans < self.max_sequences {
            return Err(Error::InvalidArgument(
                "need max_sequences >= 1 and abandon_scans >= max_sequences".into(),
            ));
        }
        Ok(())
    }
}

fn log_density(y: f64, mu: f64, sigma: f64) -> f64 {
    let z = (y - mu) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Gaussian density of `y` under the attended (`in_group`) or non-attended model.
pub fn flash_likelihood(y: f64, in_group: bool, model: &GaussianParams) -> f64 {
    log_flash_likelihood(y, in_group, model).exp()
}

pub fn log_flash_likelihood(y: f64, in_group: bool, model: &GaussianParams) -> f64 {
    if in_group {
        log_density(y, model.mu_a, model.sigma_a)
    } else {
        log_density(y, model.mu_n, model.sigma_n)
    }
}

/// Posterior over board items for one selection.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderState {
    posterior: Vec<f64>,
    flashes_seen: usize,
}

impl DecoderState {
    pub fn new(prior: &[f64]) -> Result<Self> {
        if prior.is_empty() || prior.len() > NUM_SYMBOLS {
            return Err(Error::InvalidArgument(format!(
                "prior must have 1..={NUM_SYMBOLS} entries"
            )));
        }
        if prior.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument(
                "prior entries must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = prior.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Degenerate("prior has no mass".into()));
        }
        Ok(DecoderState {
            posterior: prior.iter().map(|p| p / sum).collect(),
            flashes_seen: 0,
        })
    }

    pub fn posterior(&self) -> &[f64] {
        &self.posterior
    }

    pub fn flashes_seen(&self) -> usize {
        self.flashes_seen
    }

    /// Most probable item; ties go to the lowest index.
    pub fn argmax(&self) -> (usize, f64) {
        self.posterior
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| {
                if p > best.1 {
                    (i, p)
                } else {
                    best
                }
            })
    }

    /// Bayes update for one flash of `group` that produced score `y`.
    pub fn update(&mut self, group: SymbolSet, y: f64, model: &GaussianParams) {
        let l_in = log_flash_likelihood(y, true, model);
        let l_out = log_flash_likelihood(y, false, model);
        let top = l_in.max(l_out);
        let (w_in, w_out) = ((l_in - top).exp(), (l_out - top).exp());
        let weight = |i: usize| {
            if SymbolId::new(i).is_some_and(|s| group.contains(s)) {
                w_in
            } else {
                w_out
            }
        };
        let total: f64 = self
            .posterior
            .iter()
            .enumerate()
            .map(|(i, p)| p * weight(i))
            .sum();
        // A zero total means all mass sits on the side whose weight underflowed;
        // proportions within that side are unchanged, so the posterior is too.
        if total > 0.0 && total.is_finite() {
            for (i, p) in self.posterior.iter_mut().enumerate() {
                *p = *p * weight(i) / total;
            }
        }
        self.flashes_seen += 1;
    }
}

/// Pure form of [`DecoderState::update`].
pub fn posterior_update(
    state: &DecoderState,
    group: SymbolSet,
    y: f64,
    model: &GaussianParams,
) -> DecoderState {
    let mut next = state.clone();
    next.update(group, y, model);
    next
}

/// The selected item once the threshold is reached or `budget` flashes are
/// spent; `None` while flashing should continue.
pub fn maybe_select(state: &DecoderState, p_thresh: f64, budget: usize) -> Option<usize> {
    let (i, p) = state.argmax();
    (p >= p_thresh || state.flashes_seen >= budget).then_some(i)
}

/// One flash in the optional JSON-lines trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub char_index: usize,
    pub flash_index: usize,
    pub group: Vec<String>,
    pub y: f64,
    pub posterior_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MODEL: GaussianParams = GaussianParams {
        mu_a: 1.0,
        sigma_a: 1.0,
        mu_n: 0.0,
        sigma_n: 1.0,
    };

    fn set(ids: &[usize]) -> SymbolSet {
        ids.iter().map(|&i| SymbolId::new(i).unwrap()).collect()
    }

    #[test]
    fn density_peak_and_symmetry() {
        let g = GaussianParams {
            mu_a: 2.0,
            sigma_a: 0.5,
            mu_n: 0.0,
            sigma_n: 1.0,
        };
        let peak = 1.0 / (2.0 * std::f64::consts::PI * 0.25).sqrt();
        assert!((flash_likelihood(2.0, true, &g) - peak).abs() < 1e-15);
        let flat = GaussianParams {
            mu_a: 0.3,
            sigma_a: 1.2,
            mu_n: 0.3,
            sigma_n: 1.2,
        };
        assert_eq!(
            flash_likelihood(1.7, true, &flat),
            flash_likelihood(1.7, false, &flat)
        );
    }

    #[test]
    fn density_matches_statrs() {
        use statrs::distribution::{Continuous, Normal};
        let g = GaussianParams {
            mu_a: 1.3,
            sigma_a: 0.7,
            mu_n: -0.2,
            sigma_n: 1.9,
        };
        for y in [-3.0, -0.5, 0.0, 0.9, 4.2] {
            let a = Normal::new(1.3, 0.7).unwrap().pdf(y);
            let n = Normal::new(-0.2, 1.9).unwrap().pdf(y);
            assert!((flash_likelihood(y, true, &g) - a).abs() <= 1e-14 * a.max(1e-300));
            assert!((flash_likelihood(y, false, &g) - n).abs() <= 1e-14 * n.max(1e-300));
        }
    }

    #[test]
    fn two_symbol_bayes_by_hand() {
        // prior (0.5, 0.5), symbol 0 flashed, y = 3 under N(1,1) vs N(0,1):
        // ratio exp(-(2^2)/2) / exp(-(3^2)/2) = exp(2.5)
        let mut s = DecoderState::new(&[0.5, 0.5]).unwrap();
        s.update(set(&[0]), 3.0, &MODEL);
        let r = 2.5f64.exp();
        assert!((s.posterior()[0] - r / (1.0 + r)).abs() < 1e-15);
        assert_eq!(s.flashes_seen(), 1);
    }

    #[test]
    fn uninformative_model_leaves_posterior_unchanged() {
        let flat = GaussianParams {
            mu_a: 0.0,
            sigma_a: 1.0,
            mu_n: 0.0,
            sigma_n: 1.0,
        };
        let prior = [0.1, 0.2, 0.3, 0.4];
        let mut s = DecoderState::new(&prior).unwrap();
        s.update(set(&[1, 2]), 0.7, &flat);
        for (a, b) in s.posterior().iter().zip(prior) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn extreme_scores_never_produce_nan() {
        let sharp = GaussianParams {
            mu_a: 1.0,
            sigma_a: 1e-3,
            mu_n: 0.0,
            sigma_n: 1e-3,
        };
        let mut s = DecoderState::new(&[1.0, 0.0, 0.0]).unwrap();
        s.update(set(&[1]), 1.0, &sharp);
        assert_eq!(s.posterior(), &[1.0, 0.0, 0.0]);
        let mut s = DecoderState::new(&[0.5, 0.5, 0.0]).unwrap();
        for _ in 0..1000 {
            s.update(set(&[0]), 50.0, &sharp);
        }
        assert!(s.posterior().iter().all(|p| p.is_finite()));
        assert_eq!(s.argmax().0, 0);
    }

    #[test]
    fn selection_rules() {
        let s = DecoderState::new(&[0.96, 0.04]).unwrap();
        assert_eq!(maybe_select(&s, 0.95, 120), Some(0));
        let s = DecoderState::new(&[0.94, 0.06]).unwrap();
        assert_eq!(maybe_select(&s, 0.95, 120), None);
        let mut s = DecoderState::new(&[0.25; 4]).unwrap();
        let flat = GaussianParams {
            mu_a: 0.0,
            sigma_a: 1.0,
            mu_n: 0.0,
            sigma_n: 1.0,
        };
        for _ in 0..12 {
            s.update(set(&[3]), 0.0, &flat);
        }
        assert_eq!(maybe_select(&s, 0.95, 12), Some(0));
    }

    #[test]
    fn lm_prior_wins_when_flashes_are_uninformative() {
        let flat = GaussianParams {
            mu_a: 0.5,
            sigma_a: 1.0,
            mu_n: 0.5,
            sigma_n: 1.0,
        };
        let prior = [0.05, 0.1, 0.6, 0.25];
        let mut s = DecoderState::new(&prior).unwrap();
        for k in 0..24 {
            s.update(set(&[k % 4]), 1.3, &flat);
        }
        assert_eq!(maybe_select(&s, 0.95, 24), Some(2));
    }

    #[test]
    fn config_validation() {
        assert!(DecoderConfig::default().validate().is_ok());
        assert!(DecoderConfig {
            p_thresh: 0.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(DecoderConfig {
            abandon_scans: 5,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    proptest! {
        #[test]
        fn posterior_stays_normalized(
            prior in prop::collection::vec(0.0f64..1.0, 2..36),
            flashes in prop::collection::vec((0u64..u64::MAX, -6.0f64..6.0), 1..200),
        ) {
            prop_assume!(prior.iter().sum::<f64>() > 0.0);
            let mut s = DecoderState::new(&prior).unwrap();
            let n = prior.len();
            for (mask, y) in flashes {
                let group = set(&(0..n).filter(|i| mask >> i & 1 == 1).collect::<Vec<_>>());
                s.update(group, y, &MODEL);
                let sum: f64 = s.posterior().iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
                prop_assert!(s.posterior().iter().all(|p| *p >= 0.0));
            }
        }

        #[test]
        fn consistent_item_gains_under_repeated_flashes(
            prior in prop::collection::vec(0.01f64..1.0, 2..12),
            y in 0.6f64..5.0,
        ) {
            // y above the midpoint favors the flashed item.
            let mut s = DecoderState::new(&prior).unwrap();
            let mut last = s.posterior()[0];
            for _ in 0..20 {
                s.update(set(&[0]), y, &MODEL);
                prop_assert!(s.posterior()[0] >= last);
                last = s.posterior()[0];
            }
        }
    }
}
