//! Offline P300 speller simulation and probabilistic decoding.
//!
//! The crate covers the whole offline pipeline: layered character language
//! models ([`lm`]), virtual flashboards and Huffman scanning
//! ([`flashboard`]), word completion ([`predictor`]), stepwise LDA
//! classifier training ([`swlda`]), classifier-score sampling
//! ([`eegsim`]), Bayesian dynamic-stopping decoding ([`decoder`]), typing
//! simulations with ITR accounting ([`harness`]) and the nonparametric
//! tests used to compare schemes ([`stats`]).

pub mod decoder;
pub mod eegsim;
pub mod error;
pub mod flashboard;
pub mod harness;
pub mod lm;
pub mod predictor;
pub mod seed;
pub mod stats;
pub mod swlda;
pub mod symbol;

pub use error::{Error, Result};
pub use symbol::{BoardVector, CharVector, SymbolId, SymbolSet};
