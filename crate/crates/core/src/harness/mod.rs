//! Full typing simulations of a target text.
//!
//! For every selection the board prior is the character model's prediction
//! for the committed text, optionally with word suggestions in the slot
//! cells and a fixed reserve on backspace. Flashes are scored by sampling a
//! subject's score model and fed to the Bayesian decoder until it commits.
//! Wrong selections are undone with backspace, so every completed run ends
//! with the exact target text.

mod compare;
mod metrics;
mod session;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use compare::{
    cohort_score_models, read_rows, run_cells, run_comparison, summarize_rows, table_rows,
    write_rows, ComparisonReport, ComparisonRow, PairwiseTest, SchemeSummary, SubjectModels,
    TableRow, TrainingMode,
};
pub use metrics::{
    itr, itr_inputs, retry_rate, ItemRecord, ItrInputs, SelectionRecord, SimMetrics,
};

use crate::decoder::{maybe_select, DecoderConfig, DecoderState, TraceRecord};
use crate::eegsim::{GaussianParams, ScoreSampler, SubjectScoreModel, GROUPS_PER_SEQUENCE};
use crate::error::{Error, Result};
use crate::flashboard::{
    build_huffman, build_layout, highlight_schedule, HuffmanCursor, HuffmanStep, LayoutScheme,
    OrderMode, Scheme,
};
use crate::lm::{char_prior, text, ModelStack};
use crate::predictor::{layered_predict, Suggestion, TrellisConfig, WordPredictor, CONTEXT_WINDOW};
use crate::swlda::Label;
use crate::symbol::{BoardVector, SymbolId, SymbolSet, SLOT_COUNT};
use session::Session;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorMode {
    None,
    /// Character-model trellis completions only.
    Trellis,
    /// External predictor first, trellis for the remaining slots.
    Layered,
}

impl PredictorMode {
    pub fn name(self) -> &'static str {
        match self {
            PredictorMode::None => "none",
            PredictorMode::Trellis => "trellis",
            PredictorMode::Layered => "layered",
        }
    }
}

impl FromStr for PredictorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "" => Ok(PredictorMode::None),
            "trellis" | "dijkstra" => Ok(PredictorMode::Trellis),
            "layered" | "gpt2" => Ok(PredictorMode::Layered),
            _ => Err(Error::UnknownScheme(s.to_owned())),
        }
    }
}

/// A flashing scheme with its word-prediction mode, written `diagonal+layered`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SchemeSpec {
    pub scheme: Scheme,
    pub predictor: PredictorMode,
}

impl SchemeSpec {
    pub fn new(scheme: Scheme, predictor: PredictorMode) -> Self {
        SchemeSpec { scheme, predictor }
    }

    fn cell_id(self) -> u64 {
        let scheme = Scheme::ALL
            .iter()
            .position(|s| *s == self.scheme)
            .expect("listed") as u64;
        scheme * 3 + self.predictor as u64
    }
}

impl fmt::Display for SchemeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.predictor {
            PredictorMode::None => write!(f, "{}", self.scheme),
            p => write!(f, "{}+{}", self.scheme, p.name()),
        }
    }
}

impl FromStr for SchemeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (scheme, predictor) = s.split_once('+').unwrap_or((s, "none"));
        Ok(SchemeSpec {
            scheme: scheme.trim().parse()?,
            predictor: predictor.trim().parse()?,
        })
    }
}

impl TryFrom<String> for SchemeSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SchemeSpec> for String {
    fn from(s: SchemeSpec) -> String {
        s.to_string()
    }
}

/// How the suggestion slots get their prior mass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotPrior {
    /// Slots share `lambda` by suggestion score.
    Fixed,
    /// Each slot gets its word's probability under the model that
    /// proposed it, taken from the character that would continue the word.
    Model,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub decoder: DecoderConfig,
    /// Stimulus onset asynchrony, seconds per flash.
    pub soa: f64,
    /// Pause after each selection, seconds.
    pub pause: f64,
    pub slot_prior: SlotPrior,
    /// Prior mass given to the suggestion slots under [`SlotPrior::Fixed`].
    pub lambda: f64,
    /// Prior mass reserved for backspace.
    pub backspace_mass: f64,
    pub n_suggestions: usize,
    pub trellis: TrellisConfig,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            decoder: DecoderConfig::default(),
            soa: 0.125,
            pause: 0.0,
            slot_prior: SlotPrior::Fixed,
            lambda: 0.5,
            backspace_mass: 0.05,
            n_suggestions: 6,
            trellis: TrellisConfig::default(),
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.decoder.validate()?;
        if !(self.soa > 0.0 && self.soa.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "soa={} must be positive",
                self.soa
            )));
        }
        if !(self.pause >= 0.0 && self.pause.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "pause={} must be nonnegative",
                self.pause
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidArgument(format!(
                "lambda={} outside [0, 1]",
                self.lambda
            )));
        }
        if !(0.0..1.0).contains(&self.backspace_mass) {
            return Err(Error::InvalidArgument(format!(
                "backspace_mass={} outside [0, 1)",
                self.backspace_mass
            )));
        }
        if !(1..=SLOT_COUNT).contains(&self.n_suggestions) {
            return Err(Error::InvalidArgument(format!(
                "n_suggestions={} outside 1..={SLOT_COUNT}",
                self.n_suggestions
            )));
        }
        Ok(())
    }
}

/// Normalizes raw text and keeps at most `budget` characters, cut back to
/// a word end.
pub fn prepare_target(raw: &str, budget: Option<usize>) -> Result<String> {
    let mut t = text::normalize(raw);
    if let Some(b) = budget {
        if t.len() > b {
            t.truncate(b);
            if let Some(i) = t.rfind(' ') {
                t.truncate(i);
            }
        }
    }
    let t = t.trim_end().to_owned();
    if t.is_empty() {
        return Err(Error::InvalidArgument(
            "target text is empty after normalization".into(),
        ));
    }
    Ok(t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub subject: u32,
    pub scheme: SchemeSpec,
    pub transcript: String,
    /// Transcript equals the target with no item abandoned.
    pub completed: bool,
    pub selections: Vec<SelectionRecord>,
    /// One record per target character.
    pub items: Vec<ItemRecord>,
    pub metrics: SimMetrics,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<TraceRecord>,
}

impl SimResult {
    /// Per-item ITR: the run's rate for typed items, zero for abandoned ones.
    pub fn item_itr_series(&self) -> Vec<f64> {
        let full = if self.metrics.abandoned_fraction < 1.0 {
            self.metrics.itr / (1.0 - self.metrics.abandoned_fraction)
        } else {
            0.0
        };
        self.items
            .iter()
            .map(|i| if i.abandoned { 0.0 } else { full })
            .collect()
    }
}

type CacheKey = (PredictorMode, String, String);

/// Runs typing simulations against shared models. Word suggestions are
/// memoized, so one simulator should serve a whole comparison.
pub struct Simulator<'a> {
    stack: &'a ModelStack,
    external: Option<&'a dyn WordPredictor>,
    cfg: SimConfig,
    cache: Mutex<HashMap<CacheKey, Vec<Suggestion>>>,
}

struct Flasher<'s, 'm> {
    sampler: ScoreSampler<'m>,
    rng: ChaCha8Rng,
    gaussian: GaussianParams,
    trace: Option<&'s mut Vec<TraceRecord>>,
    item: usize,
    flash_index: usize,
}

impl Flasher<'_, '_> {
    fn flash(
        &mut self,
        members: SymbolSet,
        intended: SymbolId,
        state: &mut DecoderState,
        hypothesis: SymbolSet,
    ) -> f64 {
        let label = if members.contains(intended) {
            Label::Attended
        } else {
            Label::NonAttended
        };
        let y = self.sampler.draw(label);
        state.update(hypothesis, y, &self.gaussian);
        if let Some(trace) = self.trace.as_deref_mut() {
            trace.push(TraceRecord {
                char_index: self.item,
                flash_index: self.flash_index,
                group: members.iter().map(|s| s.to_string()).collect(),
                y,
                posterior_max: state.argmax().1,
                selection: None,
            });
        }
        self.flash_index += 1;
        y
    }

    fn mark_selection(&mut self, selected: SymbolId) {
        if let Some(last) = self.trace.as_deref_mut().and_then(|t| t.last_mut()) {
            last.selection = Some(selected.to_string());
        }
    }
}

impl<'a> Simulator<'a> {
    pub fn new(
        stack: &'a ModelStack,
        external: Option<&'a dyn WordPredictor>,
        cfg: SimConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(Simulator {
            stack,
            external,
            cfg,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    fn suggestions(
        &self,
        mode: PredictorMode,
        context: &str,
        prefix: &str,
    ) -> Result<Vec<Suggestion>> {
        let client = match mode {
            PredictorMode::None => return Ok(Vec::new()),
            PredictorMode::Trellis => None,
            PredictorMode::Layered => self.external,
        };
        // Both sources only ever see the last CONTEXT_WINDOW characters.
        let start = context.len().saturating_sub(CONTEXT_WINDOW);
        let key = (mode, context[start..].to_owned(), prefix.to_owned());
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let out = layered_predict(
            client,
            self.stack,
            &key.1,
            prefix,
            self.cfg.n_suggestions,
            &self.cfg.trellis,
        )?;
        self.cache
            .lock()
            .expect("cache lock")
            .insert(key, out.clone());
        Ok(out)
    }

    /// Board prior for the current text: characters from the language
    /// model, slots from suggestions, then a fixed backspace reserve.
    pub fn board_prior(&self, typed: &str, suggestions: &[Suggestion]) -> Result<BoardVector> {
        let chars = char_prior(self.stack, typed);
        let mut prior = match self.cfg.slot_prior {
            SlotPrior::Fixed => {
                crate::predictor::attach_suggestions(&chars, suggestions, self.cfg.lambda)?
            }
            SlotPrior::Model => {
                let prefix = &typed[typed.rfind(' ').map_or(0, |i| i + 1)..];
                crate::predictor::attach_by_probability(&chars, prefix, suggestions)?
            }
        };
        let b = self.cfg.backspace_mass;
        for p in prior.iter_mut() {
            *p *= 1.0 - b;
        }
        prior[SymbolId::BACKSPACE.index()] = b;
        Ok(prior)
    }

    /// Types `target` (already normalized) with one subject's score model.
    pub fn simulate_subject(
        &self,
        spec: SchemeSpec,
        model: &SubjectScoreModel,
        subject: u32,
        target: &str,
    ) -> Result<SimResult> {
        self.run(spec, model, subject, target, false)
    }

    /// As [`Simulator::simulate_subject`], also keeping a per-flash trace.
    pub fn simulate_traced(
        &self,
        spec: SchemeSpec,
        model: &SubjectScoreModel,
        subject: u32,
        target: &str,
    ) -> Result<SimResult> {
        self.run(spec, model, subject, target, true)
    }

    fn run(
        &self,
        spec: SchemeSpec,
        model: &SubjectScoreModel,
        subject: u32,
        target: &str,
        traced: bool,
    ) -> Result<SimResult> {
        model.gaussian.validate()?;
        if target.is_empty() || text::normalize(target) != target {
            return Err(Error::InvalidArgument(
                "target must be nonempty normalized text".into(),
            ));
        }
        let cell = spec.cell_id();
        let mut trace = Vec::new();
        let mut flasher = Flasher {
            sampler: ScoreSampler::new(
                model,
                crate::seed::derive(self.cfg.seed, &[subject as u64, cell, 0]),
            ),
            rng: ChaCha8Rng::seed_from_u64(crate::seed::derive(
                self.cfg.seed,
                &[subject as u64, cell, 1],
            )),
            gaussian: model.gaussian,
            trace: traced.then_some(&mut trace),
            item: 0,
            flash_index: 0,
        };
        let mut session = Session::new(target);
        let mut items = vec![ItemRecord::default(); target.len()];
        let mut selections = Vec::new();
        let abandon_after = self.cfg.decoder.abandon_scans * GROUPS_PER_SEQUENCE;
        let (mut best, mut since_progress) = (0usize, 0usize);

        while !session.done() {
            let item = best.min(target.len() - 1);
            let (context, prefix) = session.split();
            let suggestions = self.suggestions(spec.predictor, context, prefix)?;
            let prior = self.board_prior(session.typed(), &suggestions)?;
            let intended = session.intended(&suggestions);
            flasher.item = item;
            flasher.flash_index = 0;
            let (selected, flashes) = match spec.scheme.row_column() {
                Some((layout, order)) => {
                    self.select_row_column(layout, order, &prior, intended, &mut flasher)?
                }
                None => self.select_huffman(&prior, intended, &mut flasher)?,
            };
            flasher.mark_selection(selected);

            let before = session.typed().len();
            let committed = session.apply(selected, &suggestions);
            let progressed = session.on_track() && session.typed().len() > before;
            let error = selected != intended && !progressed;
            selections.push(SelectionRecord {
                item,
                intended,
                selected,
                error,
                flashes,
                committed,
            });
            let rec = &mut items[item];
            rec.flashes += flashes;
            rec.seconds += flashes as f64 * self.cfg.soa + self.cfg.pause;
            rec.attempts += 1;

            since_progress += flashes;
            if session.on_track() && session.typed().len() > best {
                best = session.typed().len();
                since_progress = 0;
            } else if since_progress > abandon_after {
                let index = session.force_next();
                log::debug!("subject {subject} {spec}: abandoned item {index}");
                items[index].abandoned = true;
                best = best.max(session.typed().len());
                since_progress = 0;
            }
        }

        let metrics = metrics::summarize(&selections, &items, self.cfg.soa, self.cfg.pause);
        let completed = !items.iter().any(|i| i.abandoned);
        Ok(SimResult {
            subject,
            scheme: spec,
            transcript: session.into_typed(),
            completed,
            selections,
            items,
            metrics,
            trace,
        })
    }

    fn select_row_column(
        &self,
        layout: LayoutScheme,
        order: OrderMode,
        prior: &BoardVector,
        intended: SymbolId,
        flasher: &mut Flasher,
    ) -> Result<(SymbolId, usize)> {
        let layout = build_layout(layout, prior);
        let mut state = DecoderState::new(prior)?;
        let budget = self.cfg.decoder.max_sequences * GROUPS_PER_SEQUENCE;
        loop {
            for group in highlight_schedule(&layout, prior, order, &mut flasher.rng) {
                flasher.flash(group.members, intended, &mut state, group.members);
                if let Some(i) = maybe_select(&state, self.cfg.decoder.p_thresh, budget) {
                    let s = SymbolId::new(i).expect("board-sized posterior");
                    return Ok((s, state.flashes_seen()));
                }
            }
        }
    }

    /// Descends the Huffman tree with one two-hypothesis decision per node
    /// and confirms the reached leaf with a single flash; a rejected leaf
    /// restarts the descent. The flash budget caps the whole selection.
    fn select_huffman(
        &self,
        prior: &BoardVector,
        intended: SymbolId,
        flasher: &mut Flasher,
    ) -> Result<(SymbolId, usize)> {
        let tree = build_huffman(prior)?;
        let mut cursor = HuffmanCursor::new(&tree);
        let budget = self.cfg.decoder.max_sequences * GROUPS_PER_SEQUENCE;
        let p_thresh = self.cfg.decoder.p_thresh;
        let inside: SymbolSet = std::iter::once(SymbolId::new(0).expect("cell 0")).collect();
        let mut flashes = 0;
        let mut confidence = 1.0;
        loop {
            match cursor.step(&tree) {
                HuffmanStep::Flash(group) => {
                    let node_prob = tree.node(cursor.node()).prob;
                    let p_in = if node_prob > 0.0 {
                        (group.weight / node_prob).clamp(0.0, 1.0)
                    } else {
                        0.5
                    };
                    let mut state = DecoderState::new(&[p_in, 1.0 - p_in])?;
                    let decision = loop {
                        let node_budget = if flashes >= budget {
                            state.flashes_seen()
                        } else {
                            self.cfg.decoder.max_sequences
                        };
                        if let Some(d) = maybe_select(&state, p_thresh, node_budget) {
                            break d;
                        }
                        flasher.flash(group.members, intended, &mut state, inside);
                        flashes += 1;
                    };
                    confidence *= state.posterior()[decision];
                    cursor.advance(&tree, decision == 0);
                }
                HuffmanStep::Leaf(leaf) => {
                    if flashes >= budget {
                        return Ok((leaf, flashes));
                    }
                    let mut state = DecoderState::new(&[confidence, 1.0 - confidence])?;
                    let members: SymbolSet = std::iter::once(leaf).collect();
                    flasher.flash(members, intended, &mut state, inside);
                    flashes += 1;
                    if state.posterior()[0] >= 0.5 {
                        return Ok((leaf, flashes));
                    }
                    cursor.restart(&tree);
                    confidence = 1.0;
                }
            }
        }
    }
}
