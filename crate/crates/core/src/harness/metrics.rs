//! ITR and retry-rate accounting over a finished simulation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbol::NUM_SYMBOLS;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItrInputs {
    /// Number of board cells.
    pub n: usize,
    /// Time per correct selection unit, seconds.
    pub t: f64,
    pub p_f: f64,
    /// Time to re-select after an error, seconds.
    pub t_r: f64,
    /// Time to select backspace, seconds.
    pub t_c: f64,
}

/// Bits per minute: `log2(N + 1) / (T + P_f (T_r + T_c)) * 60`.
pub fn itr(inputs: &ItrInputs) -> Result<f64> {
    let ItrInputs {
        n,
        t,
        p_f,
        t_r,
        t_c,
    } = *inputs;
    if n == 0 {
        return Err(Error::InvalidArgument("ITR needs at least one cell".into()));
    }
    if !(0.0..=1.0).contains(&p_f) {
        return Err(Error::InvalidArgument(format!("P_f={p_f} outside [0, 1]")));
    }
    if [t, t_r, t_c].iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidArgument(
            "ITR times must be finite and nonnegative".into(),
        ));
    }
    let denom = t + p_f * (t_r + t_c);
    if denom <= 0.0 {
        return Err(Error::InvalidArgument("ITR denominator is zero".into()));
    }
    Ok(((n + 1) as f64).log2() / denom * 60.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionRecord {
    /// Target index the user was working on.
    pub item: usize,
    pub intended: crate::symbol::SymbolId,
    pub selected: crate::symbol::SymbolId,
    /// Left the text off track, removed correct text or hit an empty slot.
    pub error: bool,
    pub flashes: usize,
    /// Characters added to the text.
    pub committed: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub flashes: usize,
    pub seconds: f64,
    /// Selections made while this item was next.
    pub attempts: usize,
    pub abandoned: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    /// Bits per minute with abandoned items counted as zero.
    pub itr: f64,
    /// ITR with `T` and `T_r` read as the mean correct-selection time.
    pub itr_per_selection: f64,
    pub retry_rate: f64,
    pub error_rate: f64,
    pub selections: usize,
    pub flashes: usize,
    pub seconds: f64,
    pub flashes_per_selection: f64,
    pub abandoned_fraction: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Backspace selections over all selections; `None` without selections.
pub fn retry_rate(selections: &[SelectionRecord]) -> Option<f64> {
    if selections.is_empty() {
        return None;
    }
    let backspaces = selections
        .iter()
        .filter(|s| s.selected.is_backspace())
        .count();
    Some(backspaces as f64 / selections.len() as f64)
}

/// ITR terms from a selection log over a target of `chars` characters.
///
/// `T` is the whole session time, corrections included, per target
/// character, and `T_r` the time of correct text-producing selections per
/// character they committed, so a word selection is credited with every
/// character it typed. With `per_selection`, `T` and `T_r` are instead mean
/// times of correct text-producing selections. `None` if no selection
/// produced text correctly or the target is empty.
pub fn itr_inputs(
    selections: &[SelectionRecord],
    secs: impl Fn(&SelectionRecord) -> f64,
    chars: usize,
    per_selection: bool,
) -> Option<ItrInputs> {
    let productive: Vec<&SelectionRecord> = selections
        .iter()
        .filter(|s| !s.error && !s.selected.is_backspace() && s.committed > 0)
        .collect();
    let committed: usize = productive.iter().map(|s| s.committed).sum();
    if committed == 0 || chars == 0 {
        return None;
    }
    let productive_secs: f64 = productive.iter().map(|s| secs(s)).sum();
    let (t, t_r) = if per_selection {
        let m = productive_secs / productive.len() as f64;
        (m, m)
    } else {
        let total: f64 = selections.iter().map(&secs).sum();
        (total / chars as f64, productive_secs / committed as f64)
    };
    let t_c = mean(
        selections
            .iter()
            .filter(|s| !s.error && s.intended.is_backspace())
            .map(&secs),
    )
    .unwrap_or(t_r);
    let errors = selections.iter().filter(|s| s.error).count();
    Some(ItrInputs {
        n: NUM_SYMBOLS,
        t,
        p_f: errors as f64 / selections.len() as f64,
        t_r,
        t_c,
    })
}

pub(crate) fn summarize(
    selections: &[SelectionRecord],
    items: &[ItemRecord],
    soa: f64,
    pause: f64,
) -> SimMetrics {
    let secs = |s: &SelectionRecord| s.flashes as f64 * soa + pause;
    let abandoned = items.iter().filter(|i| i.abandoned).count();
    let abandoned_fraction = if items.is_empty() {
        0.0
    } else {
        abandoned as f64 / items.len() as f64
    };
    let rate = |per_selection| {
        itr_inputs(selections, secs, items.len(), per_selection)
            .and_then(|inp| itr(&inp).ok())
            .map_or(0.0, |v| v * (1.0 - abandoned_fraction))
    };
    let flashes: usize = selections.iter().map(|s| s.flashes).sum();
    let n = selections.len();
    SimMetrics {
        itr: rate(false),
        itr_per_selection: rate(true),
        retry_rate: retry_rate(selections).unwrap_or(0.0),
        error_rate: if n == 0 {
            0.0
        } else {
            selections.iter().filter(|s| s.error).count() as f64 / n as f64
        },
        selections: n,
        flashes,
        seconds: selections.iter().map(secs).sum(),
        flashes_per_selection: if n == 0 {
            0.0
        } else {
            flashes as f64 / n as f64
        },
        abandoned_fraction,
    }
}
