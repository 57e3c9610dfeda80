//! Stepwise linear discriminant analysis.
//!
//! Class labels (+1 attended, -1 not) are regressed on the features by
//! ordinary least squares with an intercept. Features enter and leave the
//! model by partial F-tests until the selection stops changing.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Attended,
    NonAttended,
}

impl Label {
    pub fn is_attended(self) -> bool {
        self == Label::Attended
    }

    fn target(self) -> f64 {
        if self.is_attended() {
            1.0
        } else {
            -1.0
        }
    }
}

/// One flash's feature vector with its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFlash {
    pub subject: u32,
    pub char_index: u32,
    pub flash_index: u32,
    pub label: Label,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwldaConfig {
    pub p_enter: f64,
    pub p_remove: f64,
    pub max_features: usize,
}

impl Default for SwldaConfig {
    fn default() -> Self {
        SwldaConfig {
            p_enter: 0.10,
            p_remove: 0.15,
            max_features: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierWeights {
    pub dim: usize,
    pub selected: Vec<usize>,
    pub weights: Vec<f64>,
    /// No feature passed the entry test.
    pub insignificant: bool,
}

/// `w · z` over the selected features (intercept excluded).
pub fn score_flash(w: &ClassifierWeights, z: &[f64]) -> Result<f64> {
    if z.len() != w.dim {
        return Err(Error::DimensionMismatch {
            expected: w.dim,
            got: z.len(),
        });
    }
    Ok(w.selected
        .iter()
        .zip(&w.weights)
        .map(|(&i, wi)| wi * z[i])
        .sum())
}

/// Sufficient statistics for every least-squares fit on a subset of columns.
struct Normal {
    n: usize,
    // Column 0 is the intercept.
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
}

impl Normal {
    fn new(rows: &[&LabeledFlash], dim: usize) -> Self {
        let n = rows.len();
        let x = DMatrix::from_fn(
            n,
            dim + 1,
            |r, c| if c == 0 { 1.0 } else { rows[r].values[c - 1] },
        );
        let y = DVector::from_iterator(n, rows.iter().map(|r| r.label.target()));
        Normal {
            n,
            gram: x.tr_mul(&x),
            xty: x.tr_mul(&y),
            yty: y.dot(&y),
        }
    }

    /// Coefficients and residual sum of squares for intercept plus `set`.
    fn fit(&self, set: &[usize]) -> Option<(DVector<f64>, f64)> {
        let cols: Vec<usize> = std::iter::once(0)
            .chain(set.iter().map(|f| f + 1))
            .collect();
        let k = cols.len();
        let a = DMatrix::from_fn(k, k, |i, j| self.gram[(cols[i], cols[j])]);
        let b = DVector::from_fn(k, |i, _| self.xty[cols[i]]);
        let chol = a.clone().cholesky()?;
        let beta = chol.solve(&b);
        // Reject numerically rank-deficient fits.
        let residual = (&a * &beta - &b).norm();
        if !beta.iter().all(|v| v.is_finite()) || residual > 1e-8 * (1.0 + b.norm()) {
            return None;
        }
        let rss = (self.yty - beta.dot(&b)).max(0.0);
        Some((beta, rss))
    }
}

fn f_pvalue(f: f64, df2: usize) -> f64 {
    if df2 == 0 || !f.is_finite() {
        return if f.is_finite() { 1.0 } else { 0.0 };
    }
    FisherSnedecor::new(1.0, df2 as f64).map_or(1.0, |d| d.sf(f.max(0.0)))
}

/// Partial F statistic for the feature separating `small` and `big` models.
fn partial_f(rss_small: f64, rss_big: f64, df2: usize) -> f64 {
    if rss_big <= 0.0 {
        return f64::INFINITY;
    }
    (rss_small - rss_big).max(0.0) / (rss_big / df2 as f64)
}

pub fn swlda_train(rows: &[&LabeledFlash], cfg: &SwldaConfig) -> Result<ClassifierWeights> {
    if cfg.p_enter.is_nan() || cfg.p_remove.is_nan() || cfg.p_enter >= cfg.p_remove {
        return Err(Error::InvalidArgument(
            "p_enter must be below p_remove".into(),
        ));
    }
    let Some(first) = rows.first() else {
        return Err(Error::InsufficientData("no training flashes".into()));
    };
    let dim = first.values.len();
    if let Some(bad) = rows.iter().find(|r| r.values.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.values.len(),
        });
    }
    if !rows.iter().any(|r| r.label.is_attended()) || rows.iter().all(|r| r.label.is_attended()) {
        return Err(Error::InsufficientData("both classes are required".into()));
    }

    let ne = Normal::new(rows, dim);
    let n = ne.n;
    let mut set: Vec<usize> = Vec::new();
    let (_, mut rss) = ne.fit(&set).expect("intercept-only fit");
    let mut seen = BTreeSet::new();

    for _ in 0..4 * dim.max(1) + 4 {
        let mut changed = false;

        // Forward: the candidate with the largest partial F (smallest p).
        if set.len() < cfg.max_features.min(n.saturating_sub(2)) {
            let df2 = n - set.len() - 2;
            let mut best: Option<(f64, usize, f64)> = None;
            for j in (0..dim).filter(|j| !set.contains(j)) {
                let mut trial = set.clone();
                trial.push(j);
                let Some((_, rss_j)) = ne.fit(&trial) else {
                    continue;
                };
                let f = partial_f(rss, rss_j, df2);
                if best.is_none_or(|(bf, _, _)| f > bf) {
                    best = Some((f, j, rss_j));
                }
            }
            if let Some((f, j, rss_j)) = best {
                if f_pvalue(f, df2) < cfg.p_enter {
                    set.push(j);
                    rss = rss_j;
                    changed = true;
                }
            }
        }

        // Backward: drop the weakest feature while it fails the removal test.
        while !set.is_empty() {
            let df2 = n - set.len() - 1;
            let mut worst: Option<(f64, usize, f64)> = None;
            for pos in 0..set.len() {
                let mut trial = set.clone();
                trial.remove(pos);
                let Some((_, rss_without)) = ne.fit(&trial) else {
                    continue;
                };
                let f = partial_f(rss_without, rss, df2);
                if worst.is_none_or(|(wf, _, _)| f < wf) {
                    worst = Some((f, pos, rss_without));
                }
            }
            match worst {
                Some((f, pos, rss_without)) if f_pvalue(f, df2) > cfg.p_remove => {
                    set.remove(pos);
                    rss = rss_without;
                    changed = true;
                }
                _ => break,
            }
        }

        let mut key = set.clone();
        key.sort_unstable();
        if !changed || !seen.insert(key) {
            break;
        }
    }

    set.sort_unstable();
    let weights = match ne.fit(&set) {
        Some((beta, _)) => beta.iter().skip(1).copied().collect(),
        None => {
            set.clear();
            Vec::new()
        }
    };
    Ok(ClassifierWeights {
        dim,
        insignificant: set.is_empty(),
        selected: set,
        weights,
    })
}

/// A classifier output for one held-out flash.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredFlash {
    pub char_index: u32,
    pub flash_index: u32,
    pub label: Label,
    pub score: f64,
}

fn score_rows(w: &ClassifierWeights, rows: &[&LabeledFlash]) -> Result<Vec<ScoredFlash>> {
    rows.iter()
        .map(|r| {
            Ok(ScoredFlash {
                char_index: r.char_index,
                flash_index: r.flash_index,
                label: r.label,
                score: score_flash(w, &r.values)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct WscvResult {
    pub subject: u32,
    pub folds: Vec<ClassifierWeights>,
    /// Held-out scores of every scored fold, in flash order.
    pub scores: Vec<ScoredFlash>,
    pub skipped_folds: Vec<usize>,
}

/// Minimum characters per subject for within-subject validation.
pub const MIN_CHARACTERS: usize = 20;

/// k-fold cross-validation over contiguous blocks of one subject's characters.
pub fn run_wscv(rows: &[LabeledFlash], folds: usize, cfg: &SwldaConfig) -> Result<WscvResult> {
    let subject = match rows.first() {
        Some(r) => r.subject,
        None => return Err(Error::InsufficientData("subject has no flashes".into())),
    };
    if rows.iter().any(|r| r.subject != subject) {
        return Err(Error::InvalidArgument(
            "rows from more than one subject".into(),
        ));
    }
    let chars: Vec<u32> = rows
        .iter()
        .map(|r| r.char_index)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if chars.len() < MIN_CHARACTERS {
        return Err(Error::InsufficientData(format!(
            "subject {subject}: {} characters, need {MIN_CHARACTERS}",
            chars.len()
        )));
    }
    if folds < 2 {
        return Err(Error::InvalidArgument(
            "at least two folds are required".into(),
        ));
    }
    let fold_of = |c: u32| {
        let rank = chars.binary_search(&c).expect("known character");
        rank * folds / chars.len()
    };

    let mut result = WscvResult {
        subject,
        folds: Vec::new(),
        scores: Vec::new(),
        skipped_folds: Vec::new(),
    };
    for k in 0..folds {
        let (test, train): (Vec<&LabeledFlash>, Vec<&LabeledFlash>) =
            rows.iter().partition(|r| fold_of(r.char_index) == k);
        let w = match swlda_train(&train, cfg) {
            Ok(w) => w,
            Err(Error::InsufficientData(msg)) => {
                log::warn!("subject {subject} fold {k} skipped: {msg}");
                result.skipped_folds.push(k);
                continue;
            }
            Err(e) => return Err(e),
        };
        result.scores.extend(score_rows(&w, &test)?);
        result.folds.push(w);
    }
    result.scores.sort_by_key(|s| (s.char_index, s.flash_index));
    Ok(result)
}

#[derive(Clone, Debug)]
pub struct AscvResult {
    pub test_subject: u32,
    pub weights: ClassifierWeights,
    pub scores: Vec<ScoredFlash>,
    /// Subjects whose flashes were used for training.
    pub trained_on: BTreeSet<u32>,
}

fn zscore_by_subject(rows: &[LabeledFlash]) -> Vec<LabeledFlash> {
    let subjects: BTreeSet<u32> = rows.iter().map(|r| r.subject).collect();
    let dim = rows.first().map_or(0, |r| r.values.len());
    let mut out = rows.to_vec();
    for s in subjects {
        let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].subject == s).collect();
        let m = idx.len() as f64;
        for d in 0..dim {
            let mean = idx.iter().map(|&i| rows[i].values[d]).sum::<f64>() / m;
            let var = idx
                .iter()
                .map(|&i| (rows[i].values[d] - mean).powi(2))
                .sum::<f64>()
                / m;
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            for &i in &idx {
                out[i].values[d] = (rows[i].values[d] - mean) / sd;
            }
        }
    }
    out
}

/// Leave-one-subject-out: train on every other subject, score `test_subject`.
pub fn run_ascv(
    rows: &[LabeledFlash],
    test_subject: u32,
    zscore: bool,
    cfg: &SwldaConfig,
) -> Result<AscvResult> {
    let subjects: BTreeSet<u32> = rows.iter().map(|r| r.subject).collect();
    if subjects.len() < 2 {
        return Err(Error::InsufficientData(
            "across-subject training needs two subjects".into(),
        ));
    }
    if !subjects.contains(&test_subject) {
        return Err(Error::InvalidArgument(format!(
            "no flashes for subject {test_subject}"
        )));
    }
    let normalized;
    let rows = if zscore {
        normalized = zscore_by_subject(rows);
        &normalized[..]
    } else {
        rows
    };
    let (test, train): (Vec<&LabeledFlash>, Vec<&LabeledFlash>) =
        rows.iter().partition(|r| r.subject == test_subject);
    let trained_on: BTreeSet<u32> = train.iter().map(|r| r.subject).collect();
    debug_assert!(!trained_on.contains(&test_subject));
    let weights = swlda_train(&train, cfg)?;
    let mut scores = score_rows(&weights, &test)?;
    scores.sort_by_key(|s| (s.char_index, s.flash_index));
    Ok(AscvResult {
        test_subject,
        weights,
        scores,
        trained_on,
    })
}

/// Writes `subject,char_index,flash_index,label,f0..` rows.
pub fn write_features(path: &Path, rows: &[LabeledFlash]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let dim = rows.first().map_or(0, |r| r.values.len());
    let mut header: Vec<String> = ["subject", "char_index", "flash_index", "label"]
        .map(String::from)
        .to_vec();
    header.extend((0..dim).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.subject.to_string(),
            r.char_index.to_string(),
            r.flash_index.to_string(),
            if r.label.is_attended() { "1" } else { "0" }.to_string(),
        ];
        rec.extend(r.values.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<Vec<LabeledFlash>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let mut out: Vec<LabeledFlash> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        let err = |msg: String| Error::Parse {
            path: path.display().to_string(),
            line,
            msg,
        };
        if rec.len() < 5 {
            return Err(err(
                "expected subject, char_index, flash_index, label and features".into(),
            ));
        }
        let int = |j: usize| {
            rec[j]
                .trim()
                .parse::<u32>()
                .map_err(|e| err(format!("column {j}: {e}")))
        };
        let label = match rec[3].trim() {
            "1" | "attended" => Label::Attended,
            "0" | "non-attended" => Label::NonAttended,
            other => return Err(err(format!("bad label `{other}`"))),
        };
        let values = (4..rec.len())
            .map(|j| {
                rec[j]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| err(format!("column {j}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(prev) = out.first() {
            if prev.values.len() != values.len() {
                return Err(err(format!(
                    "{} features, expected {}",
                    values.len(),
                    prev.values.len()
                )));
            }
        }
        out.push(LabeledFlash {
            subject: int(0)?,
            char_index: int(1)?,
            flash_index: int(2)?,
            label,
            values,
        });
    }
    Ok(out)
}
