//! Scheme comparisons over a cohort under within- and across-subject
//! classifier training.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{SchemeSpec, Simulator};
use crate::eegsim::{fit_score_model, ScoreMode, SubjectScoreModel};
use crate::error::{Error, Result};
use crate::stats::{self, TestReport, ViolinSummary};
use crate::swlda::{run_ascv, run_wscv, LabeledFlash, SwldaConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingMode {
    /// Classifier trained on held-out folds of the subject's own data.
    Wscv,
    /// Classifier trained on every other subject.
    Ascv,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubjectModels {
    pub subject: u32,
    pub wscv: SubjectScoreModel,
    pub ascv: Option<SubjectScoreModel>,
}

impl SubjectModels {
    fn get(&self, mode: TrainingMode) -> Option<&SubjectScoreModel> {
        match mode {
            TrainingMode::Wscv => Some(&self.wscv),
            TrainingMode::Ascv => self.ascv.as_ref(),
        }
    }
}

/// Trains SWLDA per subject (k-fold) and optionally leave-one-subject-out,
/// and fits score models to the held-out scores.
pub fn cohort_score_models(
    flashes: &[LabeledFlash],
    folds: usize,
    ascv: bool,
    zscore: bool,
    swlda: &SwldaConfig,
    mode: ScoreMode,
) -> Result<Vec<SubjectModels>> {
    let mut by_subject: BTreeMap<u32, Vec<LabeledFlash>> = BTreeMap::new();
    for f in flashes {
        by_subject.entry(f.subject).or_default().push(f.clone());
    }
    by_subject
        .iter()
        .map(|(&subject, rows)| {
            let w = run_wscv(rows, folds, swlda)?;
            let wscv = fit_score_model(&w.scores, mode)?;
            let ascv = if ascv {
                let a = run_ascv(flashes, subject, zscore, swlda)?;
                Some(fit_score_model(&a.scores, mode)?)
            } else {
                None
            };
            Ok(SubjectModels {
                subject,
                wscv,
                ascv,
            })
        })
        .collect()
}

/// One subject × scheme × training-mode cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub subject: u32,
    pub scheme: SchemeSpec,
    pub training: TrainingMode,
    pub itr: f64,
    pub itr_per_selection: f64,
    pub retry_rate: f64,
    pub error_rate: f64,
    pub flashes_per_selection: f64,
    pub abandoned_fraction: f64,
    pub completed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: SchemeSpec,
    pub training: TrainingMode,
    pub mean: f64,
    pub sd: f64,
    pub violin: ViolinSummary,
    pub shapiro_wilk: Option<TestReport>,
    pub ks: Option<TestReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub training: TrainingMode,
    pub a: SchemeSpec,
    pub b: SchemeSpec,
    pub wilcoxon: Option<TestReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub summaries: Vec<SchemeSummary>,
    pub kruskal_wallis: BTreeMap<TrainingMode, TestReport>,
    pub pairwise: Vec<PairwiseTest>,
}

impl ComparisonReport {
    /// ITR per subject for one cell column, ordered by subject.
    pub fn series(&self, scheme: SchemeSpec, training: TrainingMode) -> Vec<f64> {
        let mut v: Vec<(u32, f64)> = self
            .rows
            .iter()
            .filter(|r| r.scheme == scheme && r.training == training)
            .map(|r| (r.subject, r.itr))
            .collect();
        v.sort_by_key(|(s, _)| *s);
        v.into_iter().map(|(_, x)| x).collect()
    }

    pub fn summary(&self, scheme: SchemeSpec, training: TrainingMode) -> Option<&SchemeSummary> {
        self.summaries
            .iter()
            .find(|s| s.scheme == scheme && s.training == training)
    }

    pub fn pair(
        &self,
        training: TrainingMode,
        a: SchemeSpec,
        b: SchemeSpec,
    ) -> Option<&PairwiseTest> {
        self.pairwise
            .iter()
            .find(|p| p.training == training && ((p.a, p.b) == (a, b) || (p.a, p.b) == (b, a)))
    }
}

fn soft<T>(what: &str, r: Result<T>) -> Option<T> {
    r.map_err(|e| log::info!("{what} not computed: {e}")).ok()
}

/// Runs every (scheme, subject, training mode) cell on `workers` threads and
/// summarizes per scheme. Cell results do not depend on the worker count.
pub fn run_comparison(
    sim: &Simulator,
    specs: &[SchemeSpec],
    models: &[SubjectModels],
    target: &str,
    workers: usize,
) -> Result<ComparisonReport> {
    check_specs(specs, 2)?;
    let rows = run_cells(sim, specs, models, target, workers)?;
    summarize_rows(rows, specs)
}

fn check_specs(specs: &[SchemeSpec], min: usize) -> Result<()> {
    let distinct: BTreeSet<_> = specs.iter().collect();
    if distinct.len() < min || distinct.len() != specs.len() {
        return Err(Error::InvalidArgument(format!(
            "need {min} or more distinct schemes"
        )));
    }
    Ok(())
}

/// Runs every (scheme, subject, training mode) cell on `workers` threads,
/// returning rows in scheme, subject, mode order.
pub fn run_cells(
    sim: &Simulator,
    specs: &[SchemeSpec],
    models: &[SubjectModels],
    target: &str,
    workers: usize,
) -> Result<Vec<ComparisonRow>> {
    check_specs(specs, 1)?;
    if models.is_empty() {
        return Err(Error::InsufficientData("no subjects".into()));
    }
    let modes: Vec<TrainingMode> = [TrainingMode::Wscv, TrainingMode::Ascv]
        .into_iter()
        .filter(|m| models.iter().any(|s| s.get(*m).is_some()))
        .collect();
    let mut cells: Vec<(SchemeSpec, &SubjectModels, TrainingMode)> = Vec::new();
    for &spec in specs {
        for m in models {
            for &t in &modes {
                if m.get(t).is_some() {
                    cells.push((spec, m, t));
                }
            }
        }
    }

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<ComparisonRow>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(spec, subject, training)) = cells.get(i) else {
                    break;
                };
                let model = subject.get(training).expect("filtered");
                let row = sim
                    .simulate_subject(spec, model, subject.subject, target)
                    .map(|r| ComparisonRow {
                        subject: subject.subject,
                        scheme: spec,
                        training,
                        itr: r.metrics.itr,
                        itr_per_selection: r.metrics.itr_per_selection,
                        retry_rate: r.metrics.retry_rate,
                        error_rate: r.metrics.error_rate,
                        flashes_per_selection: r.metrics.flashes_per_selection,
                        abandoned_fraction: r.metrics.abandoned_fraction,
                        completed: r.completed,
                    });
                slots.lock().expect("collector lock")[i] = Some(row);
            });
        }
    });
    slots
        .into_inner()
        .expect("collector lock")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect::<Result<Vec<_>>>()
}

/// Per-scheme summaries and tests over existing cell rows.
pub fn summarize_rows(rows: Vec<ComparisonRow>, specs: &[SchemeSpec]) -> Result<ComparisonReport> {
    check_specs(specs, 1)?;
    let modes: Vec<TrainingMode> = [TrainingMode::Wscv, TrainingMode::Ascv]
        .into_iter()
        .filter(|m| rows.iter().any(|r| r.training == *m))
        .collect();
    let mut report = ComparisonReport {
        rows,
        summaries: Vec::new(),
        kruskal_wallis: BTreeMap::new(),
        pairwise: Vec::new(),
    };
    for &training in &modes {
        let mut groups = Vec::new();
        for &spec in specs {
            let x = report.series(spec, training);
            report.summaries.push(SchemeSummary {
                scheme: spec,
                training,
                mean: stats::mean(&x),
                sd: stats::sd(&x),
                violin: stats::violin_summary(&x)?,
                shapiro_wilk: soft("Shapiro-Wilk", stats::shapiro_wilk(&x)),
                ks: soft("KS", stats::ks_normality(&x)),
            });
            groups.push(x);
        }
        if let Some(kw) = soft("Kruskal-Wallis", stats::kruskal_wallis(&groups)) {
            report.kruskal_wallis.insert(training, kw);
        }
        for i in 0..specs.len() {
            for j in i + 1..specs.len() {
                let r = stats::wilcoxon_signed_rank(&groups[i], &groups[j]);
                let note = r.as_ref().err().map(|e| e.to_string());
                report.pairwise.push(PairwiseTest {
                    training,
                    a: specs[i],
                    b: specs[j],
                    wilcoxon: r.ok(),
                    note,
                });
            }
        }
    }
    Ok(report)
}

/// Scheme rows with `mean ± sd` ITR per training mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub scheme: SchemeSpec,
    pub wscv_itr: String,
    pub ascv_itr: String,
}

pub fn table_rows(report: &ComparisonReport) -> Vec<TableRow> {
    let mut schemes: Vec<SchemeSpec> = Vec::new();
    for s in &report.summaries {
        if !schemes.contains(&s.scheme) {
            schemes.push(s.scheme);
        }
    }
    let cell = |scheme, training| {
        report.summary(scheme, training).map_or_else(
            || "-".to_owned(),
            |s| format!("{:.2} ± {:.2}", s.mean, s.sd),
        )
    };
    schemes
        .into_iter()
        .map(|scheme| TableRow {
            scheme,
            wscv_itr: cell(scheme, TrainingMode::Wscv),
            ascv_itr: cell(scheme, TrainingMode::Ascv),
        })
        .collect()
}

/// Reads CSV rows written by [`write_rows`], skipping `#` comment lines.
pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    Ok(reader
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()?)
}

/// Writes serializable rows as CSV with a header.
pub fn write_rows<T: Serialize>(w: impl Write, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eegsim::{gen_synthetic_cohort, CohortConfig, DPrime, GaussianParams};
    use crate::harness::SimConfig;
    use crate::lm::{build_models, text, SmoothingParams};

    fn gaussian(subject: u32, d: f64) -> SubjectModels {
        let m = SubjectScoreModel::gaussian(GaussianParams {
            mu_a: d,
            sigma_a: 1.0,
            mu_n: 0.0,
            sigma_n: 1.0,
        })
        .unwrap();
        SubjectModels {
            subject,
            wscv: m,
            ascv: None,
        }
    }

    #[test]
    fn comparison_is_independent_of_worker_count() {
        let stack = build_models(
            &text::normalize(include_str!("../../data/doi.txt")),
            SmoothingParams::default(),
        )
        .unwrap();
        let sim = Simulator::new(&stack, None, SimConfig::default()).unwrap();
        let models: Vec<_> = (0..6).map(|s| gaussian(s, 1.5 + 0.2 * s as f64)).collect();
        let specs: Vec<SchemeSpec> = vec!["random".parse().unwrap(), "diagonal".parse().unwrap()];
        let a = run_comparison(&sim, &specs, &models, "WE HOLD THESE", 1).unwrap();
        let b = run_comparison(&sim, &specs, &models, "WE HOLD THESE", 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 12);
        assert_eq!(a.summaries.len(), 2);
        assert_eq!(a.pairwise.len(), 1);
        assert!(a.pair(TrainingMode::Wscv, specs[1], specs[0]).is_some());
        let table = table_rows(&a);
        assert_eq!(table.len(), 2);
        assert!(table[0].wscv_itr.contains(" ± "));
        assert_eq!(table[0].ascv_itr, "-");
        let mut buf = Vec::new();
        write_rows(&mut buf, &a.rows).unwrap();
        let csv = String::from_utf8(buf).unwrap();
        assert!(csv.starts_with("subject,scheme,training,itr,"));
        assert!(csv.lines().nth(1).unwrap().contains(",random,wscv,"));
    }

    #[test]
    fn one_scheme_is_rejected() {
        let stack = build_models("AB AB", SmoothingParams::default()).unwrap();
        let sim = Simulator::new(&stack, None, SimConfig::default()).unwrap();
        let spec: SchemeSpec = "random".parse().unwrap();
        assert!(run_comparison(&sim, &[spec], &[gaussian(0, 1.0)], "AB", 1).is_err());
        assert!(run_comparison(&sim, &[spec, spec], &[gaussian(0, 1.0)], "AB", 1).is_err());
    }

    #[test]
    fn cohort_models_cover_both_training_modes() {
        let cohort = gen_synthetic_cohort(&CohortConfig {
            n_subjects: 3,
            dprime: DPrime::Fixed { value: 2.0 },
            n_features: 8,
            sequences_per_char: 2,
            chars: 20,
            ..Default::default()
        })
        .unwrap();
        let rows: Vec<LabeledFlash> = cohort.iter().flat_map(|s| s.flashes.clone()).collect();
        let models = cohort_score_models(
            &rows,
            3,
            true,
            true,
            &SwldaConfig::default(),
            ScoreMode::Pooled,
        )
        .unwrap();
        assert_eq!(models.len(), 3);
        for m in &models {
            assert!(m.wscv.gaussian.dprime() > 0.5);
            assert!(m.ascv.is_some());
        }
    }
}
