//! The subcommands.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use speller_core::eegsim::gen_synthetic_cohort;
use speller_core::harness::{
    cohort_score_models, prepare_target, read_rows, run_cells, summarize_rows, table_rows,
    ComparisonReport, ComparisonRow, SchemeSpec, Simulator, SubjectModels, TrainingMode,
};
use speller_core::lm::{build_models, ModelStack};
use speller_core::predictor::{CorpusPredictor, HttpPredictor, WordPredictor};
use speller_core::swlda::{read_features, write_features, LabeledFlash};

use crate::config::RunConfig;
use crate::manifest::{sorted_files, Inputs, OutputDir, RunManifest, Seeds, MANIFEST_FILE};
use crate::CliError;

const RESULTS_FILE: &str = "results.csv";

fn seeds(cfg: &RunConfig) -> Seeds {
    Seeds {
        master: cfg.seed,
        cohort: Some(cfg.cohort.seed),
        sim: Some(cfg.sim.seed),
    }
}

/// Corpus text from files and directories, one source per line.
fn read_corpus(paths: &[PathBuf], inputs: &mut Inputs) -> Result<String, CliError> {
    if paths.is_empty() {
        return Err(CliError::Validation(
            "no corpus given (lm.corpus or --corpus)".into(),
        ));
    }
    let mut parts = Vec::new();
    for path in paths {
        if path.is_dir() {
            let files = sorted_files(path, "corpus", Some("txt"))?;
            if files.is_empty() {
                return Err(CliError::Validation(format!(
                    "corpus directory has no .txt files: {}",
                    path.display()
                )));
            }
            for f in files {
                parts.push(inputs.read_text(&f, "corpus")?);
            }
        } else {
            parts.push(inputs.read_text(path, "corpus")?);
        }
    }
    Ok(parts.join("\n"))
}

fn load_models(
    cfg: &RunConfig,
    inputs: &mut Inputs,
) -> Result<(ModelStack, Option<String>), CliError> {
    if let Some(dir) = &cfg.lm.models {
        inputs.hash_dir(dir, "model directory")?;
        let stack = ModelStack::load(dir, cfg.lm.smoothing)?;
        let corpus = if cfg.lm.corpus.is_empty() {
            None
        } else {
            Some(read_corpus(&cfg.lm.corpus, inputs)?)
        };
        return Ok((stack, corpus));
    }
    let corpus = read_corpus(&cfg.lm.corpus, inputs)?;
    Ok((build_models(&corpus, cfg.lm.smoothing)?, Some(corpus)))
}

fn load_flashes(cfg: &RunConfig, inputs: &mut Inputs) -> Result<Vec<LabeledFlash>, CliError> {
    match &cfg.training.features {
        Some(path) => {
            inputs.read(path, "feature file")?;
            Ok(read_features(path)?)
        }
        None => Ok(gen_synthetic_cohort(&cfg.cohort)?
            .into_iter()
            .flat_map(|s| s.flashes)
            .collect()),
    }
}

fn predictor(
    cfg: &RunConfig,
    corpus: Option<&str>,
    raw_target: &str,
    inputs: &mut Inputs,
) -> Result<Box<dyn WordPredictor>, CliError> {
    if let Some(url) = &cfg.predictor.url {
        log::info!("word predictor at {url}");
        return Ok(Box::new(HttpPredictor::new(
            url,
            Duration::from_millis(cfg.predictor.timeout_ms),
        )));
    }
    let text = if cfg.predictor.mock_corpus.is_empty() {
        format!("{}\n{raw_target}", corpus.unwrap_or(""))
    } else {
        read_corpus(&cfg.predictor.mock_corpus, inputs)?
    };
    log::info!("no predictor URL, using the corpus mock");
    Ok(Box::new(CorpusPredictor::from_text(&text)?))
}

pub fn build_lm(cfg: RunConfig, out: &Path) -> Result<RunManifest, CliError> {
    let mut inputs = Inputs::default();
    let corpus = read_corpus(&cfg.lm.corpus, &mut inputs)?;
    let stack = build_models(&corpus, cfg.lm.smoothing)?;
    let manifest = RunManifest::new("build-lm", Some(cfg), Seeds::default(), inputs.hashes);
    let mut dir = OutputDir::create(out, manifest)?;
    stack.save(dir.path())?;
    for file in sorted_files(dir.path(), "model directory", None)? {
        let name = file
            .file_name()
            .expect("file name")
            .to_string_lossy()
            .into_owned();
        if name != MANIFEST_FILE {
            dir.adopt(&name)?;
        }
    }
    dir.finish()
}

#[derive(Serialize)]
struct SubjectRow {
    subject: u32,
    dprime: f64,
    cluster: usize,
}

pub fn gen_cohort(cfg: RunConfig, out: &Path) -> Result<RunManifest, CliError> {
    let cohort = gen_synthetic_cohort(&cfg.cohort)?;
    let seeds = seeds(&cfg);
    let manifest = RunManifest::new("gen-cohort", Some(cfg), seeds, Default::default());
    let mut dir = OutputDir::create(out, manifest)?;
    let rows: Vec<LabeledFlash> = cohort
        .iter()
        .flat_map(|s| s.flashes.iter().cloned())
        .collect();
    let tmp = dir.path().join("features.csv.tmp");
    write_features(&tmp, &rows)?;
    let csv = std::fs::read(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::remove_file(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    dir.write_csv_text("features.csv", &csv)?;
    let subjects: Vec<SubjectRow> = cohort
        .iter()
        .map(|s| SubjectRow {
            subject: s.id,
            dprime: s.dprime,
            cluster: s.cluster,
        })
        .collect();
    dir.write_csv("subjects.csv", &subjects)?;
    dir.finish()
}

/// Models, cohort and target loaded and every cell simulated.
struct Simulated {
    rows: Vec<ComparisonRow>,
    manifest: RunManifest,
}

fn simulate_cells(
    cfg: RunConfig,
    command: &str,
    min_schemes: usize,
) -> Result<Simulated, CliError> {
    if cfg.schemes.len() < min_schemes {
        return Err(CliError::Validation(format!(
            "{command} needs at least {min_schemes} scheme(s) (schemes or --schemes)"
        )));
    }
    cfg.sim.validate()?;
    let mut inputs = Inputs::default();
    let target_path = cfg.target.path.clone().ok_or_else(|| {
        CliError::Validation("no target text given (target.path or --target)".into())
    })?;
    let (stack, corpus) = load_models(&cfg, &mut inputs)?;
    let raw_target = inputs.read_text(&target_path, "target text")?;
    let target = prepare_target(&raw_target, cfg.target.budget)?;
    let flashes = load_flashes(&cfg, &mut inputs)?;
    let client = predictor(&cfg, corpus.as_deref(), &raw_target, &mut inputs)?;

    let t = &cfg.training;
    log::info!("training classifiers for {} flashes", flashes.len());
    let models: Vec<SubjectModels> =
        cohort_score_models(&flashes, t.folds, t.ascv, t.zscore, &t.swlda, t.score_mode)?;
    let sim = Simulator::new(&stack, Some(client.as_ref()), cfg.sim.clone())?;
    let workers = cfg.worker_count();
    log::info!(
        "{} subjects x {} schemes, {} target chars, {workers} workers",
        models.len(),
        cfg.schemes.len(),
        target.len()
    );
    let rows = run_cells(&sim, &cfg.schemes, &models, &target, workers)?;
    let seeds = seeds(&cfg);
    let manifest = RunManifest::new(command, Some(cfg), seeds, inputs.hashes);
    Ok(Simulated { rows, manifest })
}

pub fn simulate(cfg: RunConfig, out: &Path) -> Result<RunManifest, CliError> {
    let Simulated { rows, manifest } = simulate_cells(cfg, "simulate", 1)?;
    let mut dir = OutputDir::create(out, manifest)?;
    dir.write_csv(RESULTS_FILE, &rows)?;
    dir.finish()
}

pub fn compare(cfg: RunConfig, out: &Path) -> Result<(RunManifest, ComparisonReport), CliError> {
    let specs = cfg.schemes.clone();
    let Simulated { rows, manifest } = simulate_cells(cfg, "compare", 2)?;
    let mut dir = OutputDir::create(out, manifest)?;
    dir.write_csv(RESULTS_FILE, &rows)?;
    let report = summarize_rows(rows, &specs)?;
    write_report(&mut dir, &report)?;
    Ok((dir.finish()?, report))
}

pub fn report(results: &Path, out: &Path) -> Result<(RunManifest, ComparisonReport), CliError> {
    let mut inputs = Inputs::default();
    let file = results.join(RESULTS_FILE);
    inputs.read(&file, "results file")?;
    let rows: Vec<ComparisonRow> = read_rows(&file)?;
    let mut specs: Vec<SchemeSpec> = Vec::new();
    for r in &rows {
        if !specs.contains(&r.scheme) {
            specs.push(r.scheme);
        }
    }
    if specs.is_empty() {
        return Err(CliError::Validation(format!(
            "no result rows in {}",
            file.display()
        )));
    }
    let manifest = RunManifest::new("report", None, Seeds::default(), inputs.hashes);
    let report = summarize_rows(rows, &specs)?;
    let mut dir = OutputDir::create(out, manifest)?;
    write_report(&mut dir, &report)?;
    Ok((dir.finish()?, report))
}

#[derive(Serialize)]
struct ViolinStatsRow {
    scheme: SchemeSpec,
    training: TrainingMode,
    n: usize,
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
    mean: f64,
    sd: f64,
    shapiro_wilk_p: Option<f64>,
    ks_p: Option<f64>,
}

#[derive(Serialize)]
struct ViolinBinRow {
    scheme: SchemeSpec,
    training: TrainingMode,
    bin_lo: f64,
    bin_hi: f64,
    density: f64,
}

#[derive(Serialize)]
struct PairwiseRow {
    training: TrainingMode,
    a: SchemeSpec,
    b: SchemeSpec,
    w: Option<f64>,
    p_value: Option<f64>,
    exact: Option<bool>,
    zeros_dropped: Option<usize>,
    note: String,
}

/// Table, violin data, pairwise tests and the full report.
fn write_report(dir: &mut OutputDir, report: &ComparisonReport) -> Result<(), CliError> {
    dir.write_csv("table.csv", &table_rows(report))?;
    let stats: Vec<ViolinStatsRow> = report
        .summaries
        .iter()
        .map(|s| ViolinStatsRow {
            scheme: s.scheme,
            training: s.training,
            n: s.violin.n,
            min: s.violin.min,
            q1: s.violin.q1,
            median: s.violin.median,
            q3: s.violin.q3,
            max: s.violin.max,
            mean: s.violin.mean,
            sd: s.violin.sd,
            shapiro_wilk_p: s.shapiro_wilk.as_ref().map(|t| t.p_value),
            ks_p: s.ks.as_ref().map(|t| t.p_value),
        })
        .collect();
    dir.write_csv("violin_stats.csv", &stats)?;
    let bins: Vec<ViolinBinRow> = report
        .summaries
        .iter()
        .flat_map(|s| {
            s.violin
                .densities
                .iter()
                .enumerate()
                .map(move |(i, &density)| ViolinBinRow {
                    scheme: s.scheme,
                    training: s.training,
                    bin_lo: s.violin.bin_edges[i],
                    bin_hi: s.violin.bin_edges[i + 1],
                    density,
                })
        })
        .collect();
    dir.write_csv("violin_bins.csv", &bins)?;
    let pairs: Vec<PairwiseRow> = report
        .pairwise
        .iter()
        .map(|p| PairwiseRow {
            training: p.training,
            a: p.a,
            b: p.b,
            w: p.wilcoxon.as_ref().map(|t| t.statistic),
            p_value: p.wilcoxon.as_ref().map(|t| t.p_value),
            exact: p.wilcoxon.as_ref().map(|t| t.exact),
            zeros_dropped: p.wilcoxon.as_ref().map(|t| t.zeros_dropped),
            note: p.note.clone().unwrap_or_default(),
        })
        .collect();
    dir.write_csv("pairwise.csv", &pairs)?;
    dir.write_json("report.json", report)
}
