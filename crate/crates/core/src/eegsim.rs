//! Classifier-score sources for simulated flashes.
//!
//! Scores are either resampled from a subject's held-out classifier outputs
//! (one pool per (previous, current) attended state) or drawn from Gaussians
//! fitted to them. The state sequence is the ground truth of the flash
//! schedule; only the pool choice depends on it.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::swlda::{Label, LabeledFlash, ScoredFlash};

/// Smallest standard deviation a fitted model may carry.
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Pooled,
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mu_a: f64,
    pub sigma_a: f64,
    pub mu_n: f64,
    pub sigma_n: f64,
}

impl GaussianParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.mu_a, self.sigma_a, self.mu_n, self.sigma_n]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.sigma_a <= 0.0 || self.sigma_n <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "invalid score model {self:?}"
            )));
        }
        Ok(())
    }

    pub fn mean(&self, label: Label) -> f64 {
        if label.is_attended() {
            self.mu_a
        } else {
            self.mu_n
        }
    }

    pub fn sd(&self, label: Label) -> f64 {
        if label.is_attended() {
            self.sigma_a
        } else {
            self.sigma_n
        }
    }

    /// Separation of the class means in pooled standard deviations.
    pub fn dprime(&self) -> f64 {
        (self.mu_a - self.mu_n) / ((self.sigma_a.powi(2) + self.sigma_n.powi(2)) / 2.0).sqrt()
    }
}

fn pool_index(prev: Label, cur: Label) -> usize {
    2 * usize::from(prev.is_attended()) + usize::from(cur.is_attended())
}

fn marginal_index(cur: Label) -> usize {
    usize::from(cur.is_attended())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectScoreModel {
    pub mode: ScoreMode,
    pub gaussian: GaussianParams,
    /// Indexed by `2 * prev_attended + cur_attended`.
    pub pools: [Vec<f64>; 4],
    /// Indexed by `cur_attended`.
    pub marginal: [Vec<f64>; 2],
}

impl SubjectScoreModel {
    pub fn gaussian(params: GaussianParams) -> Result<Self> {
        params.validate()?;
        Ok(SubjectScoreModel {
            mode: ScoreMode::Gaussian,
            gaussian: params,
            pools: Default::default(),
            marginal: Default::default(),
        })
    }

    pub fn pool(&self, prev: Label, cur: Label) -> &[f64] {
        &self.pools[pool_index(prev, cur)]
    }

    pub fn with_mode(mut self, mode: ScoreMode) -> Result<Self> {
        if mode == ScoreMode::Pooled && self.marginal.iter().any(Vec::is_empty) {
            return Err(Error::InsufficientData(
                "pooled mode needs recorded scores".into(),
            ));
        }
        self.mode = mode;
        Ok(self)
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt().max(SIGMA_FLOOR))
}

/// Fits both the Gaussian and the pooled description of a subject's scores.
///
/// `scores` must be in presentation order; the (previous, current) pools
/// then hold every flash after the first.
pub fn fit_score_model(scores: &[ScoredFlash], mode: ScoreMode) -> Result<SubjectScoreModel> {
    let collect = |attended: bool| -> Vec<f64> {
        scores
            .iter()
            .filter(|s| s.label.is_attended() == attended)
            .map(|s| s.score)
            .collect()
    };
    let (a, n) = (collect(true), collect(false));
    if a.is_empty() || n.is_empty() {
        return Err(Error::InsufficientData(
            "score model needs both labels".into(),
        ));
    }
    if scores.iter().any(|s| !s.score.is_finite()) {
        return Err(Error::InvalidArgument("non-finite classifier score".into()));
    }
    let (mu_a, sigma_a) = mean_sd(&a);
    let (mu_n, sigma_n) = mean_sd(&n);
    let mut pools: [Vec<f64>; 4] = Default::default();
    for w in scores.windows(2) {
        pools[pool_index(w[0].label, w[1].label)].push(w[1].score);
    }
    Ok(SubjectScoreModel {
        mode,
        gaussian: GaussianParams {
            mu_a,
            sigma_a,
            mu_n,
            sigma_n,
        },
        pools,
        marginal: [n, a],
    })
}

/// Per-simulation sampler; owns its random state.
#[derive(Clone, Debug)]
pub struct ScoreSampler<'m> {
    model: &'m SubjectScoreModel,
    prev: Option<Label>,
    rng: ChaCha8Rng,
}

impl<'m> ScoreSampler<'m> {
    pub fn new(model: &'m SubjectScoreModel, seed: u64) -> Self {
        ScoreSampler {
            model,
            prev: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn prev_state(&self) -> Option<Label> {
        self.prev
    }

    pub fn draw(&mut self, cur: Label) -> f64 {
        let y = match self.model.mode {
            ScoreMode::Gaussian => {
                let g = &self.model.gaussian;
                g.mean(cur) + g.sd(cur) * self.rng.sample::<f64, _>(StandardNormal)
            }
            ScoreMode::Pooled => {
                let pool = match self.prev {
                    Some(prev) if !self.model.pool(prev, cur).is_empty() => {
                        self.model.pool(prev, cur)
                    }
                    Some(prev) => {
                        log::debug!("empty ({prev:?}, {cur:?}) pool, using marginal");
                        &self.model.marginal[marginal_index(cur)]
                    }
                    None => &self.model.marginal[marginal_index(cur)],
                };
                *pool
                    .choose(&mut self.rng)
                    .expect("pools validated nonempty")
            }
        };
        self.prev = Some(cur);
        y
    }
}

/// How subject separabilities are assigned.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum DPrime {
    Fixed { value: f64 },
    Normal { mean: f64, sd: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub n_subjects: usize,
    pub dprime: DPrime,
    pub n_features: usize,
    pub sequences_per_char: usize,
    pub chars: usize,
    /// Relative sizes of the template clusters subjects are drawn from.
    pub clusters: Vec<f64>,
    /// Spread of each subject's template around its cluster centroid.
    pub template_spread: f64,
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n_subjects: 78,
            dprime: DPrime::Normal { mean: 1.5, sd: 0.3 },
            n_features: 32,
            sequences_per_char: 10,
            chars: 20,
            clusters: vec![1.0],
            template_spread: 0.5,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSubject {
    pub id: u32,
    pub dprime: f64,
    pub cluster: usize,
    /// Unit-norm response direction.
    pub template: Vec<f64>,
    pub flashes: Vec<LabeledFlash>,
}

/// Flashes per row/column sequence and the attended groups among them.
pub const GROUPS_PER_SEQUENCE: usize = 12;

fn unit(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.into_iter().map(|x| x / norm).collect()
    } else {
        v
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Synthetic calibration data. Attended flashes are `d' * template + noise`,
/// non-attended flashes are noise, with unit white noise in every feature,
/// so the template itself separates the classes by `d'`.
pub fn gen_synthetic_cohort(cfg: &CohortConfig) -> Result<Vec<SyntheticSubject>> {
    if cfg.n_features == 0 || cfg.chars == 0 || cfg.sequences_per_char == 0 {
        return Err(Error::InvalidArgument(
            "cohort dimensions must be positive".into(),
        ));
    }
    if cfg.clusters.is_empty() || cfg.clusters.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument(
            "cluster weights must be nonnegative".into(),
        ));
    }
    let dprime_dist = match cfg.dprime {
        DPrime::Fixed { value } if value >= 0.0 => None,
        DPrime::Normal { mean, sd } if mean >= 0.0 && sd >= 0.0 => {
            Some(Normal::new(mean, sd).map_err(|e| Error::InvalidArgument(e.to_string()))?)
        }
        _ => return Err(Error::InvalidArgument("d' must be nonnegative".into())),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centroids: Vec<Vec<f64>> = cfg
        .clusters
        .iter()
        .map(|_| unit(gaussian_vec(&mut rng, cfg.n_features)))
        .collect();
    let cluster_of = cluster_assignment(&cfg.clusters, cfg.n_subjects);

    let mut out = Vec::with_capacity(cfg.n_subjects);
    for (s, &cluster) in cluster_of.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::derive(cfg.seed, &[s as u64, 0x5eed]));
        let dprime = match (cfg.dprime, &dprime_dist) {
            (DPrime::Fixed { value }, _) => value,
            (_, Some(d)) => d.sample(&mut rng).max(0.0),
            _ => unreachable!(),
        };
        let noise = gaussian_vec(&mut rng, cfg.n_features);
        let template = unit(
            centroids[cluster]
                .iter()
                .zip(&noise)
                .map(|(c, e)| c + cfg.template_spread * e / (cfg.n_features as f64).sqrt())
                .collect(),
        );
        let mut flashes =
            Vec::with_capacity(cfg.chars * cfg.sequences_per_char * GROUPS_PER_SEQUENCE);
        for c in 0..cfg.chars {
            let row = rng.gen_range(0..6);
            let col = 6 + rng.gen_range(0..6);
            let mut f = 0u32;
            for _ in 0..cfg.sequences_per_char {
                let mut order: Vec<usize> = (0..GROUPS_PER_SEQUENCE).collect();
                order.shuffle(&mut rng);
                for g in order {
                    let label = if g == row || g == col {
                        Label::Attended
                    } else {
                        Label::NonAttended
                    };
                    let mut values = gaussian_vec(&mut rng, cfg.n_features);
                    if label.is_attended() {
                        for (v, t) in values.iter_mut().zip(&template) {
                            *v += dprime * t;
                        }
                    }
                    flashes.push(LabeledFlash {
                        subject: s as u32,
                        char_index: c as u32,
                        flash_index: f,
                        label,
                        values,
                    });
                    f += 1;
                }
            }
        }
        out.push(SyntheticSubject {
            id: s as u32,
            dprime,
            cluster,
            template,
            flashes,
        });
    }
    Ok(out)
}

/// Deterministic largest-remainder split of subjects into clusters.
fn cluster_assignment(weights: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return vec![0; n];
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let short = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    counts
        .iter()
        .enumerate()
        .flat_map(|(k, &c)| std::iter::repeat_n(k, c))
        .collect()
}

/// Score-pool CSV: `prev_state,cur_state,score` with states 0/1.
pub fn write_pools(path: &std::path::Path, model: &SubjectScoreModel) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["prev_state", "cur_state", "score"])?;
    for prev in [Label::NonAttended, Label::Attended] {
        for cur in [Label::NonAttended, Label::Attended] {
            for y in model.pool(prev, cur) {
                let bit = |l: Label| if l.is_attended() { "1" } else { "0" };
                w.write_record([bit(prev), bit(cur), &y.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scored(labels: &[Label], scores: &[f64]) -> Vec<ScoredFlash> {
        labels
            .iter()
            .zip(scores)
            .enumerate()
            .map(|(i, (&label, &score))| ScoredFlash {
                char_index: 0,
                flash_index: i as u32,
                label,
                score,
            })
            .collect()
    }

    const A: Label = Label::Attended;
    const N: Label = Label::NonAttended;

    #[test]
    fn constant_pools_fit_exact_means_and_floored_sigma() {
        let labels = [N, A, N, N, A, N];
        let s: Vec<f64> = labels
            .iter()
            .map(|l| if l.is_attended() { 1.0 } else { 0.0 })
            .collect();
        let m = fit_score_model(&scored(&labels, &s), ScoreMode::Gaussian).unwrap();
        assert_eq!(m.gaussian.mu_a, 1.0);
        assert_eq!(m.gaussian.mu_n, 0.0);
        assert_eq!(m.gaussian.sigma_a, SIGMA_FLOOR);
        let pooled: usize = m.pools.iter().map(Vec::len).sum();
        assert_eq!(pooled, labels.len() - 1);
    }

    #[test]
    fn large_sample_fit_recovers_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let labels: Vec<Label> = (0..10_000)
            .map(|i| if i % 2 == 0 { A } else { N })
            .collect();
        let s: Vec<f64> = labels
            .iter()
            .map(|l| if l.is_attended() { 1.0 } else { 0.0 } + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let m = fit_score_model(&scored(&labels, &s), ScoreMode::Gaussian).unwrap();
        assert!((m.gaussian.mu_a - 1.0).abs() < 0.05);
        assert!(m.gaussian.mu_n.abs() < 0.05);
    }

    #[test]
    fn pooled_draws_identify_the_transition() {
        let labels = [N, N, A, A, N];
        // prev,cur pairs: NN -> 1.0, NA -> 2.0, AA -> 3.0, AN -> 4.0
        let m = fit_score_model(
            &scored(&labels, &[0.0, 1.0, 2.0, 3.0, 4.0]),
            ScoreMode::Pooled,
        )
        .unwrap();
        let mut s = ScoreSampler::new(&m, 1);
        assert_eq!(s.prev_state(), None);
        let first = s.draw(A);
        assert!(
            first == 2.0 || first == 3.0,
            "first draw comes from the marginal attended pool"
        );
        assert_eq!(s.draw(A), 3.0);
        assert_eq!(s.draw(N), 4.0);
        assert_eq!(s.draw(N), 1.0);
        assert_eq!(s.draw(A), 2.0);
        assert_eq!(s.prev_state(), Some(A));
    }

    #[test]
    fn degenerate_gaussian_returns_the_mean() {
        let m = SubjectScoreModel::gaussian(GaussianParams {
            mu_a: 2.0,
            sigma_a: 1e-300,
            mu_n: -1.0,
            sigma_n: 1e-300,
        })
        .unwrap();
        let mut s = ScoreSampler::new(&m, 0);
        assert_eq!(s.draw(A), 2.0);
        assert_eq!(s.draw(N), -1.0);
        assert!(SubjectScoreModel::gaussian(GaussianParams {
            mu_a: 0.0,
            sigma_a: 0.0,
            mu_n: 0.0,
            sigma_n: 1.0
        })
        .is_err());
    }

    #[test]
    fn sampler_stream_is_seeded() {
        let m = SubjectScoreModel::gaussian(GaussianParams {
            mu_a: 1.0,
            sigma_a: 1.0,
            mu_n: 0.0,
            sigma_n: 1.0,
        })
        .unwrap();
        let run = |seed| {
            let mut s = ScoreSampler::new(&m, seed);
            (0..50)
                .map(|i| s.draw(if i % 6 == 0 { A } else { N }))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }

    #[test]
    fn cohort_is_reproducible_and_shaped() {
        let cfg = CohortConfig {
            n_subjects: 3,
            chars: 2,
            n_features: 5,
            ..Default::default()
        };
        let a = gen_synthetic_cohort(&cfg).unwrap();
        assert_eq!(a, gen_synthetic_cohort(&cfg).unwrap());
        for s in &a {
            assert_eq!(s.flashes.len(), 2 * 10 * 12);
            let attended = s.flashes.iter().filter(|f| f.label.is_attended()).count();
            assert_eq!(attended, 2 * 10 * 2);
            assert!((s.template.iter().map(|t| t * t).sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let other = gen_synthetic_cohort(&CohortConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(a[0].flashes, other[0].flashes);
    }

    #[test]
    fn clusters_split_by_weight() {
        assert_eq!(
            cluster_assignment(&[3.0, 1.0], 8),
            vec![0, 0, 0, 0, 0, 0, 1, 1]
        );
        assert_eq!(cluster_assignment(&[1.0, 1.0, 1.0], 4), vec![0, 0, 1, 2]);
    }
}
