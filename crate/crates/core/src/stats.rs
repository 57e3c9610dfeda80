//! Normality and rank tests for comparing per-subject ITR series.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ShapiroWilk,
    /// One-sample Kolmogorov-Smirnov against a normal with fitted mean and sd.
    KsFittedNormal,
    KruskalWallis,
    WilcoxonSignedRank,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub method: Method,
    pub statistic: f64,
    pub p_value: f64,
    pub n: Vec<usize>,
    /// The p-value comes from an exact null distribution.
    pub exact: bool,
    /// Paired differences equal to zero, dropped before ranking.
    pub zeros_dropped: usize,
    /// No usable information: every difference was zero.
    pub degenerate: bool,
}

impl TestReport {
    fn new(method: Method, statistic: f64, p_value: f64, n: Vec<usize>) -> Self {
        TestReport {
            method,
            statistic,
            p_value: p_value.clamp(0.0, 1.0),
            n,
            exact: false,
            zeros_dropped: 0,
            degenerate: false,
        }
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

fn check_finite(x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument("non-finite observation".into()))
    }
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub fn sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// Shapiro-Wilk W with Royston's polynomial approximations for the
/// coefficients and the p-value (valid for 3 <= n <= 5000).
pub fn shapiro_wilk(x: &[f64]) -> Result<TestReport> {
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData("Shapiro-Wilk needs n >= 3".into()));
    }
    if n > 5000 {
        return Err(Error::InvalidArgument(
            "Shapiro-Wilk approximation is limited to n <= 5000".into(),
        ));
    }
    check_finite(x)?;
    let mut xs = x.to_vec();
    xs.sort_by(f64::total_cmp);
    let range = xs[n - 1] - xs[0];
    if range <= 0.0 {
        return Err(Error::Degenerate("constant sample".into()));
    }

    let norm = std_normal();
    let nf = n as f64;
    let m: Vec<f64> = (1..=n)
        .map(|i| norm.inverse_cdf((i as f64 - 0.375) / (nf + 0.25)))
        .collect();
    let mut a = vec![0.0; n];
    if n == 3 {
        a[2] = std::f64::consts::FRAC_1_SQRT_2;
        a[0] = -a[2];
    } else {
        let summ2: f64 = m.iter().map(|v| v * v).sum();
        let ssumm2 = summ2.sqrt();
        let u = 1.0 / nf.sqrt();
        let an = m[n - 1] / ssumm2
            + poly(
                &[0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056],
                u,
            );
        let (interior, phi) = if n > 5 {
            let an1 = m[n - 2] / ssumm2
                + poly(
                    &[0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633],
                    u,
                );
            a[n - 2] = an1;
            a[1] = -an1;
            let phi = (summ2 - 2.0 * m[n - 1].powi(2) - 2.0 * m[n - 2].powi(2))
                / (1.0 - 2.0 * an.powi(2) - 2.0 * an1.powi(2));
            (2..n - 2, phi)
        } else {
            let phi = (summ2 - 2.0 * m[n - 1].powi(2)) / (1.0 - 2.0 * an.powi(2));
            (1..n - 1, phi)
        };
        a[n - 1] = an;
        a[0] = -an;
        for i in interior {
            a[i] = m[i] / phi.sqrt();
        }
    }

    let mean_x = mean(&xs);
    let ssq: f64 = xs.iter().map(|v| (v - mean_x).powi(2)).sum();
    let num: f64 = a.iter().zip(&xs).map(|(ai, xi)| ai * xi).sum();
    let w = (num * num / ssq).min(1.0);

    let p = if n == 3 {
        (6.0 / std::f64::consts::PI) * (w.sqrt().asin() - (0.75f64).sqrt().asin())
    } else {
        let y = (1.0 - w).ln();
        let (z, mu, sigma) = if n <= 11 {
            let gamma = poly(&[-2.273, 0.459], nf);
            if y >= gamma {
                return Ok(TestReport::new(Method::ShapiroWilk, w, 0.0, vec![n]));
            }
            (
                -(gamma - y).ln(),
                poly(&[0.5440, -0.39978, 0.025054, -6.714e-4], nf),
                poly(&[1.3822, -0.77857, 0.062767, -0.0020322], nf).exp(),
            )
        } else {
            let ln_n = nf.ln();
            (
                y,
                poly(&[-1.5861, -0.31082, -0.083751, 0.0038915], ln_n),
                poly(&[-0.4803, -0.082676, 0.0030302], ln_n).exp(),
            )
        };
        1.0 - norm.cdf((z - mu) / sigma)
    };
    Ok(TestReport::new(Method::ShapiroWilk, w, p, vec![n]))
}

/// Asymptotic Kolmogorov tail with Stephens' small-sample adjustment.
fn kolmogorov_sf(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS distance to the normal with the sample's mean and sd.
///
/// The asymptotic p-value ignores that the parameters were estimated, so it
/// is conservative relative to a Lilliefors correction.
pub fn ks_normality(x: &[f64]) -> Result<TestReport> {
    let n = x.len();
    if n < 5 {
        return Err(Error::InsufficientData("KS normality needs n >= 5".into()));
    }
    check_finite(x)?;
    let (m, s) = (mean(x), sd(x));
    if s <= 0.0 {
        return Err(Error::Degenerate("constant sample".into()));
    }
    let mut xs = x.to_vec();
    xs.sort_by(f64::total_cmp);
    let dist = Normal::new(m, s).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let nf = n as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = dist.cdf(v);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    Ok(TestReport::new(
        Method::KsFittedNormal,
        d,
        kolmogorov_sf(d, n),
        vec![n],
    ))
}

/// Average ranks (1-based) and the tie-group sizes.
fn rank_with_ties(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        if j > i {
            ties.push(j - i + 1);
        }
        i = j + 1;
    }
    (ranks, ties)
}

fn tie_term(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum()
}

fn kw_h(ranks: &[f64], sizes: &[usize], correction: f64) -> f64 {
    let total = ranks.len() as f64;
    let mut start = 0;
    let mut s = 0.0;
    for &ni in sizes {
        let r: f64 = ranks[start..start + ni].iter().sum();
        s += r * r / ni as f64;
        start += ni;
    }
    let h = 12.0 / (total * (total + 1.0)) * s - 3.0 * (total + 1.0);
    if correction > 0.0 {
        h / correction
    } else {
        0.0
    }
}

/// Largest pooled sample for which the permutation distribution is enumerated.
pub const KW_EXACT_MAX_N: usize = 8;

/// Kruskal-Wallis H with tie correction. The p-value is exact (all group
/// assignments enumerated) up to [`KW_EXACT_MAX_N`] observations and
/// chi-squared beyond.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<TestReport> {
    if groups.len() < 2 || groups.iter().any(Vec::is_empty) {
        return Err(Error::InsufficientData(
            "Kruskal-Wallis needs two or more nonempty groups".into(),
        ));
    }
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let total = pooled.len();
    if total < 5 {
        return Err(Error::InsufficientData(
            "Kruskal-Wallis needs n >= 5 in total".into(),
        ));
    }
    check_finite(&pooled)?;
    let (ranks, ties) = rank_with_ties(&pooled);
    let nf = total as f64;
    let correction = 1.0 - tie_term(&ties) / (nf.powi(3) - nf);
    let h = kw_h(&ranks, &sizes, correction);
    if correction <= 0.0 {
        return Ok(TestReport::new(Method::KruskalWallis, 0.0, 1.0, sizes));
    }
    if total <= KW_EXACT_MAX_N {
        let mut assignment = vec![0.0; total];
        let mut remaining = sizes.clone();
        let (mut hits, mut count) = (0u64, 0u64);
        enumerate_assignments(
            &ranks,
            0,
            &mut remaining,
            &mut assignment,
            &sizes,
            &mut |perm| {
                count += 1;
                if kw_h(perm, &sizes, correction) >= h - 1e-9 {
                    hits += 1;
                }
            },
        );
        let mut report =
            TestReport::new(Method::KruskalWallis, h, hits as f64 / count as f64, sizes);
        report.exact = true;
        return Ok(report);
    }
    let chi = ChiSquared::new((groups.len() - 1) as f64).expect("positive df");
    Ok(TestReport::new(
        Method::KruskalWallis,
        h,
        chi.sf(h.max(0.0)),
        sizes,
    ))
}

/// Visits every assignment of pooled ranks to groups of the given sizes,
/// calling `visit` with the ranks laid out group by group.
fn enumerate_assignments(
    ranks: &[f64],
    next: usize,
    remaining: &mut [usize],
    slots: &mut [f64],
    sizes: &[usize],
    visit: &mut dyn FnMut(&[f64]),
) {
    if next == ranks.len() {
        visit(slots);
        return;
    }
    let mut offset = 0;
    for g in 0..sizes.len() {
        if remaining[g] > 0 {
            let pos = offset + sizes[g] - remaining[g];
            slots[pos] = ranks[next];
            remaining[g] -= 1;
            enumerate_assignments(ranks, next + 1, remaining, slots, sizes, visit);
            remaining[g] += 1;
        }
        offset += sizes[g];
    }
}

/// Largest number of nonzero differences with an exact null distribution.
pub const WILCOXON_EXACT_MAX_N: usize = 25;

/// Two-sided Wilcoxon signed-rank test of paired samples.
///
/// Zero differences are dropped. The statistic is `min(W+, W-)`. With at
/// most [`WILCOXON_EXACT_MAX_N`] nonzero differences the p-value comes
/// from the exact distribution of the observed (possibly tied) ranks;
/// otherwise from the tie-corrected normal approximation with continuity
/// correction.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<TestReport> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    check_finite(a)?;
    check_finite(b)?;
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let zeros = a.len() - diffs.len();
    let n = diffs.len();
    if n == 0 && !a.is_empty() {
        let mut r = TestReport::new(Method::WilcoxonSignedRank, 0.0, 1.0, vec![0]);
        r.zeros_dropped = zeros;
        r.degenerate = true;
        return Ok(r);
    }
    if n < 5 {
        return Err(Error::InsufficientData(format!(
            "{n} nonzero differences, need 5"
        )));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = rank_with_ties(&abs);
    let w_plus = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, d)| **d > 0.0)
        .fold(0.0, |s, (r, _)| s + r);
    let nf = n as f64;
    let w_minus = nf * (nf + 1.0) / 2.0 - w_plus;
    let statistic = w_plus.min(w_minus);

    let (p, exact) = if n <= WILCOXON_EXACT_MAX_N {
        // Doubled ranks are integers even with averaged ties.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max_sum: usize = doubled.iter().sum();
        let mut counts = vec![0.0f64; max_sum + 1];
        counts[0] = 1.0;
        for &r in &doubled {
            for s in (r..=max_sum).rev() {
                counts[s] += counts[s - r];
            }
        }
        let total = 2f64.powi(n as i32);
        let observed = (2.0 * w_plus).round() as usize;
        let lower: f64 = counts[..=observed].iter().sum::<f64>() / total;
        let upper: f64 = counts[observed..].iter().sum::<f64>() / total;
        ((2.0 * lower.min(upper)).min(1.0), true)
    } else {
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term(&ties) / 48.0;
        let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
        (2.0 * (1.0 - std_normal().cdf(z)), false)
    };
    let mut r = TestReport::new(Method::WilcoxonSignedRank, statistic, p, vec![n]);
    r.exact = exact;
    r.zeros_dropped = zeros;
    Ok(r)
}

/// Distribution summary for violin plots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolinSummary {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    pub sd: f64,
    pub bin_edges: Vec<f64>,
    /// Histogram densities; they integrate to one over the bins.
    pub densities: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Quartiles plus a Freedman-Diaconis histogram.
pub fn violin_summary(x: &[f64]) -> Result<ViolinSummary> {
    if x.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    check_finite(x)?;
    let mut xs = x.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let (min, max) = (xs[0], xs[n - 1]);
    let (q1, q3) = (quantile(&xs, 0.25), quantile(&xs, 0.75));
    let width = 2.0 * (q3 - q1) / (n as f64).cbrt();
    let bins = if width > 0.0 && max > min {
        (((max - min) / width).ceil() as usize).clamp(1, 1000)
    } else {
        1
    };
    let step = if max > min {
        (max - min) / bins as f64
    } else {
        1.0
    };
    let bin_edges: Vec<f64> = (0..=bins).map(|i| min + step * i as f64).collect();
    let mut counts = vec![0usize; bins];
    for &v in &xs {
        let k = (((v - min) / step) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let densities = counts
        .iter()
        .map(|&c| c as f64 / (n as f64 * step))
        .collect();
    Ok(ViolinSummary {
        n,
        min,
        q1,
        median: quantile(&xs, 0.5),
        q3,
        max,
        mean: mean(&xs),
        sd: sd(&xs),
        bin_edges,
        densities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const X10: [f64; 10] = [2.1, 3.4, 1.9, 5.6, 4.4, 3.3, 2.8, 4.9, 3.9, 2.5];

    #[test]
    fn shapiro_wilk_matches_reference_values() {
        // Reference statistics from an independent implementation of the same algorithm.
        let x30: Vec<f64> = (0..30)
            .map(|i| ((i * 37) % 29) as f64 / 7.0 + ((i % 5) * (i % 5)) as f64 * 0.3)
            .collect();
        let cases: [(&[f64], f64, f64); 5] = [
            (&[1.0, 2.0, 4.0], 0.9642857142857142, 0.6368868450289689),
            (
                &[1.0, 2.5, 2.7, 6.0],
                0.9030792064275021,
                0.44651446191631294,
            ),
            (
                &[0.3, 1.1, 1.2, 1.9, 7.5],
                0.7332949549518779,
                0.02069061454692766,
            ),
            (&X10, 0.9621940956974225, 0.8105732036095943),
            (&x30, 0.9791097390297322, 0.8014162629470605),
        ];
        for (x, w, p) in cases {
            let r = shapiro_wilk(x).unwrap();
            assert!(
                (r.statistic - w).abs() < 1e-6,
                "n={} W={} want {w}",
                x.len(),
                r.statistic
            );
            assert!(
                (r.p_value - p).abs() < 1e-5,
                "n={} p={} want {p}",
                x.len(),
                r.p_value
            );
        }
    }

    #[test]
    fn degenerate_samples_are_rejected() {
        assert!(matches!(
            shapiro_wilk(&[2.0; 10]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            ks_normality(&[2.0; 10]),
            Err(Error::Degenerate(_))
        ));
        assert!(shapiro_wilk(&[1.0, 2.0]).is_err());
        assert!(ks_normality(&[1.0, 2.0, 3.0, 4.0]).is_err());
    }

    #[test]
    fn ks_distance_matches_reference() {
        let r = ks_normality(&X10).unwrap();
        assert!((r.statistic - 0.12614102413406086).abs() < 1e-12);
        assert!(r.p_value > 0.5);
    }

    #[test]
    fn kruskal_wallis_asymptotic_reference() {
        let big: Vec<Vec<f64>> = vec![
            vec![2.9, 3.0, 2.5, 2.6, 3.2],
            vec![3.8, 2.7, 4.0, 2.4],
            vec![2.8, 3.4, 3.7, 2.2, 2.0],
        ];
        let r = kruskal_wallis(&big).unwrap();
        assert!(!r.exact);
        assert!((r.statistic - 0.7714285714285722).abs() < 1e-12);
        assert!((r.p_value - 0.6799647735788936).abs() < 1e-12);
        let tied: Vec<Vec<f64>> = vec![
            vec![1., 2., 2., 3.],
            vec![2., 3., 3., 4., 4.],
            vec![1., 1., 5.],
        ];
        let r = kruskal_wallis(&tied).unwrap();
        assert!((r.statistic - 2.508913308913311).abs() < 1e-12);
        assert!((r.p_value - 0.28523078500439425).abs() < 1e-12);
    }

    #[test]
    fn identical_groups_give_no_evidence() {
        let g = vec![vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 3.0, 4.0]];
        let r = kruskal_wallis(&g).unwrap();
        assert!(r.statistic.abs() < 1e-12);
        assert!(r.p_value > 0.99);
        let all_tied = vec![vec![1.0; 3], vec![1.0; 3]];
        assert_eq!(kruskal_wallis(&all_tied).unwrap().p_value, 1.0);
    }

    #[test]
    fn wilcoxon_large_sample_reference() {
        let a = [
            0.13, -0.13, 0.64, 0.1, -0.54, 0.36, 1.3, 0.95, -0.7, -1.27, -0.62, 0.04, -2.33, -0.22,
            -1.25, -0.73, -0.54, -0.32, 0.41, 1.04, -0.13, 1.37, -0.67, 0.35, 0.9, 0.09, -0.74,
            -0.92, -0.46, 0.22, -1.01, -0.21, -0.16, 0.54, 0.21, 0.36, -0.65, -0.13, 0.78, 1.49,
        ];
        let b = [
            -0.86, 1.91, 1.75, 1.18, 0.66, 0.09, 1.86, 2.36, 2.2, 1.72, 0.76, -0.81, 0.4, 1.06,
            -0.89, 0.8, 0.83, 1.1, -0.78, -0.26, -0.04, -0.77, 2.14, -0.1, 0.73, 0.14, 1.98, 1.72,
            1.03, -1.8, 0.45, 1.08, 1.4, -0.22, 2.22, -0.92, -0.26, 1.34, 0.45, 2.4,
        ];
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!(!r.exact);
        assert_eq!(r.statistic, 175.5);
        assert!(
            (r.p_value - 0.0016591711352586503).abs() < 1e-9,
            "{}",
            r.p_value
        );
    }

    #[test]
    fn wilcoxon_degenerate_cases() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let r = wilcoxon_signed_rank(&a, &a).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(r.degenerate);
        assert_eq!(r.zeros_dropped, 6);
        let b = [1.0, 2.0, 3.0, 4.5, 5.5, 6.5];
        assert!(matches!(
            wilcoxon_signed_rank(&a, &b),
            Err(Error::InsufficientData(_))
        ));
        assert!(wilcoxon_signed_rank(&a, &b[..5]).is_err());
    }

    #[test]
    fn one_sided_differences_give_a_positive_zero_statistic() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 4.0, 6.0, 8.0, 10.0];
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!(r.statistic == 0.0 && r.statistic.is_sign_positive());
        assert!((r.p_value - 0.0625).abs() < 1e-12);
    }

    #[test]
    fn violin_summary_quartiles_and_density() {
        let v = violin_summary(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]).unwrap();
        assert_eq!(
            (v.min, v.q1, v.median, v.q3, v.max),
            (1.0, 3.0, 5.0, 7.0, 9.0)
        );
        let area: f64 = v
            .densities
            .iter()
            .zip(v.bin_edges.windows(2))
            .map(|(d, e)| d * (e[1] - e[0]))
            .sum();
        assert!((area - 1.0).abs() < 1e-12);
        let flat = violin_summary(&[2.0, 2.0]).unwrap();
        assert_eq!(flat.densities.len(), 1);
    }
}
