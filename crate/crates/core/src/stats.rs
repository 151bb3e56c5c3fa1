//! Sample statistics used to decide equality of measures numerically:
//! two-sample and one-sample Kolmogorov–Smirnov statistics, moments with
//! their standard errors, and the [`DistributionDistanceReport`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::sample_space::std_normal_cdf;

/// Pairwise (cascade) summation; the reduction order depends only on the
/// length of the input.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Transposes draws (one `Vec` per draw) into coordinate columns.
pub fn columns(draws: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = draws.first().map_or(0, Vec::len);
    (0..dim)
        .map(|j| draws.iter().map(|d| d[j]).collect())
        .collect()
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`, exact in the
/// presence of ties.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let (a, b) = (sorted(a), sorted(b));
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// One-sample Kolmogorov–Smirnov statistic against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let xs = sorted(samples);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == x {
            j += 1;
        }
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max((j as f64 / n - f).abs());
        i = j;
    }
    d
}

/// KS statistic against `N(mean, sd²)`. A zero `sd` compares against the
/// point mass at `mean`.
pub fn ks_vs_normal(samples: &[f64], mu: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        let n = samples.len() as f64;
        let below = samples.iter().filter(|&&x| x < mu).count() as f64 / n;
        let above = samples.iter().filter(|&&x| x > mu).count() as f64 / n;
        return below.max(above);
    }
    ks_one_sample(samples, |x| std_normal_cdf((x - mu) / sd))
}

/// KS statistic against the normal distribution with the sample's own mean
/// and standard deviation.
pub fn ks_vs_fitted_normal(samples: &[f64]) -> f64 {
    ks_vs_normal(samples, mean(samples), std_dev(samples))
}

/// Sample mean vector and unbiased covariance of a set of draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: usize,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    /// Standard error of each mean coordinate.
    pub mean_se: Vec<f64>,
    /// Standard error of each covariance entry, from fourth moments.
    pub cov_se: Vec<Vec<f64>>,
}

impl Moments {
    pub fn from_columns(cols: &[Vec<f64>]) -> Self {
        let dim = cols.len();
        let count = cols.first().map_or(0, Vec::len);
        let nf = count as f64;
        let mean: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
        let centered: Vec<Vec<f64>> = cols
            .iter()
            .zip(&mean)
            .map(|(c, m)| c.iter().map(|x| x - m).collect())
            .collect();
        let mut cov = vec![vec![0.0; dim]; dim];
        let mut cov_se = vec![vec![0.0; dim]; dim];
        for i in 0..dim {
            for j in i..dim {
                let prod: Vec<f64> = centered[i]
                    .iter()
                    .zip(&centered[j])
                    .map(|(a, b)| a * b)
                    .collect();
                let c = if count > 1 {
                    pairwise_sum(&prod) / (nf - 1.0)
                } else {
                    0.0
                };
                let spread: Vec<f64> = prod.iter().map(|p| (p - c) * (p - c)).collect();
                let se = if count > 1 {
                    (pairwise_sum(&spread) / (nf - 1.0) / nf).sqrt()
                } else {
                    0.0
                };
                cov[i][j] = c;
                cov[j][i] = c;
                cov_se[i][j] = se;
                cov_se[j][i] = se;
            }
        }
        let mean_se = (0..dim).map(|i| (cov[i][i] / nf).sqrt()).collect();
        Self {
            count,
            mean,
            cov,
            mean_se,
            cov_se,
        }
    }

    pub fn from_draws(draws: &[Vec<f64>]) -> Self {
        Self::from_columns(&columns(draws))
    }

    pub fn std_dev(&self, i: usize) -> f64 {
        self.cov[i][i].sqrt()
    }

    /// Pearson correlation; zero when either coordinate is constant.
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        let denom = (self.cov[i][i] * self.cov[j][j]).sqrt();
        if denom == 0.0 {
            0.0
        } else {
            self.cov[i][j] / denom
        }
    }
}

fn z_score(diff: f64, se: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else if se == 0.0 {
        f64::INFINITY
    } else {
        diff.abs() / se
    }
}

/// Standardized discrepancies between sample moments and a reference
/// mean/covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub mean_z: Vec<f64>,
    pub cov_z: Vec<Vec<f64>>,
}

impl MomentCheck {
    pub fn max_z(&self) -> f64 {
        self.mean_z
            .iter()
            .chain(self.cov_z.iter().flatten())
            .copied()
            .fold(0.0, f64::max)
    }

    pub fn within(&self, standard_errors: f64) -> bool {
        self.max_z() <= standard_errors
    }
}

/// Compares sample moments against an analytic mean and covariance.
/// Entries whose sample and reference agree exactly score zero.
pub fn moment_check(moments: &Moments, mean: &DVector<f64>, cov: &DMatrix<f64>) -> MomentCheck {
    let dim = moments.mean.len();
    let mean_z = (0..dim)
        .map(|i| z_score(moments.mean[i] - mean[i], moments.mean_se[i]))
        .collect();
    let cov_z = (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| z_score(moments.cov[i][j] - cov[(i, j)], moments.cov_se[i][j]))
                .collect()
        })
        .collect();
    MomentCheck { mean_z, cov_z }
}

/// Numerical surrogate for equality of two measures given samples of each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionDistanceReport {
    /// Per-coordinate two-sample KS statistics.
    pub ks: Vec<f64>,
    pub left: Moments,
    pub right: Moments,
    /// `|Δmean| / se` per coordinate.
    pub mean_z: Vec<f64>,
    /// `|Δcov| / se` per entry.
    pub cov_z: Vec<Vec<f64>>,
}

impl DistributionDistanceReport {
    pub fn compare(left: &[Vec<f64>], right: &[Vec<f64>]) -> Self {
        let (lc, rc) = (columns(left), columns(right));
        let ks = lc
            .iter()
            .zip(&rc)
            .map(|(a, b)| ks_two_sample(a, b))
            .collect();
        let (lm, rm) = (Moments::from_columns(&lc), Moments::from_columns(&rc));
        let dim = lm.mean.len();
        let mean_z = (0..dim)
            .map(|i| {
                let se = (lm.mean_se[i].powi(2) + rm.mean_se[i].powi(2)).sqrt();
                z_score(lm.mean[i] - rm.mean[i], se)
            })
            .collect();
        let cov_z = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| {
                        let se = (lm.cov_se[i][j].powi(2) + rm.cov_se[i][j].powi(2)).sqrt();
                        z_score(lm.cov[i][j] - rm.cov[i][j], se)
                    })
                    .collect()
            })
            .collect();
        Self {
            ks,
            left: lm,
            right: rm,
            mean_z,
            cov_z,
        }
    }

    pub fn max_ks(&self) -> f64 {
        self.ks.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_moment_z(&self) -> f64 {
        self.mean_z
            .iter()
            .chain(self.cov_z.iter().flatten())
            .copied()
            .fold(0.0, f64::max)
    }

    /// `|ρ_left(i, j) − ρ_right(i, j)|`.
    pub fn correlation_gap(&self, i: usize, j: usize) -> f64 {
        (self.left.correlation(i, j) - self.right.correlation(i, j)).abs()
    }

    /// KS below `ks_threshold` on every coordinate and all moments within
    /// `standard_errors`.
    pub fn agrees(&self, ks_threshold: f64, standard_errors: f64) -> bool {
        self.max_ks() < ks_threshold && self.max_moment_z() <= standard_errors
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ks_of_identical_samples_is_zero() {
        let a = vec![3.0, 1.0, 2.0, 2.0];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
    }

    #[test]
    fn ks_handles_ties_against_a_point_mass() {
        let constant = vec![0.0; 1000];
        let spread: Vec<f64> = (0..1000).map(|i| i as f64 - 499.5).collect();
        assert!((ks_two_sample(&constant, &spread) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ks_disjoint_supports_is_one() {
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[2.0, 3.0, 4.0]), 1.0);
    }

    #[test]
    fn one_sample_ks_of_uniform_grid() {
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn point_mass_against_degenerate_normal() {
        let xs = vec![42.0; 10];
        assert_eq!(ks_vs_fitted_normal(&xs), 0.0);
        assert_eq!(ks_vs_normal(&[1.0, 2.0, 3.0, 4.0], 2.0, 0.0), 0.5);
    }

    #[test]
    fn moments_of_a_line() {
        let draws: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let m = Moments::from_draws(&draws);
        assert_eq!(m.mean, vec![2.0, 4.0]);
        assert!((m.cov[0][0] - 2.5).abs() < 1e-12);
        assert!((m.cov[0][1] - 5.0).abs() < 1e-12);
        assert!((m.correlation(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
    }

    proptest! {
        #[test]
        fn ks_is_a_bounded_symmetric_statistic(
            a in proptest::collection::vec(-5.0f64..5.0, 1..60),
            b in proptest::collection::vec(-5.0f64..5.0, 1..60),
        ) {
            let d = ks_two_sample(&a, &b);
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, ks_two_sample(&b, &a));
        }
    }
}
