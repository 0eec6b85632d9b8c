//! Sample statistics and goodness-of-fit tests used by the simulation checks.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Mean, variance, skewness and Pearson kurtosis (`mu4 / mu2^2`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentSummary {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

pub fn sample_moments(data: &[f64]) -> MomentSummary {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in data {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    MomentSummary {
        mean,
        variance: m2 * n / (n - 1.0),
        skewness: m3 / m2.powf(1.5),
        kurtosis: m4 / (m2 * m2),
    }
}

/// Moments of the whole sample together with batch-means standard errors
/// (`n_batches` contiguous batches).
pub fn moments_with_stderr(data: &[f64], n_batches: usize) -> (MomentSummary, MomentSummary) {
    let whole = sample_moments(data);
    let size = data.len() / n_batches;
    let batches: Vec<MomentSummary> = data
        .chunks_exact(size)
        .take(n_batches)
        .map(sample_moments)
        .collect();
    let se = |f: fn(&MomentSummary) -> f64| {
        let vals: Vec<f64> = batches.iter().map(f).collect();
        let (_, s) = mean_stderr(&vals);
        s
    };
    let stderr = MomentSummary {
        mean: se(|m| m.mean),
        variance: se(|m| m.variance),
        skewness: se(|m| m.skewness),
        kurtosis: se(|m| m.kurtosis),
    };
    (whole, stderr)
}

/// Sample mean and its standard error.
pub fn mean_stderr(data: &[f64]) -> (f64, f64) {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov survival function `Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} e^{-2 k^2 lambda^2}`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n * m) as f64 / (n + m) as f64;
    KsResult {
        statistic: d,
        p_value: ks_p_value(d, n_eff),
    }
}

/// One-sample Kolmogorov-Smirnov test against a continuous cdf.
pub fn ks_one_sample(data: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut x = data.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    KsResult {
        statistic: d,
        p_value: ks_p_value(d, n),
    }
}

/// Pearson chi-square statistic and p-value for observed counts against
/// expected counts.
pub fn chi_square_test(observed: &[f64], expected: &[f64], fitted_params: usize) -> (f64, f64) {
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let df = (observed.len() - 1 - fitted_params) as f64;
    let p = 1.0 - ChiSquared::new(df).expect("positive dof").cdf(stat);
    (stat, p)
}

/// Two-sided normal-approximation confidence interval for a binomial proportion.
pub fn binomial_ci(p: f64, n: u64, level: f64) -> (f64, f64) {
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let half = z * (p * (1.0 - p) / n as f64).sqrt();
    (p - half, p + half)
}
