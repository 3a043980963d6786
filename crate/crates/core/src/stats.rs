//! Shared statistical machinery: binomial intervals, goodness-of-fit tests,
//! two-sample tests, and small regression helpers.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF, Normal};

/// Two-sided Wilson score interval for a binomial proportion.
///
/// Behaves sensibly near p = 1/2 and at the boundaries, which is why the
/// game harness uses it instead of the normal approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilsonInterval {
    pub low: f64,
    pub high: f64,
}

pub fn wilson_interval(successes: u64, trials: u64, confidence: f64) -> WilsonInterval {
    assert!(trials > 0, "wilson_interval needs at least one trial");
    assert!((0.0..1.0).contains(&confidence) || confidence < 1.0);
    let n = trials as f64;
    let p_hat = successes as f64 / n;
    let z = Normal::standard().inverse_cdf(0.5 + confidence / 2.0);
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p_hat + z2 / (2.0 * n)) / denom;
    let margin = (z / denom) * (p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n)).sqrt();
    WilsonInterval {
        low: (center - margin).max(0.0),
        high: (center + margin).min(1.0),
    }
}

/// Central band `[k_lo, k_hi]` of an exact Binomial(n, p) containing at least
/// `coverage` probability, with equal tail allowance on both sides.
pub fn binomial_central_band(n: u64, p: f64, coverage: f64) -> (u64, u64) {
    let alpha = 1.0 - coverage;
    let dist = Binomial::new(p, n).expect("valid binomial");
    let k_lo = dist.inverse_cdf(alpha / 2.0);
    let k_hi = dist.inverse_cdf(1.0 - alpha / 2.0);
    (k_lo, k_hi)
}

/// P(X <= k) for X ~ Binomial(n, p).
pub fn binomial_cdf(k: u64, n: u64, p: f64) -> f64 {
    Binomial::new(p, n).expect("valid binomial").cdf(k)
}

/// Pearson chi-square goodness-of-fit p-value. `expected` are counts, not
/// probabilities; bins with expected count 0 must have observed count 0.
pub fn chi_square_gof_pvalue(observed: &[u64], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len());
    let mut stat = 0.0;
    let mut df = 0usize;
    for (&o, &e) in observed.iter().zip(expected) {
        if e <= 0.0 {
            assert_eq!(o, 0, "observed count in a zero-expectation bin");
            continue;
        }
        let d = o as f64 - e;
        stat += d * d / e;
        df += 1;
    }
    assert!(df >= 2, "chi-square needs at least two non-empty bins");
    let dist = ChiSquared::new((df - 1) as f64).expect("valid chi-squared");
    1.0 - dist.cdf(stat)
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert!(!a.is_empty() && !b.is_empty());
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|u, v| u.partial_cmp(v).unwrap());
    xb.sort_by(|u, v| u.partial_cmp(v).unwrap());
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    (d, ks_q(lambda))
}

// Kolmogorov distribution tail Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2)
fn ks_q(lambda: f64) -> f64 {
    if lambda < 1e-6 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Permutation test for equality of two multivariate sample distributions.
///
/// The statistic is the sum over dimensions of squared standardized mean
/// differences. The p-value is `(1 + #{T_perm >= T_obs}) / (permutations + 1)`,
/// so with 199 permutations the finest attainable p is 0.005.
pub fn permutation_mean_test(
    group_a: &[Vec<f64>],
    group_b: &[Vec<f64>],
    permutations: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    assert!(!group_a.is_empty() && !group_b.is_empty());
    let dim = group_a[0].len();
    let mut pooled: Vec<&[f64]> = Vec::with_capacity(group_a.len() + group_b.len());
    pooled.extend(group_a.iter().map(|v| v.as_slice()));
    pooled.extend(group_b.iter().map(|v| v.as_slice()));
    let na = group_a.len();

    // pooled per-dimension scale, reused by every permutation
    let n_tot = pooled.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in &pooled {
        for (m, x) in mean.iter_mut().zip(*v) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n_tot;
    }
    let mut var = vec![0.0; dim];
    for v in &pooled {
        for ((s, x), m) in var.iter_mut().zip(*v).zip(&mean) {
            let d = x - m;
            *s += d * d;
        }
    }
    let scale: Vec<f64> = var.iter().map(|s| (s / n_tot).max(1e-12)).collect();

    let stat_of = |idx: &[usize]| -> f64 {
        let mut ma = vec![0.0; dim];
        let mut mb = vec![0.0; dim];
        for (pos, &which) in idx.iter().enumerate() {
            let dst = if pos < na { &mut ma } else { &mut mb };
            for (m, x) in dst.iter_mut().zip(pooled[which]) {
                *m += x;
            }
        }
        let nb = (idx.len() - na) as f64;
        let mut t = 0.0;
        for d in 0..dim {
            let diff = ma[d] / na as f64 - mb[d] / nb;
            t += diff * diff / scale[d];
        }
        t
    };

    let identity: Vec<usize> = (0..pooled.len()).collect();
    let observed = stat_of(&identity);
    let mut exceed = 0usize;
    let mut perm = identity;
    for _ in 0..permutations {
        perm.shuffle(rng);
        if stat_of(&perm) >= observed {
            exceed += 1;
        }
    }
    let p = (1 + exceed) as f64 / (permutations + 1) as f64;
    (observed, p)
}

/// Least-squares fit through the origin-free line y = a + b x; returns (slope, r2).
pub fn linear_fit_r2(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, r2)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
