//! Shared statistical utilities: least-squares fits, Kolmogorov–Smirnov
//! tests, and special functions used by the acceptance checks.

/// Result of a univariate linear least-squares fit `y ≈ intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub r2: f64,
}

/// Ordinary least squares of `y` on `x`.
///
/// Standard errors use the residual variance with `n − 2` degrees of freedom;
/// with fewer than 3 points the SEs are reported as 0 (exact fit).
///
/// # Panics
/// Panics if the inputs differ in length, contain fewer than 2 points, or if
/// `x` is degenerate (zero variance).
pub fn ols(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len(), "ols: mismatched input lengths");
    let n = x.len();
    assert!(n >= 2, "ols: need at least 2 points");
    let nf = n as f64;
    let xm = mean(x);
    let ym = mean(y);
    let sxx: f64 = x.iter().map(|&v| (v - xm) * (v - xm)).sum();
    assert!(sxx > 0.0, "ols: degenerate abscissa");
    let sxy: f64 = x.iter().zip(y).map(|(&a, &b)| (a - xm) * (b - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    let ss_tot: f64 = y.iter().map(|&v| (v - ym) * (v - ym)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let (slope_se, intercept_se) = if n > 2 {
        let s2 = ss_res / (nf - 2.0);
        ((s2 / sxx).sqrt(), (s2 * (1.0 / nf + xm * xm / sxx)).sqrt())
    } else {
        (0.0, 0.0)
    };
    LinearFit { slope, intercept, slope_se, intercept_se, r2 }
}

/// Weighted least squares of `y` on `x` with per-point standard deviations
/// `sigma` (weights `1/sigma²`).
///
/// Parameter covariances are inflated by `max(1, χ²/dof)` so that model
/// misfit beyond the stated measurement noise widens the reported errors
/// instead of being hidden by optimistically small `sigma` values.
///
/// # Panics
/// Panics on mismatched lengths, fewer than 2 points, non-positive `sigma`,
/// or a degenerate abscissa.
pub fn wls(x: &[f64], y: &[f64], sigma: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len(), "wls: mismatched input lengths");
    assert_eq!(x.len(), sigma.len(), "wls: mismatched sigma length");
    let n = x.len();
    assert!(n >= 2, "wls: need at least 2 points");
    assert!(sigma.iter().all(|&s| s > 0.0), "wls: sigma must be positive");
    let w: Vec<f64> = sigma.iter().map(|&s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let swx: f64 = w.iter().zip(x).map(|(&a, &b)| a * b).sum();
    let swy: f64 = w.iter().zip(y).map(|(&a, &b)| a * b).sum();
    let xm = swx / sw;
    let ym = swy / sw;
    let sxx: f64 = w.iter().zip(x).map(|(&wi, &xi)| wi * (xi - xm) * (xi - xm)).sum();
    assert!(sxx > 0.0, "wls: degenerate abscissa");
    let sxy: f64 = w
        .iter()
        .zip(x.iter().zip(y))
        .map(|(&wi, (&xi, &yi))| wi * (xi - xm) * (yi - ym))
        .sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let chi2: f64 = x
        .iter()
        .zip(y.iter().zip(&w))
        .map(|(&xi, (&yi, &wi))| {
            let r = yi - (intercept + slope * xi);
            wi * r * r
        })
        .sum();
    let dof = (n as f64 - 2.0).max(1.0);
    let inflation = (chi2 / dof).max(1.0);
    let slope_se = (inflation / sxx).sqrt();
    let intercept_se = (inflation * (1.0 / sw + xm * xm / sxx)).sqrt();
    // R² against the weighted mean.
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let r = yi - (intercept + slope * xi);
            r * r
        })
        .sum();
    let ss_tot: f64 = y.iter().map(|&v| (v - ym) * (v - ym)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    LinearFit { slope, intercept, slope_se, intercept_se, r2 }
}

/// Arithmetic mean.
///
/// # Panics
/// Panics on empty input.
pub fn mean(v: &[f64]) -> f64 {
    assert!(!v.is_empty(), "mean: empty input");
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance (denominator `n − 1`).
///
/// # Panics
/// Panics with fewer than 2 points.
pub fn variance(v: &[f64]) -> f64 {
    assert!(v.len() >= 2, "variance: need at least 2 points");
    let m = mean(v);
    v.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

/// Standard error of the mean.
pub fn sem(v: &[f64]) -> f64 {
    (variance(v) / v.len() as f64).sqrt()
}

/// Jackknife standard error of an arbitrary statistic of a sample.
///
/// # Panics
/// Panics with fewer than 2 points.
pub fn jackknife_se(v: &[f64], statistic: impl Fn(&[f64]) -> f64) -> f64 {
    let n = v.len();
    assert!(n >= 2, "jackknife_se: need at least 2 points");
    let mut loo = Vec::with_capacity(n);
    let mut held = Vec::with_capacity(n - 1);
    for i in 0..n {
        held.clear();
        held.extend(v.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &x)| x));
        loo.push(statistic(&held));
    }
    let lm = mean(&loo);
    let ss: f64 = loo.iter().map(|&x| (x - lm) * (x - lm)).sum();
    ((n as f64 - 1.0) / n as f64 * ss).sqrt()
}

/// Complementary error function, via the rational Chebyshev approximation of
/// Numerical Recipes (absolute error below 1.2e−7, ample for 1% test levels).
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587
                                        + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Kolmogorov distribution tail `Q(λ) = 2 Σ_{j≥1} (−1)^{j−1} exp(−2 j² λ²)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-10 {
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

/// Asymptotic KS p-value from a statistic `d` and effective sample size `ne`,
/// with the Stephens small-sample correction.
fn ks_pvalue(d: f64, ne: f64) -> f64 {
    let sq = ne.sqrt();
    kolmogorov_q((sq + 0.12 + 0.11 / sq) * d)
}

/// Two-sample Kolmogorov–Smirnov test. Returns `(D, p)`.
///
/// # Panics
/// Panics if either sample is empty.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert!(!a.is_empty() && !b.is_empty(), "ks_two_sample: empty sample");
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|p, q| p.partial_cmp(q).expect("ks_two_sample: NaN in sample"));
    sb.sort_by(|p, q| p.partial_cmp(q).expect("ks_two_sample: NaN in sample"));
    let (na, nb) = (sa.len(), sb.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < na && j < nb {
        let xa = sa[i];
        let xb = sb[j];
        if xa <= xb {
            i += 1;
        }
        if xb <= xa {
            j += 1;
        }
        let diff = (i as f64 / na as f64 - j as f64 / nb as f64).abs();
        if diff > d {
            d = diff;
        }
    }
    let ne = (na as f64 * nb as f64) / (na as f64 + nb as f64);
    (d, ks_pvalue(d, ne))
}

/// One-sample Kolmogorov–Smirnov test against a given CDF. Returns `(D, p)`.
///
/// # Panics
/// Panics on an empty sample.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    assert!(!sample.is_empty(), "ks_one_sample: empty sample");
    let mut s = sample.to_vec();
    s.sort_by(|p, q| p.partial_cmp(q).expect("ks_one_sample: NaN in sample"));
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        let lo = (f - i as f64 / n).abs();
        let hi = ((i as f64 + 1.0) / n - f).abs();
        d = d.max(lo).max(hi);
    }
    (d, ks_pvalue(d, n))
}
