//! Exact synthesis of stationary Gaussian shear fields on uniform periodic
//! grids via circulant embedding, plus white-in-time increment streams and
//! an empirical-covariance validator.

use crate::covariance::{CovarianceSpec, Temporal};
use crate::rng::{self, Purpose};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::sync::Arc;
use thiserror::Error;

/// Fraction of spectral mass allowed to sit in clamped (negative) embedding
/// eigenvalues before synthesis is refused.
pub const CLAMP_TOLERANCE: f64 = 1e-6;
/// Minimum periodic domain length in correlation lengths.
pub const MIN_DOMAIN_CORR_LENGTHS: f64 = 8.0;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error(
        "circulant embedding not PSD: clamped spectral mass fraction {clamped_fraction:.3e} \
         exceeds {CLAMP_TOLERANCE:.0e} (domain too short relative to corr_length)"
    )]
    EmbeddingNotPSD { clamped_fraction: f64 },
    #[error("realizations have mismatched grids or specs")]
    MismatchedGrids,
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// A sampled shear realization on a uniform periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRealization {
    pub grid_spacing: f64,
    pub num_points: usize,
    pub values: Vec<f64>,
    pub seed: u64,
    pub spec: CovarianceSpec,
}

fn check_grid(spec: &CovarianceSpec, grid_spacing: f64, num_points: usize) -> Result<(), FieldError> {
    if !(grid_spacing > 0.0) || !grid_spacing.is_finite() {
        return Err(FieldError::Precondition(format!(
            "grid_spacing must be positive and finite, got {grid_spacing}"
        )));
    }
    if !num_points.is_power_of_two() {
        return Err(FieldError::Precondition(format!(
            "num_points must be a power of two for circulant embedding, got {num_points}"
        )));
    }
    let domain = grid_spacing * num_points as f64;
    if domain < MIN_DOMAIN_CORR_LENGTHS * spec.corr_length {
        return Err(FieldError::Precondition(format!(
            "periodic domain {domain} shorter than {MIN_DOMAIN_CORR_LENGTHS} correlation lengths"
        )));
    }
    Ok(())
}

/// Square roots of the circulant-embedding eigenvalues for an `m = 2n` grid,
/// with the clamped-mass check.
fn embedding_sqrt_eigs(
    spec: &CovarianceSpec,
    grid_spacing: f64,
    num_points: usize,
) -> Result<Vec<f64>, FieldError> {
    let m = 2 * num_points;
    let mut row: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let d = j.min(m - j) as f64 * grid_spacing;
            Complex::new(spec.evaluate(d), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut row);
    let mut clamped = 0.0;
    let mut total = 0.0;
    let mut sqrt_eigs = Vec::with_capacity(m);
    for v in &row {
        let lam = v.re;
        total += lam.abs();
        if lam < 0.0 {
            clamped += -lam;
            sqrt_eigs.push(0.0);
        } else {
            sqrt_eigs.push(lam.sqrt());
        }
    }
    let frac = if total > 0.0 { clamped / total } else { 0.0 };
    if frac >= CLAMP_TOLERANCE {
        return Err(FieldError::EmbeddingNotPSD { clamped_fraction: frac });
    }
    Ok(sqrt_eigs)
}

/// Shared synthesis core: one complex Gaussian vector through the embedding
/// spectrum yields two independent real samples (real and imaginary parts).
fn synth_pair(
    sqrt_eigs: &[f64],
    ifft: &Arc<dyn rustfft::Fft<f64>>,
    rng: &mut impl Rng,
    num_points: usize,
) -> (Vec<f64>, Vec<f64>) {
    let m = sqrt_eigs.len();
    let mut z: Vec<Complex<f64>> = (0..m)
        .map(|k| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            Complex::new(a, b) * sqrt_eigs[k]
        })
        .collect();
    ifft.process(&mut z);
    // The unnormalized inverse FFT needs 1/m; the embedding needs √m; the
    // net factor is 1/√m.
    let scale = 1.0 / (m as f64).sqrt();
    let re = z[..num_points].iter().map(|c| c.re * scale).collect();
    let im = z[..num_points].iter().map(|c| c.im * scale).collect();
    (re, im)
}

/// Sample a frozen-in-time realization with exact target covariance.
pub fn sample_static(
    spec: &CovarianceSpec,
    grid_spacing: f64,
    num_points: usize,
    seed: u64,
) -> Result<FieldRealization, FieldError> {
    if spec.temporal != Temporal::Static {
        return Err(FieldError::Precondition(
            "sample_static requires a static-temporal spec".into(),
        ));
    }
    check_grid(spec, grid_spacing, num_points)?;
    let sqrt_eigs = embedding_sqrt_eigs(spec, grid_spacing, num_points)?;
    let ifft = FftPlanner::new().plan_fft_inverse(sqrt_eigs.len());
    let mut gen = rng::stream(seed, 0, Purpose::StaticField);
    let (values, _) = synth_pair(&sqrt_eigs, &ifft, &mut gen, num_points);
    Ok(FieldRealization { grid_spacing, num_points, values, seed, spec: *spec })
}

/// Stream of white-in-time spatial increments: increment `j` is a Gaussian
/// field with covariance `dt·Γ₀(r)`, independent across `j`, reproducible per
/// `(seed, j)`. Consecutive increments share one synthesis FFT (real and
/// imaginary parts of the same complex draw), halving the cost.
pub struct WhiteStream {
    sqrt_eigs: Vec<f64>,
    ifft: Arc<dyn rustfft::Fft<f64>>,
    spec: CovarianceSpec,
    grid_spacing: f64,
    num_points: usize,
    seed: u64,
    sqrt_dt: f64,
    next_index: u64,
    pending: Option<Vec<f64>>,
}

impl WhiteStream {
    pub fn new(
        spec: &CovarianceSpec,
        grid_spacing: f64,
        num_points: usize,
        dt: f64,
        seed: u64,
    ) -> Result<Self, FieldError> {
        if spec.temporal != Temporal::White {
            return Err(FieldError::Precondition(
                "white increments require a white-temporal spec".into(),
            ));
        }
        if !(dt >= 0.0) || !dt.is_finite() {
            return Err(FieldError::Precondition(format!(
                "dt must be non-negative and finite, got {dt}"
            )));
        }
        check_grid(spec, grid_spacing, num_points)?;
        let sqrt_eigs = embedding_sqrt_eigs(spec, grid_spacing, num_points)?;
        let ifft = FftPlanner::new().plan_fft_inverse(sqrt_eigs.len());
        Ok(Self {
            sqrt_eigs,
            ifft,
            spec: *spec,
            grid_spacing,
            num_points,
            seed,
            sqrt_dt: dt.sqrt(),
            next_index: 0,
            pending: None,
        })
    }

    /// Next increment in the stream (time index advances by one per call).
    pub fn next_increment(&mut self) -> FieldRealization {
        let idx = self.next_index;
        self.next_index += 1;
        let values = if let Some(mut v) = self.pending.take() {
            for x in &mut v {
                *x *= self.sqrt_dt;
            }
            v
        } else {
            let mut gen = rng::stream(self.seed, idx / 2, Purpose::WhiteIncrement);
            let (re, im) = synth_pair(&self.sqrt_eigs, &self.ifft, &mut gen, self.num_points);
            self.pending = Some(im);
            re.into_iter().map(|x| x * self.sqrt_dt).collect()
        };
        FieldRealization {
            grid_spacing: self.grid_spacing,
            num_points: self.num_points,
            values,
            seed: self.seed,
            spec: self.spec,
        }
    }
}

/// One white-in-time increment at a given time index: covariance `dt·Γ₀(r)`,
/// reproducible and independent across `(seed, time_index)`. Matches the
/// corresponding element of [`WhiteStream`] exactly.
pub fn sample_white_increment(
    spec: &CovarianceSpec,
    grid_spacing: f64,
    num_points: usize,
    dt: f64,
    seed: u64,
    time_index: u64,
) -> Result<FieldRealization, FieldError> {
    let mut stream = WhiteStream::new(spec, grid_spacing, num_points, dt, seed)?;
    stream.next_index = time_index & !1;
    let first = stream.next_increment();
    if time_index % 2 == 0 {
        Ok(first)
    } else {
        Ok(stream.next_increment())
    }
}

/// Lag-indexed empirical covariance over an ensemble of realizations.
#[derive(Debug, Clone)]
pub struct EmpiricalCovariance {
    pub grid_spacing: f64,
    /// Mean circular-spatial covariance per lag (index 0 = variance).
    pub estimates: Vec<f64>,
    /// Ensemble standard error per lag.
    pub std_errors: Vec<f64>,
}

/// Unbiased ensemble + circular-spatial covariance estimate at every grid lag
/// up to `max_lag`.
pub fn empirical_covariance(
    realizations: &[FieldRealization],
    max_lag: usize,
) -> Result<EmpiricalCovariance, FieldError> {
    let first = realizations
        .first()
        .ok_or_else(|| FieldError::Precondition("empty ensemble".into()))?;
    if realizations.iter().any(|r| {
        r.grid_spacing != first.grid_spacing
            || r.num_points != first.num_points
            || r.spec != first.spec
    }) {
        return Err(FieldError::MismatchedGrids);
    }
    let n = first.num_points;
    if max_lag >= n {
        return Err(FieldError::Precondition(format!(
            "max_lag {max_lag} must be below num_points {n}"
        )));
    }
    let m = realizations.len();
    // Per-realization circular averages, then ensemble mean and SE per lag.
    let mut per_real: Vec<Vec<f64>> = Vec::with_capacity(m);
    for r in realizations {
        let v = &r.values;
        let mut lags = Vec::with_capacity(max_lag + 1);
        for lag in 0..=max_lag {
            let s: f64 = (0..n).map(|i| v[i] * v[(i + lag) % n]).sum();
            lags.push(s / n as f64);
        }
        per_real.push(lags);
    }
    let mut estimates = Vec::with_capacity(max_lag + 1);
    let mut std_errors = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag {
        let col: Vec<f64> = per_real.iter().map(|l| l[lag]).collect();
        estimates.push(crate::stats::mean(&col));
        std_errors.push(if m >= 2 { crate::stats::sem(&col) } else { 0.0 });
    }
    Ok(EmpiricalCovariance { grid_spacing: first.grid_spacing, estimates, std_errors })
}
