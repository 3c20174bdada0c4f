//! Running maxima of stationary Gaussian fields over growing domains — the
//! mechanism behind the frozen-shear speed divergence.

use crate::covariance::{CovarianceSpec, Temporal};
use crate::field::{sample_static, FieldError};

/// Grid points per correlation length when synthesizing the field.
const POINTS_PER_CORR_LENGTH: f64 = 8.0;

/// Nested suprema of one realization over domains `|x| ≤ t`.
#[derive(Debug, Clone)]
pub struct MaximaRecord {
    /// `(t, sup over |x| ≤ t)`, non-decreasing in the second component.
    pub samples: Vec<(f64, f64)>,
    pub seed: u64,
    pub spec: CovarianceSpec,
}

impl MaximaRecord {
    /// Ratio `sup / √(2Γ₀(0)·log(t/ℓ))` per sample; `log` counts effectively
    /// independent correlation cells, so entries with `t ≤ ℓ` are skipped.
    pub fn normalized_ratios(&self) -> Vec<(f64, f64)> {
        let v = self.spec.variance;
        let ell = self.spec.corr_length;
        self.samples
            .iter()
            .filter(|(t, _)| *t / ell > 1.0)
            .map(|(t, sup)| (*t, sup / (2.0 * v * (t / ell).ln()).sqrt()))
            .collect()
    }
}

/// Sample one long realization and record its suprema over the nested
/// domains `|x| ≤ t` for each requested `t`.
pub fn running_max(
    spec: &CovarianceSpec,
    t_values: &[f64],
    seed: u64,
) -> Result<MaximaRecord, FieldError> {
    if spec.temporal != Temporal::Static {
        return Err(FieldError::Precondition(
            "running maxima are defined for static fields".into(),
        ));
    }
    if t_values.is_empty() {
        return Err(FieldError::Precondition("need at least one domain size".into()));
    }
    for w in t_values.windows(2) {
        if !(w[1] > w[0]) {
            return Err(FieldError::Precondition(
                "domain sizes must be strictly increasing".into(),
            ));
        }
    }
    if !(t_values[0] > 0.0) {
        return Err(FieldError::Precondition("domain sizes must be positive".into()));
    }
    let t_max = *t_values.last().unwrap();
    let h = spec.corr_length / POINTS_PER_CORR_LENGTH;
    // Periodic domain comfortably larger than the widest window.
    let needed = 2.0 * t_max + 8.0 * spec.corr_length;
    let mut n = 1024usize;
    while (n as f64) * h < needed {
        n = n.checked_mul(2).ok_or_else(|| {
            FieldError::Precondition("domain too large to synthesize".into())
        })?;
    }
    let realization = sample_static(spec, h, n, seed)?;
    let center = n / 2;
    let mut samples = Vec::with_capacity(t_values.len());
    let mut sup = f64::NEG_INFINITY;
    let mut lo = center;
    let mut hi = center;
    let mut covered = false;
    for &t in t_values {
        let radius = (t / h).floor() as usize;
        let new_lo = center.saturating_sub(radius);
        let new_hi = (center + radius).min(n - 1);
        if !covered {
            sup = realization.values[new_lo..=new_hi]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            covered = true;
        } else {
            for &v in &realization.values[new_lo..lo] {
                sup = sup.max(v);
            }
            for &v in &realization.values[hi + 1..=new_hi] {
                sup = sup.max(v);
            }
        }
        lo = new_lo;
        hi = new_hi;
        samples.push((t, sup));
    }
    Ok(MaximaRecord { samples, seed, spec: *spec })
}

/// Predicted excess front speed `σ·√(2Γ₀(0)·log t)` for a frozen shear
/// observed up to time `t ≥ 1`.
pub fn divergence_prediction(sigma: f64, gamma0: f64, t: f64) -> f64 {
    assert!(t >= 1.0, "the divergence prediction needs t >= 1, got {t}");
    assert!(sigma >= 0.0 && gamma0 >= 0.0, "sigma and gamma0 must be non-negative");
    sigma * (2.0 * gamma0 * t.ln()).sqrt()
}
