//! Stationary covariance kernels Γ of the shear field and their spectral
//! densities — the single source of truth for field statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Covariance kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Γ(r) = variance·exp(−r²/(2ℓ²)) — smooth fields.
    Gaussian,
    /// Γ(r) = variance·exp(−|r|/ℓ) — rough fields.
    Exponential,
}

/// Temporal structure of the shear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Temporal {
    /// Frozen-in-time field ξ(y₁).
    Static,
    /// White-in-time field: increments over dt have covariance dt·Γ₀(r).
    White,
}

#[derive(Debug, Error, PartialEq)]
pub enum CovarianceError {
    #[error("invalid covariance parameter: {0}")]
    InvalidParameter(String),
}

/// Parametric stationary covariance specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub family: Family,
    /// Γ(0): dimensionless squared shear amplitude. The rms multiplier σ is
    /// applied outside field synthesis, so sweeps usually keep this at 1.
    pub variance: f64,
    /// Correlation length ℓ in units of y₁.
    pub corr_length: f64,
    pub temporal: Temporal,
}

impl CovarianceSpec {
    /// Validated constructor.
    pub fn new(
        family: Family,
        variance: f64,
        corr_length: f64,
        temporal: Temporal,
    ) -> Result<Self, CovarianceError> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(CovarianceError::InvalidParameter(format!(
                "variance must be positive and finite, got {variance}"
            )));
        }
        if !(corr_length > 0.0) || !corr_length.is_finite() {
            return Err(CovarianceError::InvalidParameter(format!(
                "corr_length must be positive and finite, got {corr_length}"
            )));
        }
        Ok(Self { family, variance, corr_length, temporal })
    }

    /// Evaluate Γ at distance `r`.
    pub fn evaluate(&self, r: f64) -> f64 {
        let s = r.abs() / self.corr_length;
        match self.family {
            Family::Gaussian => self.variance * (-0.5 * s * s).exp(),
            Family::Exponential => self.variance * (-s).exp(),
        }
    }

    /// Spectral density S(k) = ∫ Γ(r) e^{−ikr} dr (so (1/2π)∫S dk = Γ(0)).
    pub fn spectral_density(&self, k: f64) -> f64 {
        let v = self.variance;
        let l = self.corr_length;
        match self.family {
            Family::Gaussian => v * l * (2.0 * std::f64::consts::PI).sqrt()
                * (-0.5 * k * k * l * l).exp(),
            Family::Exponential => 2.0 * v * l / (1.0 + k * k * l * l),
        }
    }
}
