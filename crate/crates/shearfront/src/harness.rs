//! Cross-experiment regression summaries: the quadratic small-amplitude
//! enhancement and the linear large-amplitude growth of the front speed.

use crate::stats;
use crate::variational::ReactionSpec;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

/// A fitted coefficient with a two-standard-error confidence interval.
#[derive(Debug, Clone, Copy)]
pub struct FittedCoefficient {
    pub value: f64,
    pub std_error: f64,
    pub ci: (f64, f64),
}

impl FittedCoefficient {
    fn from(value: f64, std_error: f64) -> Self {
        Self { value, std_error, ci: (value - 2.0 * std_error, value + 2.0 * std_error) }
    }
}

/// Weighted through-origin fit of `c*/c₀ − 1` against `σ²` over
/// `(sigma, c_star, std_error)` rows. The enhancement of a weak shear is
/// quadratic with coefficient ≈ half the shear variance.
pub fn fit_quadratic_enhancement(
    speeds: &[(f64, f64, f64)],
    reaction: &ReactionSpec,
) -> Result<FittedCoefficient, HarnessError> {
    let pts: Vec<&(f64, f64, f64)> = speeds.iter().filter(|(s, _, _)| *s > 0.0).collect();
    if pts.len() < 4 {
        return Err(HarnessError::InsufficientData(format!(
            "need >= 4 positive-amplitude speed points, got {}",
            pts.len()
        )));
    }
    let c0 = reaction.c0();
    // Through-origin weighted least squares: the model has no intercept by
    // construction (c*(0) = c₀ exactly).
    let mut swxx = 0.0;
    let mut swxy = 0.0;
    let mut rows = Vec::with_capacity(pts.len());
    for (sigma, c, se) in pts.iter() {
        let x = sigma * sigma;
        let y = c / c0 - 1.0;
        let sd = (se / c0).max(1e-12);
        let w = 1.0 / (sd * sd);
        swxx += w * x * x;
        swxy += w * x * y;
        rows.push((x, y, w));
    }
    let alpha = swxy / swxx;
    let dof = (rows.len() - 1) as f64;
    let chi2: f64 = rows.iter().map(|(x, y, w)| w * (y - alpha * x).powi(2)).sum();
    let inflation = (chi2 / dof).max(1.0).sqrt();
    let se = inflation / swxx.sqrt();
    Ok(FittedCoefficient::from(alpha, se))
}

/// Log-log regression of speed against amplitude over
/// `(sigma, c_star, std_error)` rows; a slope of 1 is linear growth.
pub fn fit_linear_growth(
    speeds: &[(f64, f64, f64)],
) -> Result<FittedCoefficient, HarnessError> {
    if speeds.len() < 4 {
        return Err(HarnessError::InsufficientData(format!(
            "need >= 4 speed points, got {}",
            speeds.len()
        )));
    }
    if speeds.iter().any(|(s, c, _)| !(*s > 0.0) || !(*c > 0.0)) {
        return Err(HarnessError::InsufficientData(
            "amplitudes and speeds must be positive for a log-log fit".into(),
        ));
    }
    let smin = speeds.iter().map(|(s, _, _)| *s).fold(f64::INFINITY, f64::min);
    let smax = speeds.iter().map(|(s, _, _)| *s).fold(0.0, f64::max);
    if smax / smin < 4.0 {
        return Err(HarnessError::InsufficientData(format!(
            "amplitude range {smin}..{smax} too narrow for a growth exponent"
        )));
    }
    let xs: Vec<f64> = speeds.iter().map(|(s, _, _)| s.ln()).collect();
    let ys: Vec<f64> = speeds.iter().map(|(_, c, _)| c.ln()).collect();
    let fit = stats::ols(&xs, &ys);
    Ok(FittedCoefficient::from(fit.slope, fit.slope_se))
}
