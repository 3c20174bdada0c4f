//! Shape-preserving interpolation of tabulated curves.
//!
//! Fritsch–Carlson monotone cubic Hermite interpolation with
//! distance-weighted three-point node slopes. The slope choice is exact for
//! quadratic data on arbitrary (e.g. geometric) node spacings, and the
//! monotonicity limiter never activates on data sampled from a monotone
//! convex curve, so tabulated quadratics are reproduced to rounding error
//! while noisy monotone tables cannot acquire spurious oscillations.

/// Monotone cubic interpolant over strictly increasing abscissae.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    /// Build the interpolant.
    ///
    /// # Panics
    /// Panics if fewer than 2 nodes are given, lengths mismatch, abscissae
    /// are not strictly increasing, or any value is non-finite.
    pub fn new(xs: &[f64], ys: &[f64]) -> Self {
        assert_eq!(xs.len(), ys.len(), "MonotoneCubic: mismatched lengths");
        let n = xs.len();
        assert!(n >= 2, "MonotoneCubic: need at least 2 nodes");
        assert!(
            xs.iter().all(|v| v.is_finite()) && ys.iter().all(|v| v.is_finite()),
            "MonotoneCubic: non-finite input"
        );
        assert!(
            xs.windows(2).all(|w| w[0] < w[1]),
            "MonotoneCubic: abscissae must be strictly increasing"
        );

        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
        let mut m = vec![0.0f64; n];

        // Interior slopes: distance-weighted mean of adjacent secants, zeroed
        // at local extrema.
        for k in 1..n - 1 {
            if delta[k - 1] * delta[k] <= 0.0 {
                m[k] = 0.0;
            } else {
                m[k] = (h[k] * delta[k - 1] + h[k - 1] * delta[k]) / (h[k - 1] + h[k]);
            }
        }
        // One-sided three-point endpoint slopes with the standard safeguards.
        m[0] = endpoint_slope(h[0], h.get(1).copied().unwrap_or(h[0]), delta[0], delta.get(1).copied().unwrap_or(delta[0]));
        m[n - 1] = endpoint_slope(
            h[n - 2],
            if n >= 3 { h[n - 3] } else { h[n - 2] },
            delta[n - 2],
            if n >= 3 { delta[n - 3] } else { delta[n - 2] },
        );

        // Fritsch–Carlson limiter: keep (m_k/δ, m_{k+1}/δ) inside the circle
        // of radius 3 for every interval so the cubic is monotone wherever
        // the data is.
        for k in 0..n - 1 {
            if delta[k] == 0.0 {
                m[k] = 0.0;
                m[k + 1] = 0.0;
                continue;
            }
            let a = m[k] / delta[k];
            let b = m[k + 1] / delta[k];
            if a < 0.0 {
                m[k] = 0.0;
            }
            if b < 0.0 {
                m[k + 1] = 0.0;
            }
            let a = m[k] / delta[k];
            let b = m[k + 1] / delta[k];
            let r2 = a * a + b * b;
            if r2 > 9.0 {
                let tau = 3.0 / r2.sqrt();
                m[k] = tau * a * delta[k];
                m[k + 1] = tau * b * delta[k];
            }
        }

        Self { xs: xs.to_vec(), ys: ys.to_vec(), slopes: m }
    }

    /// Inclusive domain of the interpolant.
    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().expect("non-empty by construction"))
    }

    /// Evaluate at `x`; `None` outside the node range.
    pub fn eval(&self, x: f64) -> Option<f64> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return None;
        }
        // Binary search for the containing interval.
        let k = match self.xs.binary_search_by(|v| v.partial_cmp(&x).expect("finite by construction")) {
            Ok(i) => return Some(self.ys[i]),
            Err(i) => i - 1,
        };
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        Some(
            h00 * self.ys[k]
                + h10 * h * self.slopes[k]
                + h01 * self.ys[k + 1]
                + h11 * h * self.slopes[k + 1],
        )
    }
}

/// One-sided three-point endpoint slope (h0 adjacent, h1 next; δ likewise),
/// with the usual sign safeguards.
fn endpoint_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let mut m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        m = 0.0;
    } else if d0 * d1 < 0.0 && m.abs() > 3.0 * d0.abs() {
        m = 3.0 * d0;
    }
    m
}

/// Piecewise-linear interpolation over sorted abscissae; `None` out of range.
///
/// # Panics
/// Panics on mismatched lengths, fewer than 1 node, or unsorted abscissae.
pub fn lerp(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    assert_eq!(xs.len(), ys.len(), "lerp: mismatched lengths");
    assert!(!xs.is_empty(), "lerp: empty table");
    assert!(xs.windows(2).all(|w| w[0] <= w[1]), "lerp: unsorted abscissae");
    let lo = xs[0];
    let hi = *xs.last().expect("non-empty");
    if !(x >= lo && x <= hi) {
        return None;
    }
    if xs.len() == 1 {
        return Some(ys[0]);
    }
    let k = match xs.binary_search_by(|v| v.partial_cmp(&x).expect("lerp: NaN abscissa")) {
        Ok(i) => return Some(ys[i]),
        Err(i) => i - 1,
    };
    let t = (x - xs[k]) / (xs[k + 1] - xs[k]);
    Some(ys[k] + t * (ys[k + 1] - ys[k]))
}
