//! Direct 2-D KPP solver with a shear flow along the propagation axis:
//! Strang-split diffusion/advection/reaction with a front-adapted moving
//! window, level-set front tracking, speed regression, and the
//! divergence-law fit for frozen shears.

use crate::field::{FieldError, FieldRealization, WhiteStream};
use crate::stats;
use crate::variational::{Method, ReactionSpec, SpeedEstimate};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::sync::Arc;
use thiserror::Error;

/// Default level whose crossing defines the front position.
pub const FRONT_LEVEL: f64 = 0.5;
/// Window fraction past which the field is recentered.
const RECENTER_FRACTION: f64 = 0.55;
/// Window fraction the front is recentered back to.
const ANCHOR_FRACTION: f64 = 0.45;
/// Ratio between the last fitted time and the first dyadic window start in
/// the divergence fit: only late windows see the asymptotic law, early ones
/// still pay the ballistic transit cost of reaching distant shear maxima.
const DIVERGENCE_WINDOW_RATIO: f64 = 32.0;
/// Required overall time span (in decades base 10) for a divergence fit.
const MIN_TIME_SPAN_FACTOR: f64 = 100.0;

#[derive(Debug, Error)]
pub enum DirectError {
    #[error("advective displacement {max_disp:.3e} exceeds one cell {dy2:.3e} in a step")]
    CFLViolation { max_disp: f64, dy2: f64 },
    #[error("front reached the window edge at time {time}")]
    WindowOverrun { time: f64 },
    #[error("averaged profile never crosses the tracking level")]
    NoCrossing,
    #[error("need at least 20 trajectory samples in the window, got {got}")]
    InsufficientSamples { got: usize },
    #[error("insufficient time span: {0}")]
    InsufficientTimeSpan(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// Order parameter on a periodic-in-`y1`, windowed-in-`y2` grid, stored
/// row-major with `y2` as the slow index.
#[derive(Debug, Clone)]
pub struct Field2D {
    pub u: Vec<f64>,
    pub n1: usize,
    pub n2: usize,
    pub dy1: f64,
    pub dy2: f64,
    /// Laboratory-frame coordinate of the window's first row.
    pub window_offset: f64,
    pub time: f64,
}

impl Field2D {
    /// Planar front: `u = 1` behind, `0` ahead, smoothed over two cells
    /// around `front_at` (window coordinates).
    pub fn planar(
        n1: usize,
        n2: usize,
        dy1: f64,
        dy2: f64,
        front_at: f64,
    ) -> Result<Self, DirectError> {
        if n1 == 0 || n2 < 8 || !(dy1 > 0.0) || !(dy2 > 0.0) {
            return Err(DirectError::Precondition(format!(
                "bad grid: n1={n1}, n2={n2}, dy1={dy1}, dy2={dy2}"
            )));
        }
        let mut u = vec![0.0; n1 * n2];
        for j in 0..n2 {
            let y2 = (j as f64 + 0.5) * dy2;
            let v = 0.5 * (1.0 - ((y2 - front_at) / (2.0 * dy2)).tanh());
            u[j * n1..(j + 1) * n1].fill(v);
        }
        Ok(Self { u, n1, n2, dy1, dy2, window_offset: 0.0, time: 0.0 })
    }

    /// Total mass `∬ u dy1 dy2` over the window.
    pub fn mass(&self) -> f64 {
        self.u.iter().sum::<f64>() * self.dy1 * self.dy2
    }

    /// `y1`-averaged profile along the window.
    pub fn averaged_profile(&self) -> Vec<f64> {
        (0..self.n2)
            .map(|j| {
                self.u[j * self.n1..(j + 1) * self.n1].iter().sum::<f64>() / self.n1 as f64
            })
            .collect()
    }

    /// `y1`-maximum profile along the window (finger diagnostic).
    pub fn max_profile(&self) -> Vec<f64> {
        (0..self.n2)
            .map(|j| {
                self.u[j * self.n1..(j + 1) * self.n1]
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }
}

/// Shear forcing for one step.
#[derive(Debug, Clone, Copy)]
pub enum ShearInput<'a> {
    /// No advection.
    None,
    /// Frozen velocity profile: displacement `σ·ξ(y1)·dt`.
    Frozen(&'a FieldRealization),
    /// White-in-time integrated increment: displacement `σ·δξ(y1)` (the
    /// increment already carries the `√dt` scale; Stratonovich shift).
    WhiteIncrement(&'a FieldRealization),
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepDiagnostics {
    /// Largest excursion of `u` outside `[0, 1]` before clipping.
    pub clip_excursion: f64,
}

/// Strang stepper with cached transforms and tridiagonal factorizations.
pub struct DirectStepper {
    n1: usize,
    n2: usize,
    dy1: f64,
    dy2: f64,
    dt: f64,
    fwd: Arc<dyn rustfft::Fft<f64>>,
    inv: Arc<dyn rustfft::Fft<f64>>,
    /// Per-mode `y1` diffusion factors for a half-step.
    y1_factors: Vec<f64>,
    mu: f64,
    /// Thomas forward-elimination reciprocals for the `y2` Crank–Nicolson
    /// system (constant coefficients, factorized once).
    minv: Vec<f64>,
    /// Back-substitution couplings `μ·minv`.
    back: Vec<f64>,
    exp_neg_rdt: f64,
    row_buf: Vec<Complex<f64>>,
    rhs: Vec<f64>,
    col_in: Vec<f64>,
    col_out: Vec<f64>,
}

impl DirectStepper {
    pub fn new(field: &Field2D, reaction: &ReactionSpec, dt: f64) -> Result<Self, DirectError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(DirectError::Precondition(format!("dt must be positive, got {dt}")));
        }
        let (n1, n2) = (field.n1, field.n2);
        let mut planner = FftPlanner::new();
        let y1_factors = (0..n1)
            .map(|j| {
                let symbol = (2.0 / (field.dy1 * field.dy1))
                    * ((2.0 * std::f64::consts::PI * j as f64 / n1 as f64).cos() - 1.0);
                // Diffusivity 1/2 for time dt/2.
                (0.25 * dt * symbol).exp()
            })
            .collect();
        // Crank–Nicolson for u_t = (1/2)u_yy over time dt/2 with Neumann
        // ends: weight μ = dt/(8·dy2²).
        let mu = dt / (8.0 * field.dy2 * field.dy2);
        let diag = |j: usize| -> f64 {
            if j == 0 || j == n2 - 1 {
                1.0 + mu
            } else {
                1.0 + 2.0 * mu
            }
        };
        let mut minv = vec![0.0; n2];
        let mut back = vec![0.0; n2];
        let mut prev_cp = 0.0;
        for j in 0..n2 {
            let denom = diag(j) - mu * prev_cp;
            minv[j] = 1.0 / denom;
            prev_cp = mu * minv[j];
            back[j] = prev_cp;
        }
        Ok(Self {
            n1,
            n2,
            dy1: field.dy1,
            dy2: field.dy2,
            dt,
            fwd: planner.plan_fft_forward(n1),
            inv: planner.plan_fft_inverse(n1),
            y1_factors,
            mu,
            minv,
            back,
            exp_neg_rdt: (-reaction.f_prime_0 * dt).exp(),
            row_buf: vec![Complex::default(); n1],
            rhs: vec![0.0; n1 * n2],
            col_in: vec![0.0; n2],
            col_out: vec![0.0; n2],
        })
    }

    /// Spectral `y1` half-step: two real rows ride one complex transform
    /// (the diffusion factors are real and even, so real and imaginary
    /// parts never mix).
    fn diffuse_y1_half(&mut self, u: &mut [f64]) {
        let n1 = self.n1;
        let scale = 1.0 / n1 as f64;
        let mut j = 0;
        while j < self.n2 {
            let paired = j + 1 < self.n2;
            {
                let row_a = &u[j * n1..(j + 1) * n1];
                if paired {
                    let row_b = &u[(j + 1) * n1..(j + 2) * n1];
                    for ((z, &a), &b) in
                        self.row_buf.iter_mut().zip(row_a).zip(row_b)
                    {
                        *z = Complex::new(a, b);
                    }
                } else {
                    for (z, &a) in self.row_buf.iter_mut().zip(row_a) {
                        *z = Complex::new(a, 0.0);
                    }
                }
            }
            self.fwd.process(&mut self.row_buf);
            for (z, &f) in self.row_buf.iter_mut().zip(self.y1_factors.iter()) {
                *z *= f;
            }
            self.inv.process(&mut self.row_buf);
            {
                let (head, tail) = u[j * n1..].split_at_mut(n1);
                for (a, z) in head.iter_mut().zip(self.row_buf.iter()) {
                    *a = z.re * scale;
                }
                if paired {
                    for (b, z) in tail[..n1].iter_mut().zip(self.row_buf.iter()) {
                        *b = z.im * scale;
                    }
                }
            }
            j += 2;
        }
    }

    /// Implicit `y2` half-step, vectorized across `y1` within each row.
    fn diffuse_y2_half(&mut self, u: &mut [f64]) {
        let (n1, n2, mu) = (self.n1, self.n2, self.mu);
        // Explicit right-hand side (Neumann ends).
        for j in 0..n2 {
            let base = j * n1;
            let center = if j == 0 || j == n2 - 1 { 1.0 - mu } else { 1.0 - 2.0 * mu };
            for i in 0..n1 {
                let mut v = center * u[base + i];
                if j > 0 {
                    v += mu * u[base - n1 + i];
                }
                if j + 1 < n2 {
                    v += mu * u[base + n1 + i];
                }
                self.rhs[base + i] = v;
            }
        }
        // Thomas forward elimination over rows.
        for i in 0..n1 {
            self.rhs[i] *= self.minv[0];
        }
        for j in 1..n2 {
            let base = j * n1;
            let m = self.minv[j];
            for i in 0..n1 {
                self.rhs[base + i] = (self.rhs[base + i] + mu * self.rhs[base - n1 + i]) * m;
            }
        }
        // Back substitution into the field.
        let last = (n2 - 1) * n1;
        u[last..last + n1].copy_from_slice(&self.rhs[last..last + n1]);
        for j in (0..n2 - 1).rev() {
            let base = j * n1;
            let c = self.back[j];
            for i in 0..n1 {
                u[base + i] = self.rhs[base + i] + c * u[base + n1 + i];
            }
        }
    }

    /// Conservative semi-Lagrangian shift of each `y1`-column by its own
    /// displacement, with monotonized-central reconstruction (plain linear
    /// interpolation would add `O(dy2²/dt)` numerical diffusion along `y2`,
    /// large enough to swamp weak-shear enhancements).
    fn advect(&mut self, u: &mut [f64], displacements: &[f64]) -> Result<(), DirectError> {
        let (n1, n2) = (self.n1, self.n2);
        let max_disp = displacements.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if max_disp > self.dy2 * (1.0 + 1e-12) {
            return Err(DirectError::CFLViolation { max_disp, dy2: self.dy2 });
        }
        let clamp = |j: isize| -> usize { j.clamp(0, n2 as isize - 1) as usize };
        for i in 0..n1 {
            for j in 0..n2 {
                self.col_in[j] = u[j * n1 + i];
            }
            let s = displacements[i] / self.dy2;
            let n = s.floor();
            let a = s - n;
            let n = n as isize;
            let col = &self.col_in;
            let slope = |j: isize| -> f64 {
                let jm = col[clamp(j - 1)];
                let j0 = col[clamp(j)];
                let jp = col[clamp(j + 1)];
                let dc = 0.5 * (jp - jm);
                let dl = 2.0 * (j0 - jm);
                let dr = 2.0 * (jp - j0);
                if dl * dr <= 0.0 {
                    0.0
                } else {
                    dc.signum() * dc.abs().min(dl.abs()).min(dr.abs())
                }
            };
            for (j, out) in self.col_out.iter_mut().enumerate() {
                let j = j as isize;
                let j0 = j - n;
                let u0 = col[clamp(j0)];
                let um = col[clamp(j0 - 1)];
                *out = a * (um + 0.5 * (1.0 - a) * slope(j0 - 1))
                    + (1.0 - a) * (u0 - 0.5 * a * slope(j0));
            }
            for j in 0..n2 {
                u[j * n1 + i] = self.col_out[j];
            }
        }
        Ok(())
    }

    /// Exact logistic flow over a full step.
    fn react(&self, u: &mut [f64]) {
        let e = self.exp_neg_rdt;
        if e == 1.0 {
            return;
        }
        for v in u.iter_mut() {
            *v /= *v + (1.0 - *v) * e;
        }
    }

    /// One full Strang step; returns clip diagnostics.
    pub fn step(
        &mut self,
        field: &mut Field2D,
        shear: ShearInput<'_>,
        sigma: f64,
    ) -> Result<StepDiagnostics, DirectError> {
        let displacements: Option<Vec<f64>> = match shear {
            ShearInput::None => None,
            ShearInput::Frozen(xi) => {
                self.check_shear_grid(xi)?;
                Some(xi.values.iter().map(|&v| sigma * v * self.dt).collect())
            }
            ShearInput::WhiteIncrement(dxi) => {
                self.check_shear_grid(dxi)?;
                Some(dxi.values.iter().map(|&v| sigma * v).collect())
            }
        };
        self.diffuse_y1_half(&mut field.u);
        self.diffuse_y2_half(&mut field.u);
        if let Some(d) = &displacements {
            self.advect(&mut field.u, d)?;
        }
        self.react(&mut field.u);
        self.diffuse_y1_half(&mut field.u);
        self.diffuse_y2_half(&mut field.u);
        let mut excursion = 0.0f64;
        for v in field.u.iter_mut() {
            if *v < 0.0 {
                excursion = excursion.max(-*v);
                *v = 0.0;
            } else if *v > 1.0 {
                excursion = excursion.max(*v - 1.0);
                *v = 1.0;
            }
        }
        field.time += self.dt;
        Ok(StepDiagnostics { clip_excursion: excursion })
    }

    fn check_shear_grid(&self, xi: &FieldRealization) -> Result<(), DirectError> {
        if xi.num_points != self.n1 || (xi.grid_spacing - self.dy1).abs() > 1e-12 * self.dy1 {
            return Err(DirectError::Precondition(
                "shear realization grid does not match the field's y1 grid".into(),
            ));
        }
        Ok(())
    }
}

/// One reaction–diffusion–advection step as a standalone operation (plans
/// its transforms on each call; loops should hold a [`DirectStepper`]).
pub fn step_rd(
    field: &Field2D,
    shear: ShearInput<'_>,
    sigma: f64,
    reaction: &ReactionSpec,
    dt: f64,
) -> Result<Field2D, DirectError> {
    let mut stepper = DirectStepper::new(field, reaction, dt)?;
    let mut next = field.clone();
    stepper.step(&mut next, shear, sigma)?;
    Ok(next)
}

/// A sampled front trajectory in laboratory coordinates.
#[derive(Debug, Clone)]
pub struct FrontTrajectory {
    /// `(time, position, width)` samples with strictly increasing times.
    pub samples: Vec<(f64, f64, f64)>,
    /// Grid resolution of the position measurement (sets fit jitter floors).
    pub position_resolution: f64,
}

fn crossing(profile: &[f64], level: f64, dy2: f64) -> Option<f64> {
    // Last down-crossing, scanning from the far edge backwards: robust to
    // small non-monotonicity behind the front. Rows are cell-centered, so a
    // hard step between two cells is located exactly at their shared face.
    for j in (0..profile.len() - 1).rev() {
        if profile[j] >= level && profile[j + 1] < level {
            let frac = (profile[j] - level) / (profile[j] - profile[j + 1]);
            return Some((j as f64 + frac + 0.5) * dy2);
        }
    }
    None
}

/// Level-crossing front position and 0.1–0.9 width of the `y1`-averaged
/// profile, in laboratory coordinates.
pub fn track_front(field: &Field2D, level: f64) -> Result<(f64, f64), DirectError> {
    let profile = field.averaged_profile();
    let pos = crossing(&profile, level, field.dy2).ok_or(DirectError::NoCrossing)?;
    let hi = crossing(&profile, 0.9, field.dy2);
    let lo = crossing(&profile, 0.1, field.dy2);
    let width = match (lo, hi) {
        (Some(l), Some(h)) => l - h,
        _ => f64::NAN,
    };
    Ok((field.window_offset + pos, width))
}

/// Front position of the `y1`-maximum profile (tip/finger diagnostic).
pub fn track_front_max(field: &Field2D, level: f64) -> Result<f64, DirectError> {
    let profile = field.max_profile();
    let pos = crossing(&profile, level, field.dy2).ok_or(DirectError::NoCrossing)?;
    Ok(field.window_offset + pos)
}

/// Least-squares speed over a time window.
pub fn measure_speed(
    traj: &FrontTrajectory,
    window: (f64, f64),
) -> Result<SpeedEstimate, DirectError> {
    let (t_lo, t_hi) = window;
    let (ts, xs): (Vec<f64>, Vec<f64>) = traj
        .samples
        .iter()
        .filter(|(t, _, _)| *t >= t_lo && *t <= t_hi)
        .map(|(t, x, _)| (*t, *x))
        .unzip();
    if ts.len() < 20 {
        return Err(DirectError::InsufficientSamples { got: ts.len() });
    }
    let fit = stats::ols(&ts, &xs);
    Ok(SpeedEstimate {
        c_star: fit.slope,
        lambda2_star: None,
        uncertainty: fit.slope_se,
        method: Method::Direct,
    })
}

/// Result of the frozen-shear divergence fit.
#[derive(Debug, Clone, Copy)]
pub struct DivergenceFit {
    /// Fitted intercept (the unperturbed speed, asymptotically).
    pub c0_fit: f64,
    /// Fitted coefficient of `√(log t)`.
    pub amplitude_fit: f64,
    pub amplitude_se: f64,
    pub r2: f64,
    /// The law's predicted coefficient `σ·√(2Γ₀(0))`.
    pub predicted_amplitude: f64,
}

/// Fit instantaneous front speeds against `a + b·√(log t)`.
///
/// Positions are first relieved of the universal logarithmic front delay
/// (`+3/(2λ)·ln t` with `λ = √(2f'(0))`); speeds are endpoint differences
/// over non-overlapping dyadic windows, and only windows in the last
/// [`DIVERGENCE_WINDOW_RATIO`]-fold of the run are fitted — earlier ones
/// still pay the ballistic cost of reaching the distant field maxima that
/// drive the law. Weighted least squares with per-window jitter from the
/// position resolution; errors are scaled up when the residuals demand it.
pub fn divergence_fit(
    traj: &FrontTrajectory,
    sigma: f64,
    gamma0: f64,
    reaction: &ReactionSpec,
) -> Result<DivergenceFit, DirectError> {
    let lambda_ref = reaction.c0();
    let corrected: Vec<(f64, f64)> = traj
        .samples
        .iter()
        .filter(|(t, _, _)| *t > 0.0)
        .map(|(t, x, _)| (*t, *x + 1.5 / lambda_ref * t.ln()))
        .collect();
    if corrected.len() < 40 {
        return Err(DirectError::InsufficientTimeSpan(format!(
            "only {} usable samples",
            corrected.len()
        )));
    }
    let t_first = corrected.first().unwrap().0;
    let t_max = corrected.last().unwrap().0;
    if t_max / t_first < MIN_TIME_SPAN_FACTOR {
        return Err(DirectError::InsufficientTimeSpan(format!(
            "span factor {:.1} below {MIN_TIME_SPAN_FACTOR}",
            t_max / t_first
        )));
    }
    // Nearest sample at or after a given time.
    let sample_at = |t: f64| -> Option<(f64, f64)> {
        corrected
            .iter()
            .find(|(ti, _)| *ti >= t)
            .copied()
            .filter(|(ti, _)| *ti <= t_max)
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut sigmas = Vec::new();
    let jitter = (traj.position_resolution / 2.0).max(1e-12);
    let mut w = t_max / DIVERGENCE_WINDOW_RATIO;
    while 2.0 * w <= t_max * (1.0 + 1e-9) {
        if let (Some((t1, x1)), Some((t2, x2))) = (sample_at(w), sample_at(2.0 * w)) {
            if t2 > t1 {
                let t_geo = (t1 * t2).sqrt();
                xs.push(t_geo.ln().max(0.0).sqrt());
                ys.push((x2 - x1) / (t2 - t1));
                sigmas.push(std::f64::consts::SQRT_2 * jitter / (t2 - t1));
            }
        }
        w *= 2.0;
    }
    if xs.len() < 3 {
        return Err(DirectError::InsufficientTimeSpan(format!(
            "only {} dyadic speed windows available",
            xs.len()
        )));
    }
    let fit = stats::wls(&xs, &ys, &sigmas);
    Ok(DivergenceFit {
        c0_fit: fit.intercept,
        amplitude_fit: fit.slope,
        amplitude_se: fit.slope_se,
        r2: fit.r2,
        predicted_amplitude: sigma * (2.0 * gamma0).sqrt(),
    })
}

/// Shear mode for a full simulation run.
#[derive(Debug, Clone)]
pub enum KppShear {
    None,
    Frozen { realization: FieldRealization },
    White { spec: crate::covariance::CovarianceSpec, seed: u64 },
}

/// Configuration of one full KPP run.
#[derive(Debug, Clone)]
pub struct KppRunConfig {
    pub n1: usize,
    pub n2: usize,
    pub dy1: f64,
    pub dy2: f64,
    pub dt: f64,
    pub horizon: f64,
    /// Steps between trajectory samples.
    pub sample_every: usize,
    pub sigma: f64,
    pub reaction: ReactionSpec,
    pub shear: KppShear,
    /// Initial front position in window coordinates.
    pub front_init: f64,
}

/// Outcome of one full KPP run.
#[derive(Debug, Clone)]
pub struct KppRunResult {
    /// Averaged-profile front trajectory (the primary observable).
    pub mean_front: FrontTrajectory,
    /// Maximum-profile front trajectory (finger diagnostic).
    pub tip_front: FrontTrajectory,
    /// Window origin at each mean-front sample.
    pub window_offsets: Vec<f64>,
    /// Largest pre-clip excursion outside `[0, 1]` seen in the run.
    pub max_clip_excursion: f64,
}

/// Run the 2-D KPP equation with the configured shear, tracking the front
/// through a recentering moving window.
pub fn run_kpp(config: &KppRunConfig) -> Result<KppRunResult, DirectError> {
    let mut field = Field2D::planar(
        config.n1,
        config.n2,
        config.dy1,
        config.dy2,
        config.front_init,
    )?;
    let mut stepper = DirectStepper::new(&field, &config.reaction, config.dt)?;
    let mut white_stream = match &config.shear {
        KppShear::White { spec, seed } => Some(WhiteStream::new(
            spec,
            config.dy1,
            config.n1,
            config.dt,
            *seed,
        )?),
        _ => None,
    };
    if let KppShear::Frozen { realization } = &config.shear {
        let max_disp = realization
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max((config.sigma * v * config.dt).abs()));
        if max_disp > config.dy2 {
            return Err(DirectError::CFLViolation { max_disp, dy2: config.dy2 });
        }
    }
    let n_steps = (config.horizon / config.dt).round() as usize;
    let mut mean_samples = Vec::new();
    let mut tip_samples = Vec::new();
    let mut offsets = Vec::new();
    let mut max_clip = 0.0f64;
    for step_idx in 0..n_steps {
        let increment = white_stream.as_mut().map(|s| s.next_increment());
        let shear = match (&config.shear, &increment) {
            (KppShear::None, _) => ShearInput::None,
            (KppShear::Frozen { realization }, _) => ShearInput::Frozen(realization),
            (KppShear::White { .. }, Some(inc)) => ShearInput::WhiteIncrement(inc),
            (KppShear::White { .. }, None) => unreachable!(),
        };
        let diag = stepper.step(&mut field, shear, config.sigma)?;
        max_clip = max_clip.max(diag.clip_excursion);
        // Recenter when the front drifts past the trigger fraction.
        let profile = field.averaged_profile();
        let local = crossing(&profile, FRONT_LEVEL, field.dy2);
        if let Some(pos) = local {
            let trigger = RECENTER_FRACTION * field.n2 as f64 * field.dy2;
            if pos > trigger {
                let anchor = ANCHOR_FRACTION * field.n2 as f64 * field.dy2;
                let k = ((pos - anchor) / field.dy2).floor() as usize;
                if k > 0 && k < field.n2 {
                    let n1 = field.n1;
                    field.u.copy_within(k * n1.., 0);
                    let start = (field.n2 - k) * n1;
                    field.u[start..].fill(0.0);
                    field.window_offset += k as f64 * field.dy2;
                }
            }
        }
        // Overrun: material reaching the leading edge invalidates tracking.
        let leading = field.u[(field.n2 - 1) * field.n1..]
            .iter()
            .sum::<f64>()
            / field.n1 as f64;
        if leading > 0.01 {
            return Err(DirectError::WindowOverrun { time: field.time });
        }
        if (step_idx + 1) % config.sample_every == 0 {
            let (pos, width) = track_front(&field, FRONT_LEVEL)?;
            mean_samples.push((field.time, pos, width));
            offsets.push(field.window_offset);
            if let Ok(tip) = track_front_max(&field, FRONT_LEVEL) {
                tip_samples.push((field.time, tip, f64::NAN));
            }
        }
    }
    Ok(KppRunResult {
        mean_front: FrontTrajectory {
            samples: mean_samples,
            position_resolution: config.dy2,
        },
        tip_front: FrontTrajectory {
            samples: tip_samples,
            position_resolution: config.dy2,
        },
        window_offsets: offsets,
        max_clip_excursion: max_clip,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{CovarianceSpec, Family, Temporal};
    use crate::field::sample_static;

    fn reaction() -> ReactionSpec {
        ReactionSpec::new(1.0).unwrap()
    }

    fn step_field(front_at: f64) -> Field2D {
        Field2D::planar(8, 64, 0.25, 0.25, front_at).unwrap()
    }

    #[test]
    fn exact_step_position_is_recovered() {
        let mut f = step_field(0.0);
        // Hard step with its discontinuity at y2 = 3.0 (a cell face).
        for j in 0..f.n2 {
            let v = if (j as f64 + 0.5) * f.dy2 < 3.0 { 1.0 } else { 0.0 };
            f.u[j * f.n1..(j + 1) * f.n1].fill(v);
        }
        let (pos, _) = track_front(&f, 0.5).unwrap();
        approx::assert_abs_diff_eq!(pos, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn translation_shifts_position_exactly() {
        let f = step_field(5.0);
        let mut g = step_field(5.0);
        g.window_offset = 7.25;
        let (p0, w0) = track_front(&f, 0.5).unwrap();
        let (p1, w1) = track_front(&g, 0.5).unwrap();
        approx::assert_abs_diff_eq!(p1 - p0, 7.25, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(w0, w1, epsilon = 1e-12);
    }

    #[test]
    fn tanh_center_matches_within_half_cell() {
        let center = 7.83;
        let mut f = step_field(0.0);
        for j in 0..f.n2 {
            let y2 = (j as f64 + 0.5) * f.dy2;
            let v = 0.5 * (1.0 - ((y2 - center) / 1.3).tanh());
            f.u[j * f.n1..(j + 1) * f.n1].fill(v);
        }
        let (pos, width) = track_front(&f, 0.5).unwrap();
        assert!((pos - center).abs() < 0.5 * f.dy2);
        // 0.1–0.9 width of a tanh of scale 1.3: 1.3·(atanh(0.8) − atanh(−0.8)).
        let expected = 1.3 * 2.0 * 0.8f64.atanh();
        assert!((width - expected).abs() < f.dy2);
    }

    #[test]
    fn no_crossing_is_reported() {
        let mut f = step_field(0.0);
        f.u.fill(0.9);
        assert!(matches!(track_front(&f, 0.5), Err(DirectError::NoCrossing)));
    }

    #[test]
    fn mass_is_conserved_without_reaction() {
        // f ≡ 0 via a zero-rate logistic flow; Gaussian bump well inside.
        let mut f = step_field(0.0);
        for j in 0..f.n2 {
            let y2 = j as f64 * f.dy2 - 8.0;
            let v = 0.8 * (-y2 * y2).exp();
            f.u[j * f.n1..(j + 1) * f.n1].fill(v);
        }
        let zero_rate = ReactionSpec { f_prime_0: 1e-300 };
        let mut stepper = DirectStepper::new(&f, &zero_rate, 0.02).unwrap();
        let m0 = f.mass();
        for _ in 0..50 {
            stepper.step(&mut f, ShearInput::None, 0.0).unwrap();
        }
        approx::assert_relative_eq!(f.mass(), m0, max_relative = 1e-8);
    }

    /// Pulled fronts converge from below: the mean slope over a finite
    /// window [t1, t2] trails the limit by (3/(2λ0))·ln(t2/t1)/(t2−t1).
    fn log_delayed_slope(c0: f64, t1: f64, t2: f64) -> f64 {
        c0 - 1.5 / c0 * (t2 / t1).ln() / (t2 - t1)
    }

    #[test]
    fn unsheared_speed_matches_log_corrected_limit() {
        let config = KppRunConfig {
            n1: 4,
            n2: 360,
            dy1: 0.25,
            dy2: 1.0 / 6.0,
            dt: 0.02,
            horizon: 30.0,
            sample_every: 10,
            sigma: 0.0,
            reaction: reaction(),
            shear: KppShear::None,
            front_init: 10.0,
        };
        let result = run_kpp(&config).unwrap();
        let speed = measure_speed(&result.mean_front, (10.0, 30.0)).unwrap();
        let c0 = 2.0f64.sqrt();
        let expected = log_delayed_slope(c0, 10.0, 30.0);
        assert!(
            (speed.c_star - expected).abs() / expected < 0.005,
            "speed {} vs delayed {}",
            speed.c_star,
            expected
        );
        // Approach is from below and already within 5% of the limit.
        assert!(speed.c_star < c0 && (speed.c_star - c0).abs() / c0 < 0.05);
        assert!(result.max_clip_excursion < 1e-10);
    }

    #[test]
    fn constant_shear_adds_exactly_to_the_speed() {
        let spec = CovarianceSpec::new(Family::Gaussian, 1.0, 1.0, Temporal::Static).unwrap();
        let mut xi = sample_static(&spec, 0.5, 16, 1).unwrap();
        xi.values.fill(1.0);
        let sigma = 0.5;
        let base = KppRunConfig {
            n1: 16,
            n2: 420,
            dy1: 0.5,
            dy2: 1.0 / 6.0,
            dt: 0.02,
            horizon: 30.0,
            sample_every: 10,
            sigma: 0.0,
            reaction: reaction(),
            shear: KppShear::None,
            front_init: 10.0,
        };
        let sheared = KppRunConfig {
            sigma,
            shear: KppShear::Frozen { realization: xi },
            ..base.clone()
        };
        // A uniform shear is a Galilean boost: it shifts the measured slope
        // by exactly σ·ξ, cancelling the logarithmic front delay.
        let flat = run_kpp(&base).unwrap();
        let boosted = run_kpp(&sheared).unwrap();
        let window = (10.0, 30.0);
        let c_flat = measure_speed(&flat.mean_front, window).unwrap().c_star;
        let c_boost = measure_speed(&boosted.mean_front, window).unwrap().c_star;
        assert!(
            (c_boost - c_flat - sigma).abs() < 0.01,
            "difference {} vs shift {}",
            c_boost - c_flat,
            sigma
        );
    }

    #[test]
    fn linear_trajectory_slope_is_exact() {
        let samples: Vec<(f64, f64, f64)> =
            (0..60).map(|i| (i as f64, 1.7 * i as f64 + 3.0, 1.0)).collect();
        let traj = FrontTrajectory { samples, position_resolution: 1e-6 };
        let e = measure_speed(&traj, (0.0, 60.0)).unwrap();
        approx::assert_abs_diff_eq!(e.c_star, 1.7, epsilon = 1e-12);
    }

    #[test]
    fn noisy_trajectory_slope_within_three_se() {
        use rand::Rng;
        let mut gen = crate::rng::stream(5, 0, crate::rng::Purpose::McPaths);
        let truth = 1.3;
        let samples: Vec<(f64, f64, f64)> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.5;
                let noise: f64 = gen.sample(rand_distr::StandardNormal);
                (t, truth * t + 0.01 * noise, 1.0)
            })
            .collect();
        let traj = FrontTrajectory { samples, position_resolution: 1e-6 };
        let e = measure_speed(&traj, (0.0, 100.0)).unwrap();
        assert!((e.c_star - truth).abs() < 3.0 * e.uncertainty);
    }

    #[test]
    fn speed_measurement_needs_enough_samples() {
        let samples: Vec<(f64, f64, f64)> =
            (0..10).map(|i| (i as f64, i as f64, 1.0)).collect();
        let traj = FrontTrajectory { samples, position_resolution: 1e-6 };
        assert!(matches!(
            measure_speed(&traj, (0.0, 10.0)),
            Err(DirectError::InsufficientSamples { got: 10 })
        ));
    }

    #[test]
    fn synthetic_divergence_law_is_recovered() {
        // Positions integrated from c(t) = √2 + 0.5·√(2·log t) on t ∈ [1, 400],
        // with the logarithmic delay added so the fit's correction removes it.
        let r = reaction();
        let lambda_ref = r.c0();
        let mut samples = Vec::new();
        let mut x = 0.0;
        let dt = 0.01;
        let mut t = 1.0f64;
        while t <= 400.0 {
            let c = 2.0f64.sqrt() + 0.5 * (2.0 * t.ln()).sqrt();
            x += c * dt;
            t += dt;
            samples.push((t, x - 1.5 / lambda_ref * t.ln(), 1.0));
        }
        let traj = FrontTrajectory { samples, position_resolution: 1e-9 };
        let fit = divergence_fit(&traj, 0.5, 1.0, &r).unwrap();
        let expected_b = 0.5 * 2.0f64.sqrt();
        assert!(
            (fit.amplitude_fit - expected_b).abs() / expected_b < 0.02,
            "b = {} vs {}",
            fit.amplitude_fit,
            expected_b
        );
        assert!((fit.c0_fit - 2.0f64.sqrt()).abs() / 2.0f64.sqrt() < 0.02);
        assert!(fit.r2 > 0.99);
    }

    #[test]
    fn divergence_fit_needs_two_decades() {
        let samples: Vec<(f64, f64, f64)> =
            (1..100).map(|i| (1.0 + i as f64 * 0.5, i as f64, 1.0)).collect();
        let traj = FrontTrajectory { samples, position_resolution: 1e-6 };
        assert!(matches!(
            divergence_fit(&traj, 1.0, 1.0, &reaction()),
            Err(DirectError::InsufficientTimeSpan(_))
        ));
    }

    #[test]
    fn cfl_violation_is_detected() {
        let f = step_field(5.0);
        let spec = CovarianceSpec::new(Family::Gaussian, 1.0, 1.0, Temporal::Static).unwrap();
        let xi = FieldRealization {
            grid_spacing: 0.25,
            num_points: 8,
            values: vec![40.0; 8],
            seed: 0,
            spec,
        };
        // displacement = σ·ξ·dt = 1·40·0.02 = 0.8 > dy2 = 0.25.
        let out = step_rd(&f, ShearInput::Frozen(&xi), 1.0, &reaction(), 0.02);
        assert!(matches!(out, Err(DirectError::CFLViolation { .. })));
    }
}
