//! Closed-form oracles for the 2-D stepper: heat-kernel spreading along both
//! axes (validating the spectral and Crank–Nicolson arms independently),
//! conservative sub-cell advection, and wall symmetry.

use shearfront::direct::{DirectStepper, Field2D, ShearInput};
use shearfront::field::FieldRealization;
use shearfront::covariance::{CovarianceSpec, Family, Temporal};
use shearfront::variational::ReactionSpec;

/// Reaction slope small enough that growth over the test horizon is
/// negligible while staying a valid positive rate.
fn inert_reaction() -> ReactionSpec {
    ReactionSpec { f_prime_0: 1e-300 }
}

fn gaussian_bump(y: f64, center: f64, s: f64) -> f64 {
    0.5 * (-(y - center) * (y - center) / (2.0 * s * s)).exp()
}

#[test]
fn heat_kernel_spreading_along_y2() {
    // u_t = ½Δu: a Gaussian of width s0 widens to s(T) = √(s0² + T) and its
    // peak drops by s0/s(T). Uniform in y1 isolates the Crank–Nicolson arm.
    let (n1, n2, dy1, dy2) = (4usize, 400usize, 0.25f64, 0.1f64);
    let mut f = Field2D::planar(n1, n2, dy1, dy2, 5.0).unwrap();
    let (mu, s0, t_end) = (20.0, 1.5, 1.0);
    for j in 0..n2 {
        let y2 = (j as f64 + 0.5) * dy2;
        let v = gaussian_bump(y2, mu, s0);
        f.u[j * n1..(j + 1) * n1].fill(v);
    }
    let dt = 0.01;
    let mut stepper = DirectStepper::new(&f, &inert_reaction(), dt).unwrap();
    for _ in 0..(t_end / dt).round() as usize {
        stepper.step(&mut f, ShearInput::None, 0.0).unwrap();
    }
    let s_t = (s0 * s0 + t_end).sqrt();
    let profile = f.averaged_profile();
    let mut max_err = 0.0f64;
    for (j, &got) in profile.iter().enumerate() {
        let y2 = (j as f64 + 0.5) * dy2;
        let want = 0.5 * s0 / s_t
            * (-(y2 - mu) * (y2 - mu) / (2.0 * s_t * s_t)).exp();
        max_err = max_err.max((got - want).abs());
    }
    assert!(max_err < 1e-3 * 0.5, "y2 heat-kernel error {max_err}");
}

#[test]
fn heat_kernel_spreading_along_y1() {
    // The same spreading law along the periodic axis isolates the spectral
    // arm; the bump is narrow enough that periodic images are negligible.
    let (n1, n2, dy1, dy2) = (128usize, 16usize, 0.25f64, 0.25f64);
    let mut f = Field2D::planar(n1, n2, dy1, dy2, 2.0).unwrap();
    let (mu, s0, t_end) = (16.0, 1.2, 1.0);
    for j in 0..n2 {
        for i in 0..n1 {
            let y1 = i as f64 * dy1;
            f.u[j * n1 + i] = gaussian_bump(y1, mu, s0);
        }
    }
    let dt = 0.01;
    let mut stepper = DirectStepper::new(&f, &inert_reaction(), dt).unwrap();
    for _ in 0..(t_end / dt).round() as usize {
        stepper.step(&mut f, ShearInput::None, 0.0).unwrap();
    }
    let s_t = (s0 * s0 + t_end).sqrt();
    let mut max_err = 0.0f64;
    for i in 0..n1 {
        let y1 = i as f64 * dy1;
        let got = f.u[8 * n1 + i];
        let want = 0.5 * s0 / s_t
            * (-(y1 - mu) * (y1 - mu) / (2.0 * s_t * s_t)).exp();
        max_err = max_err.max((got - want).abs());
    }
    assert!(max_err < 3e-3 * 0.5, "y1 heat-kernel error {max_err}");
}

#[test]
fn advection_is_conservative_and_subcell_accurate() {
    // A uniform shear displaces by σ·ξ·dt per step, deliberately off-grid.
    let (n1, n2, dy1, dy2) = (8usize, 400usize, 0.5f64, 0.1f64);
    let mut f = Field2D::planar(n1, n2, dy1, dy2, 5.0).unwrap();
    let (mu, s0) = (15.0, 1.5);
    for j in 0..n2 {
        let y2 = (j as f64 + 0.5) * dy2;
        f.u[j * n1..(j + 1) * n1].fill(gaussian_bump(y2, mu, s0));
    }
    let spec = CovarianceSpec::new(Family::Gaussian, 1.0, 1.0, Temporal::Static).unwrap();
    let xi = FieldRealization {
        grid_spacing: dy1,
        num_points: n1,
        values: vec![1.0; n1],
        seed: 0,
        spec,
    };
    // Kill diffusion by brute force: rebuild the bump each step would hide
    // errors, so instead use a shear-only comparison run: diffusion acts
    // identically on both, and the sheared result must equal the unsheared
    // result translated by the accumulated displacement.
    let dt = 0.037;
    let sigma = 1.3;
    let n_steps = 10usize;
    let mut sheared = f.clone();
    let mut stepper_a = DirectStepper::new(&f, &inert_reaction(), dt).unwrap();
    let mut stepper_b = DirectStepper::new(&f, &inert_reaction(), dt).unwrap();
    let mass0 = sheared.mass();
    for _ in 0..n_steps {
        stepper_a.step(&mut f, ShearInput::None, 0.0).unwrap();
        stepper_b.step(&mut sheared, ShearInput::Frozen(&xi), sigma).unwrap();
    }
    // Flux form conserves mass to round-off.
    assert!(
        ((sheared.mass() - mass0) / mass0).abs() < 1e-12,
        "advection mass drift {}",
        sheared.mass() - mass0
    );
    let shift = sigma * 1.0 * dt * n_steps as f64;
    let plain = f.averaged_profile();
    let moved = sheared.averaged_profile();
    // Compare against the analytically translated unsheared profile
    // (both carry identical diffusion), via the same Gaussian closed form.
    let s_t = (s0 * s0 + dt * n_steps as f64).sqrt();
    let mut max_err_moved = 0.0f64;
    let mut max_err_plain = 0.0f64;
    for j in 0..n2 {
        let y2 = (j as f64 + 0.5) * dy2;
        let want_plain = 0.5 * s0 / s_t
            * (-(y2 - mu) * (y2 - mu) / (2.0 * s_t * s_t)).exp();
        let want_moved = 0.5 * s0 / s_t
            * (-(y2 - mu - shift) * (y2 - mu - shift) / (2.0 * s_t * s_t)).exp();
        max_err_plain = max_err_plain.max((plain[j] - want_plain).abs());
        max_err_moved = max_err_moved.max((moved[j] - want_moved).abs());
    }
    // The sheared run may add limiter error on top of the diffusion error.
    assert!(max_err_plain < 1e-3, "diffusion-only error {max_err_plain}");
    assert!(max_err_moved < 1e-2, "advected profile error {max_err_moved}");
}

#[test]
fn neumann_walls_preserve_reflection_symmetry() {
    let (n1, n2, dy1, dy2) = (4usize, 64usize, 0.25f64, 0.25f64);
    let mut f = Field2D::planar(n1, n2, dy1, dy2, 2.0).unwrap();
    let center = 0.5 * n2 as f64 * dy2;
    for j in 0..n2 {
        let y2 = (j as f64 + 0.5) * dy2;
        f.u[j * n1..(j + 1) * n1].fill(gaussian_bump(y2, center, 2.0));
    }
    let reaction = ReactionSpec { f_prime_0: 1.0 };
    let mut stepper = DirectStepper::new(&f, &reaction, 0.02).unwrap();
    for _ in 0..100 {
        stepper.step(&mut f, ShearInput::None, 0.0).unwrap();
    }
    for j in 0..n2 / 2 {
        let a = f.u[j * n1];
        let b = f.u[(n2 - 1 - j) * n1];
        assert!(
            (a - b).abs() < 1e-12,
            "asymmetry at row {j}: {a} vs {b}"
        );
    }
}
