//! Experiment dispatch: validated config in, CSV outputs plus a digest
//! manifest out. Statistical-quality problems become manifest warnings;
//! only hard errors abort a run.

use crate::anderson::{
    self, AndersonError, LyapunovEstimate, PamConfig, PamNoise,
};
use crate::config::{Experiment, ExperimentConfig};
use crate::covariance::{CovarianceSpec, Temporal};
use crate::direct::{
    divergence_fit, measure_speed, run_kpp, FrontTrajectory, KppRunConfig, KppShear,
};
use crate::extremes::running_max;
use crate::field::{empirical_covariance, sample_static, sample_white_increment};
use crate::harness::{fit_linear_growth, fit_quadratic_enhancement};
use crate::manifest::RunManifest;
use crate::stats;
use crate::variational::{
    minimize_speed, small_sigma_curve, GammaStarNode, GammaStarTable, ReactionSpec,
};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Field(#[from] crate::field::FieldError),
    #[error("{0}")]
    Anderson(String),
    #[error(transparent)]
    Variational(#[from] crate::variational::VariationalError),
    #[error(transparent)]
    Direct(#[from] crate::direct::DirectError),
    #[error(transparent)]
    Harness(#[from] crate::harness::HarnessError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad table: {0}")]
    BadTable(String),
}

impl From<AndersonError> for RunnerError {
    fn from(e: AndersonError) -> Self {
        RunnerError::Anderson(e.to_string())
    }
}

/// Map `f` over `items`, preserving order, with up to `workers` threads.
/// Ensemble members are independent, so any schedule gives identical output.
pub fn parallel_map<T, R, F>(workers: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let results: Mutex<Vec<Option<R>>> =
        Mutex::new((0..items.len()).map(|_| None).collect());
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("worker completed every item"))
        .collect()
}

/// CSV writer with a schema-id comment line; floats are written in
/// shortest-round-trip form so reruns are byte-identical.
struct CsvOut {
    writer: csv::Writer<std::fs::File>,
    path: PathBuf,
}

impl CsvOut {
    fn create(dir: &Path, name: &str, schema: &str, header: &[&str]) -> Result<Self, RunnerError> {
        let path = dir.join(name);
        let mut file = std::fs::File::create(&path)?;
        use std::io::Write;
        writeln!(file, "# schema: shearfront.{schema}.v1")?;
        let mut writer = csv::WriterBuilder::new().from_writer(file);
        writer.write_record(header)?;
        Ok(Self { writer, path })
    }

    fn row(&mut self, fields: &[String]) -> Result<(), RunnerError> {
        self.writer.write_record(fields)?;
        Ok(())
    }

    fn finish(mut self, manifest: &mut RunManifest) -> Result<(), RunnerError> {
        self.writer.flush()?;
        drop(self.writer);
        manifest.record_output(&self.path)?;
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Resolve the output directory: explicit config value, then the
/// `SHEARFRONT_OUT` environment variable, then `./out`.
pub fn resolve_output_dir(config: &ExperimentConfig) -> PathBuf {
    config
        .output_dir
        .clone()
        .or_else(|| std::env::var_os("SHEARFRONT_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Default Anderson numerics graded by diffusivity: slow mixing (small κ)
/// needs longer horizons and wider grids to self-average.
pub fn pam_template_for_kappa(
    kappa: f64,
    spec: &CovarianceSpec,
    config: &ExperimentConfig,
) -> PamConfig {
    let n = &config.numerics;
    let (num_points, horizon, dt) = if kappa >= 10.0 {
        (2048, 80.0, 0.02)
    } else if kappa >= 1.0 {
        (4096, 150.0, 0.02)
    } else if kappa >= 0.1 {
        (8192, 300.0, 0.05)
    } else {
        (8192, 400.0, 0.05)
    };
    let grid_spacing = n
        .grid_spacing
        .unwrap_or(if config.lattice { 1.0 } else { spec.corr_length / 4.0 });
    PamConfig {
        kappa,
        coupling: 1.0,
        dt: n.dt.unwrap_or(dt),
        grid_spacing,
        num_points: n.num_points.unwrap_or(num_points),
        horizon: n.horizon.unwrap_or(horizon),
        burn_in_fraction: n.burn_in_fraction.unwrap_or(0.2),
        noise: if config.lattice {
            PamNoise::LatticeIid
        } else {
            PamNoise::Continuum(*spec)
        },
    }
}

/// Read a tabulated effective potential from its interchange CSV.
pub fn read_gamma_table(path: &Path) -> Result<GammaStarTable, RunnerError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let mut nodes = Vec::new();
    for record in reader.deserialize::<GammaStarNode>() {
        nodes.push(record?);
    }
    GammaStarTable::new(nodes).map_err(|e| RunnerError::BadTable(e.to_string()))
}

/// Execute one experiment end to end.
pub fn run(config: &ExperimentConfig, workers: usize) -> Result<RunManifest, RunnerError> {
    config.validate()?;
    let out_dir = resolve_output_dir(config);
    std::fs::create_dir_all(&out_dir)?;
    let seeds = config.seeds.resolve();
    let mut manifest = RunManifest::new(
        config.experiment.to_string(),
        config.to_toml_string()?,
        seeds.clone(),
    );
    match config.experiment {
        Experiment::CovarianceCheck => covariance_check(config, &out_dir, &mut manifest)?,
        Experiment::LyapunovSweep => lyapunov_sweep(config, &out_dir, &mut manifest, workers)?,
        Experiment::GammaStarTable => gamma_star_table(config, &out_dir, &mut manifest, workers)?,
        Experiment::SpeedSweep => speed_sweep(config, &out_dir, &mut manifest)?,
        Experiment::DirectRun => direct_run(config, &out_dir, &mut manifest, workers)?,
        Experiment::FrozenDivergence => frozen_divergence(config, &out_dir, &mut manifest, workers)?,
        Experiment::ExtremesCheck => extremes_check(config, &out_dir, &mut manifest, workers)?,
    }
    manifest.finish();
    manifest.write_json(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

fn covariance_check(
    config: &ExperimentConfig,
    out_dir: &Path,
    manifest: &mut RunManifest,
) -> Result<(), RunnerError> {
    let spec = config.covariance;
    let n = &config.numerics;
    let h = n.grid_spacing.unwrap();
    let np = n.num_points.unwrap();
    let seeds = config.seeds.resolve();
    let (realizations, scale) = match spec.temporal {
        Temporal::Static => (
            seeds
                .iter()
                .map(|&s| sample_static(&spec, h, np, s))
                .collect::<Result<Vec<_>, _>>()?,
            1.0,
        ),
        Temporal::White => {
            let dt = n.dt.unwrap();
            let mut v = Vec::new();
            // Several increments per seed: they are independent by design.
            for &s in &seeds {
                for idx in 0..8u64 {
                    v.push(sample_white_increment(&spec, h, np, dt, s, idx)?);
                }
            }
            (v, 1.0 / dt)
        }
    };
    let max_lag = ((4.0 * spec.corr_length / h).ceil() as usize).min(np / 2 - 1);
    let emp = empirical_covariance(&realizations, max_lag)?;
    let mut csv = CsvOut::create(
        out_dir,
        "covariance.csv",
        "covariance",
        &["lag", "distance", "empirical", "target", "std_error"],
    )?;
    let mut worst_z = 0.0f64;
    for lag in 0..=max_lag {
        let distance = lag as f64 * h;
        let empirical = emp.estimates[lag] * scale;
        let se = emp.std_errors[lag] * scale;
        let target = spec.evaluate(distance);
        if se > 0.0 {
            worst_z = worst_z.max((empirical - target).abs() / se);
        }
        csv.row(&[
            lag.to_string(),
            fmt(distance),
            fmt(empirical),
            fmt(target),
            fmt(se),
        ])?;
    }
    csv.finish(manifest)?;
    let mut summary = CsvOut::create(
        out_dir,
        "covariance_summary.csv",
        "covariance_summary",
        &["lags_checked", "worst_z", "pass"],
    )?;
    let pass = worst_z <= 4.0;
    summary.row(&[(max_lag + 1).to_string(), fmt(worst_z), pass.to_string()])?;
    summary.finish(manifest)?;
    if !pass {
        manifest
            .warnings
            .push(format!("covariance check worst z-score {worst_z:.2} exceeds 4"));
    }
    Ok(())
}

/// Run one rate node, downgrading a poor trajectory fit to a warning.
fn rate_node(
    kappa: f64,
    template: &PamConfig,
    seeds: &[u64],
) -> Result<(LyapunovEstimate, Option<String>), AndersonError> {
    let mut cfg = template.clone();
    cfg.kappa = kappa;
    match anderson::lyapunov_exponent(&cfg, seeds) {
        Ok(e) => Ok((e, None)),
        Err(AndersonError::PoorFit { estimate }) => {
            let w = format!(
                "rate at kappa={kappa}: worst trajectory R^2 {:.3} below {} (estimate retained)",
                estimate.fit_r2,
                anderson::R2_GATE
            );
            Ok((estimate, Some(w)))
        }
        Err(e) => Err(e),
    }
}

fn lyapunov_sweep(
    config: &ExperimentConfig,
    out_dir: &Path,
    manifest: &mut RunManifest,
    workers: usize,
) -> Result<(), RunnerError> {
    let seeds = config.seeds.resolve();
    let spec = config.covariance;
    let results = parallel_map(workers, &config.kappa_grid, |&kappa| {
        let template = pam_template_for_kappa(kappa, &spec, config);
        rate_node(kappa, &template, &seeds)
    });
    let mut csv = CsvOut::create(
        out_dir,
        "lyapunov.csv",
        "lyapunov",
        &["kappa", "gamma", "std_error", "fit_r2", "horizon", "n_seeds"],
    )?;
    let mut samples = Vec::new();
    for (&kappa, result) in config.kappa_grid.iter().zip(results) {
        let (est, warning) = match result {
            Ok(pair) => pair,
            Err(e) => return Err(e.into()),
        };
        if let Some(w) = warning {
            manifest.warnings.push(w);
        }
        csv.row(&[
            fmt(kappa),
            fmt(est.value),
            fmt(est.std_error),
            fmt(est.fit_r2),
            fmt(est.horizon),
            est.n_seeds.to_string(),
        ])?;
        samples.push((kappa, est));
    }
    csv.finish(manifest)?;
    match anderson::fit_lyapunov_asymptotics(&samples) {
        Ok(fit) => {
            let mut csv = CsvOut::create(
                out_dir,
                "lyapunov_asymptotics.csv",
                "lyapunov_asymptotics",
                &[
                    "c1",
                    "p",
                    "p_std_error",
                    "saturation_gamma",
                    "saturation_se",
                    "kappa0",
                    "gamma0",
                ],
            )?;
            csv.row(&[
                fmt(fit.c1),
                fmt(fit.p),
                fmt(fit.p_std_error),
                fmt(fit.saturation_gamma),
                fmt(fit.saturation_se),
                fmt(fit.kappa0),
                fmt(fit.gamma0),
            ])?;
            csv.finish(manifest)?;
        }
        Err(e) => manifest
            .warnings
            .push(format!("asymptotic fit unavailable: {e}")),
    }
    Ok(())
}

fn gamma_star_table(
    config: &ExperimentConfig,
    out_dir: &Path,
    manifest: &mut RunManifest,
    workers: usize,
) -> Result<(), RunnerError> {
    let seeds = config.seeds.resolve();
    let spec = config.covariance;
    let results = parallel_map(workers, &config.sigma_lambda_grid, |&s| {
        if s == 0.0 {
            let template = pam_template_for_kappa(1.0, &spec, config);
            return anderson::gamma_star(0.0, &template, &seeds).map(|e| (e, None));
        }
        let kappa_eff = 1.0 / (2.0 * s * s);
        let template = pam_template_for_kappa(kappa_eff, &spec, config);
        match anderson::gamma_star(s, &template, &seeds) {
            Ok(e) => Ok((e, None)),
            Err(AndersonError::PoorFit { estimate }) => {
                let w = format!(
                    "potential at coupling {s}: worst trajectory R^2 {:.3} below {} \
                     (estimate retained)",
                    estimate.fit_r2,
                    anderson::R2_GATE
                );
                Ok((estimate, Some(w)))
            }
            Err(e) => Err(e),
        }
    });
    let mut csv = CsvOut::create(
        out_dir,
        "gamma_star.csv",
        "gamma_star",
        &["sigma_lambda", "gamma_star", "std_error"],
    )?;
    let mut diag = CsvOut::create(
        out_dir,
        "gamma_star_diagnostics.csv",
        "gamma_star_diagnostics",
        &["sigma_lambda", "kappa_eff", "fit_r2", "horizon", "n_seeds"],
    )?;
    for (&s, result) in config.sigma_lambda_grid.iter().zip(results) {
        let (est, warning) = result.map_err(RunnerError::from)?;
        if let Some(w) = warning {
            manifest.warnings.push(w);
        }
        csv.row(&[fmt(s), fmt(est.value), fmt(est.std_error)])?;
        let kappa_eff = if s > 0.0 { 1.0 / (2.0 * s * s) } else { f64::INFINITY };
        diag.row(&[
            fmt(s),
            fmt(kappa_eff),
            fmt(est.fit_r2),
            fmt(est.horizon),
            est.n_seeds.to_string(),
        ])?;
    }
    csv.finish(manifest)?;
    diag.finish(manifest)?;
    Ok(())
}

fn speed_sweep(
    config: &ExperimentConfig,
    out_dir: &Path,
    manifest: &mut RunManifest,
) -> Result<(), RunnerError> {
    let table = read_gamma_table(config.gamma_table.as_ref().unwrap())?;
    let reaction = ReactionSpec::new(config.f_prime_0)
        .map_err(RunnerError::Variational)?;
    let variance = config.covariance.variance;
    let mut csv = CsvOut::create(
        out_dir,
        "speeds.csv",
        "speeds",
        &[
            "sigma",
            "c_star",
            "lambda2_star",
            "uncertainty",
            "method",
            "small_sigma_prediction",
        ],
    )?;
    let mut fit_rows = Vec::new();
    for &sigma in &config.sigma_grid {
        match minimize_speed(&table, &reaction, sigma) {
            Ok(e) => {
                let pred = small_sigma_curve(&[sigma], variance, &reaction)[0];
                csv.row(&[
                    fmt(sigma),
                    fmt(e.c_star),
                    e.lambda2_star.map(fmt).unwrap_or_default(),
                    fmt(e.uncertainty),
                    e.method.to_string(),
                    fmt(pred),
                ])?;
                fit_rows.push((sigma, e.c_star, e.uncertainty));
            }
            Err(e) => manifest
                .warnings
                .push(format!("speed at sigma={sigma} unavailable: {e}")),
        }
    }
    csv.finish(manifest)?;
    let small: Vec<(f64, f64, f64)> = fit_rows
        .iter()
        .cloned()
        .filter(|(s, _, _)| *s > 0.0 && s * variance.sqrt() <= 0.3)
        .collect();
    if small.len() >= 4 {
        match fit_quadratic_enhancement(&small, &reaction) {
            Ok(fit) => {
                let mut csv = CsvOut::create(
                    out_dir,
                    "enhancement.csv",
                    "enhancement",
                    &["alpha_hat", "std_error", "ci_lo", "ci_hi"],
                )?;
                csv.row(&[fmt(fit.value), fmt(fit.std_error), fmt(fit.ci.0), fmt(fit.ci.1)])?;
                csv.finish(manifest)?;
            }
            Err(e) => manifest.warnings.push(format!("enhancement fit: {e}")),
        }
    }
    let large: Vec<(f64, f64, f64)> =
        fit_rows.iter().cloned().filter(|(s, _, _)| *s >= 4.0).collect();
    if large.len() >= 4 {
        match fit_linear_growth(&large) {
            Ok(fit) => {
                let mut csv = CsvOut::create(
                    out_dir,
                    "growth.csv",
                    "growth",
                    &["slope_loglog", "std_error", "ci_lo", "ci_hi"],
                )?;
                csv.row(&[fmt(fit.value), fmt(fit.std_error), fmt(fit.ci.0), fmt(fit.ci.1)])?;
                csv.finish(manifest)?;
            }
            Err(e) => manifest.warnings.push(format!("growth fit: {e}")),
        }
    }
    Ok(())
}

fn kpp_config_from(
    config: &ExperimentConfig,
    sigma: f64,
    shear: KppShear,
) -> KppRunConfig {
    let n = &config.numerics;
    let dt = n.dt.unwrap();
    let ny2 = n.ny2.unwrap();
    let dy2 = n.dy2.unwrap();
    KppRunConfig {
        n1: n.ny1.unwrap(),
        n2: ny2,
        dy1: n.dy1.unwrap(),
        dy2,
        dt,
        horizon: n.horizon.unwrap(),
        sample_every: n
            .sample_every
            .unwrap_or_else(|| ((0.25 / dt).round() as usize).max(1)),
        sigma,
        reaction: ReactionSpec { f_prime_0: config.f_prime_0 },
        shear,
        front_init: n.front_init.unwrap_or(0.25 * ny2 as f64 * dy2),
    }
}

fn write_trajectory(
    out_dir: &Path,
    name: &str,
    traj: &FrontTrajectory,
    offsets: Option<&[f64]>,
    manifest: &mut RunManifest,
) -> Result<(), RunnerError> {
    let mut csv = CsvOut::create(
        out_dir,
        name,
        "trajectory",
        &["time", "position", "width", "window_offset"],
    )?;
    for (i, (t, x, w)) in traj.samples.iter().enumerate() {
        let off = offsets.and_then(|o| o.get(i)).copied();
        csv.row(&[
            fmt(*t),
            fmt(*x),
            fmt(*w),
            off.map(fmt).unwrap_or_default(),
        ])?;
    }
    csv.finish(manifest)
}

fn direct_run(
    config: &ExperimentConfig,
    out_dir: &Path,
    manifest: &mut RunManifest,
    workers: usize,
) -> Result<(), RunnerError> {
    let seeds = config.seeds.resolve();
    let spec = config.covariance;
    let mut speed_csv = CsvOut::create(
        out_dir,
        "direct_speeds.csv",
        "direct_speeds",
        &["sigma", "seed", "c_star", "uncertainty"],
    )?;
    let mut summary_csv = CsvOut::create(
        out_dir,
        "direct_summary.csv",
        "direct_summary",
        &["sigma", "mean_speed", "sem", "cv", "n_seeds"],
    )?;
    for &sigma in &config.sigma_grid {
        let runs = parallel_map(workers, &seeds, |&seed| {
            let shear = if sigma == 0.0 {
                KppShear::None
            } else {
                KppShear::White { spec, seed }
            };
            run_kpp(&kpp_config_from(config, sigma, shear))
        });
        let horizon = config.numerics.horizon.unwrap();
        let window = (0.3 * horizon, horizon);
        let mut speeds = Vec::new();
        for (&seed, result) in seeds.iter().zip(runs) {
            let result = result?;
            write_trajectory(
                out_dir,
                &format!("traj_sigma{sigma}_seed{seed}.csv"),
                &result.mean_front,
                Some(&result.window_offsets),
                manifest,
            )?;
            if result.max_clip_excursion > 1e-10 {
                manifest.warnings.push(format!(
                    "sigma={sigma} seed={seed}: clip excursion {:.3e}",
                    result.max_clip_excursion
                ));
            }
            let est = measure_speed(&result.mean_front, window)?;
            speed_csv.row(&[
                fmt(sigma),
                seed.to_string(),
                fmt(est.c_star),
                fmt(est.uncertainty),
            ])?;
            speeds.push(est.c_star);
        }
        let mean = stats::mean(&speeds);
        let sem = if speeds.len() >= 2 { stats::sem(&speeds) } else { 0.0 };
        let cv = if speeds.len() >= 2 {
            stats::variance(&speeds).sqrt() / mean
        } else {
            0.0
        };
        summary_csv.row(&[
            fmt(sigma),
            fmt(mean),
            fmt(sem),
            fmt(cv),
            speeds.len().to_string(),
        ])?;
        if cv >= 0.05 {
            manifest.warnings.push(format!(
                "sigma={sigma}: speed coefficient of variation {cv:.3} >= 0.05"
            ));
        }
    }
    speed_csv.finish(manifest)?;
    summary_csv.finish(manifest)?;
    Ok(())
}

/// Average several trajectories sampled on identical time grids.
fn average_trajectories(trajs: &[FrontTrajectory]) -> FrontTrajectory {
    let n = trajs[0].samples.len();
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = trajs[0].samples[i].0;
        let mut pos = 0.0;
        let mut width = 0.0;
        for tr in trajs {
            pos += tr.samples[i].1;
            width += tr.samples[i].2;
        }
        samples.push((t, pos / trajs.len() as f64, width / trajs.len() as f64));
    }
    FrontTrajectory { samples, position_resolution: trajs[0].position_resolution }
}

fn frozen_divergence(
    config: &ExperimentConfig,
    out_dir: &Path,
    manifest: &mut RunManifest,
    workers: usize,
) -> Result<(), RunnerError> {
    let seeds = config.seeds.resolve();
    let spec = config.covariance;
    let n = &config.numerics;
    let reaction = ReactionSpec { f_prime_0: config.f_prime_0 };
    let mut fits_csv = CsvOut::create(
        out_dir,
        "divergence_fits.csv",
        "divergence_fits",
        &[
            "sigma",
            "seed",
            "c0_fit",
            "amplitude_fit",
            "amplitude_se",
            "r2",
            "predicted_amplitude",
        ],
    )?;
    for &sigma in &config.sigma_grid {
        let runs = parallel_map(workers, &seeds, |&seed| -> Result<_, RunnerError> {
            let xi = sample_static(&spec, n.dy1.unwrap(), n.ny1.unwrap(), seed)?;
            let cfg = kpp_config_from(config, sigma, KppShear::Frozen { realization: xi });
            Ok(run_kpp(&cfg)?)
        });
        let mut trajectories = Vec::new();
        for (&seed, result) in seeds.iter().zip(runs) {
            let result = result?;
            write_trajectory(
                out_dir,
                &format!("frozen_traj_sigma{sigma}_seed{seed}.csv"),
                &result.mean_front,
                Some(&result.window_offsets),
                manifest,
            )?;
            match divergence_fit(&result.mean_front, sigma, spec.variance, &reaction) {
                Ok(fit) => fits_csv.row(&[
                    fmt(sigma),
                    seed.to_string(),
                    fmt(fit.c0_fit),
                    fmt(fit.amplitude_fit),
                    fmt(fit.amplitude_se),
                    fmt(fit.r2),
                    fmt(fit.predicted_amplitude),
                ])?,
                Err(e) => manifest.warnings.push(format!(
                    "divergence fit sigma={sigma} seed={seed}: {e}"
                )),
            }
            trajectories.push(result.mean_front);
        }
        // Ensemble-averaged trajectory: the self-averaged observable the
        // divergence law speaks about.
        if trajectories.len() >= 2 {
            let avg = average_trajectories(&trajectories);
            match divergence_fit(&avg, sigma, spec.variance, &reaction) {
                Ok(fit) => fits_csv.row(&[
                    fmt(sigma),
                    "mean".to_string(),
                    fmt(fit.c0_fit),
                    fmt(fit.amplitude_fit),
                    fmt(fit.amplitude_se),
                    fmt(fit.r2),
                    fmt(fit.predicted_amplitude),
                ])?,
                Err(e) => manifest
                    .warnings
                    .push(format!("ensemble divergence fit sigma={sigma}: {e}")),
            }
        }
    }
    fits_csv.finish(manifest)?;
    Ok(())
}

fn extremes_check(
    config: &ExperimentConfig,
    out_dir: &Path,
    manifest: &mut RunManifest,
    workers: usize,
) -> Result<(), RunnerError> {
    let seeds = config.seeds.resolve();
    let spec = config.covariance;
    let records = parallel_map(workers, &seeds, |&seed| {
        running_max(&spec, &config.t_values, seed)
    });
    let mut csv = CsvOut::create(
        out_dir,
        "extremes.csv",
        "extremes",
        &["seed", "t", "sup", "normalized_ratio"],
    )?;
    let mut final_ratios = Vec::new();
    for result in records {
        let record = result?;
        for &(t, sup) in &record.samples {
            let denom = (2.0 * spec.variance * (t / spec.corr_length).ln()).sqrt();
            let ratio = if denom > 0.0 { sup / denom } else { f64::NAN };
            csv.row(&[record.seed.to_string(), fmt(t), fmt(sup), fmt(ratio)])?;
        }
        if let Some((_, r)) = record.normalized_ratios().last() {
            final_ratios.push(*r);
        }
    }
    csv.finish(manifest)?;
    let mut summary = CsvOut::create(
        out_dir,
        "extremes_summary.csv",
        "extremes_summary",
        &["t_max", "mean_ratio", "sem", "n_seeds"],
    )?;
    let mean = stats::mean(&final_ratios);
    let sem = if final_ratios.len() >= 2 { stats::sem(&final_ratios) } else { 0.0 };
    summary.row(&[
        fmt(*config.t_values.last().unwrap()),
        fmt(mean),
        fmt(sem),
        final_ratios.len().to_string(),
    ])?;
    summary.finish(manifest)?;
    if !(0.85..=1.1).contains(&mean) {
        manifest.warnings.push(format!(
            "extremes normalized ratio {mean:.3} outside [0.85, 1.1]"
        ));
    }
    Ok(())
}

/// Read a CSV produced by this runner back into (header, rows) form,
/// skipping the schema comment line.
fn read_csv_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), RunnerError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let header = reader
        .headers()?
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for record in reader.records() {
        rows.push(record?.iter().map(|s| s.to_string()).collect());
    }
    Ok((header, rows))
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Option<Vec<f64>> {
    let idx = header.iter().position(|h| h == name)?;
    rows.iter()
        .map(|r| r.get(idx).and_then(|s| s.parse::<f64>().ok()))
        .collect()
}

/// Aggregate whatever result CSVs exist in `dir` into fit summaries.
/// Returns (quantity, value, std_error) rows; also writes `report.csv`.
pub fn report(dir: &Path, f_prime_0: f64) -> Result<Vec<(String, f64, f64)>, RunnerError> {
    let reaction = ReactionSpec::new(f_prime_0)?;
    let mut rows: Vec<(String, f64, f64)> = Vec::new();
    let speeds_path = dir.join("speeds.csv");
    if speeds_path.exists() {
        let (header, data) = read_csv_columns(&speeds_path)?;
        let sigma = column(&header, &data, "sigma");
        let c_star = column(&header, &data, "c_star");
        let unc = column(&header, &data, "uncertainty");
        if let (Some(sigma), Some(c_star), Some(unc)) = (sigma, c_star, unc) {
            let triples: Vec<(f64, f64, f64)> = sigma
                .iter()
                .zip(&c_star)
                .zip(&unc)
                .map(|((&s, &c), &u)| (s, c, u))
                .collect();
            let small: Vec<_> = triples
                .iter()
                .cloned()
                .filter(|(s, _, _)| *s > 0.0 && *s <= 0.3)
                .collect();
            if small.len() >= 4 {
                if let Ok(fit) = fit_quadratic_enhancement(&small, &reaction) {
                    rows.push(("enhancement_alpha".into(), fit.value, fit.std_error));
                }
            }
            let large: Vec<_> = triples
                .iter()
                .cloned()
                .filter(|(s, _, _)| *s >= 4.0)
                .collect();
            if large.len() >= 4 {
                if let Ok(fit) = fit_linear_growth(&large) {
                    rows.push(("growth_exponent".into(), fit.value, fit.std_error));
                }
            }
        }
    }
    let lyap_path = dir.join("lyapunov.csv");
    if lyap_path.exists() {
        let (header, data) = read_csv_columns(&lyap_path)?;
        let kappa = column(&header, &data, "kappa");
        let gamma = column(&header, &data, "gamma");
        let se = column(&header, &data, "std_error");
        let r2 = column(&header, &data, "fit_r2");
        let horizon = column(&header, &data, "horizon");
        if let (Some(kappa), Some(gamma), Some(se), Some(r2), Some(horizon)) =
            (kappa, gamma, se, r2, horizon)
        {
            let samples: Vec<(f64, LyapunovEstimate)> = kappa
                .iter()
                .enumerate()
                .map(|(i, &k)| {
                    (
                        k,
                        LyapunovEstimate {
                            value: gamma[i],
                            std_error: se[i],
                            fit_r2: r2[i],
                            horizon: horizon[i],
                            n_seeds: 0,
                        },
                    )
                })
                .collect();
            if let Ok(fit) = anderson::fit_lyapunov_asymptotics(&samples) {
                rows.push(("lyapunov_c1".into(), fit.c1, 0.0));
                rows.push(("lyapunov_p".into(), fit.p, fit.p_std_error));
                rows.push((
                    "lyapunov_saturation".into(),
                    fit.saturation_gamma,
                    fit.saturation_se,
                ));
            }
        }
    }
    let div_path = dir.join("divergence_fits.csv");
    if div_path.exists() {
        let (header, data) = read_csv_columns(&div_path)?;
        let amp = column(&header, &data, "amplitude_fit");
        let pred = column(&header, &data, "predicted_amplitude");
        if let (Some(amp), Some(pred)) = (amp, pred) {
            let ratios: Vec<f64> = amp
                .iter()
                .zip(&pred)
                .filter(|(_, &p)| p > 0.0)
                .map(|(&a, &p)| a / p)
                .collect();
            if !ratios.is_empty() {
                let sem = if ratios.len() >= 2 { stats::sem(&ratios) } else { 0.0 };
                rows.push(("divergence_amplitude_ratio".into(), stats::mean(&ratios), sem));
            }
        }
    }
    let ext_path = dir.join("extremes_summary.csv");
    if ext_path.exists() {
        let (header, data) = read_csv_columns(&ext_path)?;
        let mean = column(&header, &data, "mean_ratio");
        let sem = column(&header, &data, "sem");
        if let (Some(mean), Some(sem)) = (mean, sem) {
            if let (Some(&m), Some(&s)) = (mean.first(), sem.first()) {
                rows.push(("extremes_normalized_ratio".into(), m, s));
            }
        }
    }
    let mut out = csv::Writer::from_path(dir.join("report.csv"))?;
    out.write_record(["quantity", "value", "std_error"])?;
    for (name, value, se) in &rows {
        out.write_record([name.as_str(), &fmt(*value), &fmt(*se)])?;
    }
    out.flush()?;
    Ok(rows)
}
