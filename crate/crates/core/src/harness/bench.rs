use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use super::{bootstrap_median_ci, derive_seed, mean, median, random_rigid, FidelityMode};
use crate::em::{fit, FitConfig, InitMethod};
use crate::geometry::{bbox_diagonal, bounding_box, load_mesh, points_to_primitives, sample_surface, PointCloud, TriangleMesh};
use crate::mixture::GaussianMixture;
use crate::registration::{
    register_d2d, register_icp, register_p2d, IcpConfig, RegistrationConfig, RegistrationResult, RigidTransform,
};
use crate::{Error, Result};

const FIT_STREAM: u64 = 10;
const SAMPLE_STREAM: u64 = 11;
const DEFORM_STREAM: u64 = 12;
const SOURCE_FIT_STREAM: u64 = 13;
const BOOTSTRAP_STREAM: u64 = 14;

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub model_path: PathBuf,
    pub k: usize,
    /// Primitive set the model GMM is fitted to.
    pub fit_mode: FidelityMode,
    pub init: InitMethod,
    pub fit_iters: usize,
    pub fit_tol: f64,
    /// Points sampled from the surface per trial; the vertex count when `None`.
    pub n_points: Option<usize>,
    /// Radians.
    pub max_angle: f64,
    /// Fraction of the bounding-box diagonal.
    pub max_trans_frac: f64,
    pub trials: usize,
    pub seed: u64,
    pub include_d2d: bool,
    /// Move the mesh so its bounding-box center is the origin before anything else.
    pub center_model: bool,
}

impl Default for TrialSpec {
    fn default() -> Self {
        TrialSpec {
            model_path: PathBuf::new(),
            k: 100,
            fit_mode: FidelityMode::Exact,
            init: InitMethod::KMeansPlusPlus,
            fit_iters: 100,
            fit_tol: 1e-5,
            n_points: None,
            max_angle: 30f64.to_radians(),
            max_trans_frac: 0.1,
            trials: 25,
            seed: 0,
            include_d2d: false,
            center_model: true,
        }
    }
}

impl TrialSpec {
    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::validation("trials must be at least 1"));
        }
        if self.k == 0 {
            return Err(Error::validation("K must be at least 1"));
        }
        if !(self.max_angle >= 0.0 && self.max_trans_frac >= 0.0) {
            return Err(Error::validation("deformation bounds must be non-negative"));
        }
        if self.n_points == Some(0) {
            return Err(Error::validation("n_points must be at least 1"));
        }
        Ok(())
    }
}

/// One method on one trial. Failed registrations carry NaN errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub trial: usize,
    pub method: String,
    pub rot_err_rad: f64,
    pub trans_err_pct: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub median: f64,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Metric {
    fn of(values: &[f64], seed: u64) -> Metric {
        let (ci_low, ci_high) = bootstrap_median_ci(values, BOOTSTRAP_RESAMPLES, seed);
        Metric {
            median: median(values),
            mean: mean(values),
            ci_low,
            ci_high,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub trials: usize,
    pub failures: usize,
    pub rotation: Metric,
    pub translation: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub seed: u64,
    pub diagonal: f64,
    pub rows: Vec<TrialRow>,
    pub summaries: Vec<MethodSummary>,
}

impl TrialResult {
    pub fn summary(&self, method: &str) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summaries).expect("summaries serialize")
    }
}

fn summarize(rows: &[TrialRow], methods: &[&str], seed: u64) -> Vec<MethodSummary> {
    methods
        .iter()
        .enumerate()
        .map(|(i, method)| {
            let mine: Vec<&TrialRow> = rows.iter().filter(|r| r.method == *method).collect();
            let ok: Vec<&&TrialRow> = mine.iter().filter(|r| r.rot_err_rad.is_finite()).collect();
            let rot: Vec<f64> = ok.iter().map(|r| r.rot_err_rad).collect();
            let trans: Vec<f64> = ok.iter().map(|r| r.trans_err_pct).collect();
            MethodSummary {
                method: method.to_string(),
                trials: mine.len(),
                failures: mine.len() - ok.len(),
                rotation: Metric::of(&rot, derive_seed(seed, BOOTSTRAP_STREAM, 2 * i as u64)),
                translation: Metric::of(&trans, derive_seed(seed, BOOTSTRAP_STREAM, 2 * i as u64 + 1)),
            }
        })
        .collect()
}

fn row(trial: usize, method: &str, outcome: Result<RegistrationResult>, truth: &RigidTransform, diag: f64) -> TrialRow {
    match outcome {
        Ok(r) => {
            let r = r.with_ground_truth(truth, diag);
            TrialRow {
                trial,
                method: method.to_string(),
                rot_err_rad: r.rotation_error.expect("ground truth set"),
                trans_err_pct: r.translation_error.expect("ground truth set"),
                objective: r.final_objective,
                iterations: r.iterations,
                converged: r.converged,
            }
        }
        Err(_) => TrialRow {
            trial,
            method: method.to_string(),
            rot_err_rad: f64::NAN,
            trans_err_pct: f64::NAN,
            objective: f64::NAN,
            iterations: 0,
            converged: false,
        },
    }
}

fn fit_model(mesh: &TriangleMesh, mode: FidelityMode, spec: &TrialSpec, index: u64) -> Result<GaussianMixture> {
    let config = FitConfig {
        init: spec.init,
        max_iters: spec.fit_iters,
        tol: spec.fit_tol,
        mode: mode.fit_mode(),
        seed: derive_seed(spec.seed, FIT_STREAM, index),
        ..FitConfig::new(spec.k)
    };
    Ok(fit(&mode.primitives(mesh), &config)?.model)
}

/// Loads the mesh named by `spec.model_path` and runs the trials on it.
pub fn run_registration_benchmark(spec: &TrialSpec) -> Result<TrialResult> {
    let mesh = load_mesh(&spec.model_path)?;
    run_registration_benchmark_on(&mesh, spec)
}

/// Randomized registration trials. Each trial samples a cloud from the
/// surface, moves it by a random rigid motion and asks every method to
/// bring it back; errors are measured against the inverse of that motion.
/// Per-trial failures are recorded as rows with NaN errors.
pub fn run_registration_benchmark_on(mesh: &TriangleMesh, spec: &TrialSpec) -> Result<TrialResult> {
    spec.validate()?;
    let mesh = if spec.center_model {
        let (lo, hi) = bounding_box(mesh.vertices())?;
        mesh.translated(&(-(lo + hi) / 2.0))
    } else {
        mesh.clone()
    };
    let diag = bbox_diagonal(mesh.vertices())?;
    let n_points = spec.n_points.unwrap_or(mesh.vertices().len());
    let mesh_gmm = fit_model(&mesh, spec.fit_mode, spec, 0)?;
    let points_gmm = fit_model(&mesh, FidelityMode::PointsVertex, spec, 1)?;
    let vertices = mesh.vertex_cloud();

    let mut methods = vec!["mesh-p2d", "points-p2d", "icp"];
    if spec.include_d2d {
        methods.push("d2d");
    }

    let per_trial: Vec<Result<Vec<TrialRow>>> = (0..spec.trials)
        .into_par_iter()
        .map(|trial| {
            let t = trial as u64;
            let sample = sample_surface(&mesh, n_points, derive_seed(spec.seed, SAMPLE_STREAM, t))?;
            let motion = random_rigid(
                derive_seed(spec.seed, DEFORM_STREAM, t),
                spec.max_angle,
                spec.max_trans_frac * diag,
            );
            let moved = PointCloud::new(sample.points.iter().map(|p| motion.apply(p)).collect());
            let truth = motion.inverse();
            let config = RegistrationConfig::default();

            let mut rows = vec![
                row(trial, "mesh-p2d", register_p2d(&moved, &mesh_gmm, &config), &truth, diag),
                row(trial, "points-p2d", register_p2d(&moved, &points_gmm, &config), &truth, diag),
                row(
                    trial,
                    "icp",
                    register_icp(&moved, &vertices, &IcpConfig::default()).map(|o| o.result),
                    &truth,
                    diag,
                ),
            ];
            if spec.include_d2d {
                let outcome = points_to_primitives(&moved, None)
                    .and_then(|prims| {
                        let config = FitConfig {
                            init: spec.init,
                            max_iters: spec.fit_iters,
                            tol: spec.fit_tol,
                            seed: derive_seed(spec.seed, SOURCE_FIT_STREAM, t),
                            ..FitConfig::new(spec.k.min(prims.len()))
                        };
                        fit(&prims, &config)
                    })
                    .and_then(|report| register_d2d(&report.model, &mesh_gmm, &config));
                rows.push(row(trial, "d2d", outcome, &truth, diag));
            }
            Ok(rows)
        })
        .collect();

    let mut rows = Vec::with_capacity(spec.trials * methods.len());
    for r in per_trial {
        rows.extend(r?);
    }
    let summaries = summarize(&rows, &methods, spec.seed);
    Ok(TrialResult {
        seed: spec.seed,
        diagonal: diag,
        rows,
        summaries,
    })
}

pub fn write_trials_csv(rows: &[TrialRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Validation(format!("cannot write CSV: {e}")))?;
    }
    w.flush().map_err(|e| Error::Validation(format!("cannot write CSV: {e}")))?;
    Ok(())
}
