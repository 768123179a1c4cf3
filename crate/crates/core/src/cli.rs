//! Command-line front end. Numbers go to stdout in shortest round-trip form;
//! the resolved seed and human-readable notes go to stderr.
//!
//! Exit codes: 0 success, 1 runtime or numeric failure, 2 usage error.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::em::{fit, FitConfig, InitMethod};
use crate::geometry::{bbox_diagonal, load_mesh, load_points, sample_surface, write_ply_points, PointCloud, Vec3};
use crate::harness::{
    run_fidelity_sweep, run_registration_benchmark, write_fidelity_csv, write_trials_csv, FidelityMode, SweepConfig,
    TrialSpec,
};
use crate::mixture::{avg_loglik, load_model, save_model, GaussianMixture};
use crate::registration::{
    register_d2d, register_icp, register_p2d, IcpConfig, RegistrationConfig, RegistrationResult, RigidTransform,
};
use crate::Error;

#[derive(Debug, Parser)]
#[command(name = "meshgmm", version, about = "Fit Gaussian mixtures to meshes and point clouds, and register with them")]
struct Cli {
    /// Worker threads for parallel sections; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a mixture to a mesh (PLY/OBJ) or, for files without faces, its points.
    Fit(FitArgs),
    /// Print the average per-point log-likelihood of a cloud under a model.
    Eval(EvalArgs),
    /// Sample points uniformly from a mesh surface.
    Sample(SampleArgs),
    /// Register two inputs with P2D (points + model), D2D (model + model) or ICP (points + points).
    Register(RegisterArgs),
    /// Randomized registration trials on one mesh.
    Bench(BenchArgs),
    /// Fitting-fidelity sweep over K, initializations and primitive modes.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct FitArgs {
    input: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    #[arg(long, default_value = "exact")]
    mode: FidelityMode,
    #[arg(long, default_value = "kmeans++")]
    init: InitMethod,
    #[arg(long, default_value_t = 25)]
    iters: usize,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Covariance regularizer; scaled to the input's extent when omitted.
    #[arg(long)]
    reg: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Write the per-iteration bound trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    model: PathBuf,
    points: PathBuf,
}

#[derive(Debug, Args)]
struct SampleArgs {
    mesh: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    P2d,
    D2d,
    Icp,
}

#[derive(Debug, Args)]
struct RegisterArgs {
    #[arg(long, value_enum)]
    method: Method,
    /// Points (PLY/OBJ) or model (JSON) to be moved.
    source: PathBuf,
    /// Points (PLY/OBJ) or model (JSON) held fixed.
    target: PathBuf,
    /// Known transform `w,x,y,z,tx,ty,tz`; errors against it are reported.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    truth: Option<Vec<f64>>,
    /// Reference length for the translation error; the source's bounding-box diagonal by default.
    #[arg(long)]
    diag: Option<f64>,
    /// Accepted for uniformity; registration itself draws no random numbers.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    mesh: PathBuf,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    #[arg(long, default_value = "exact")]
    mode: FidelityMode,
    #[arg(long, default_value = "kmeans++")]
    init: InitMethod,
    #[arg(long, default_value_t = 100)]
    fit_iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    fit_tol: f64,
    /// Points sampled per trial; the mesh's vertex count by default.
    #[arg(long)]
    n_points: Option<usize>,
    #[arg(long, default_value_t = 30.0)]
    max_angle_deg: f64,
    #[arg(long, default_value_t = 0.1)]
    max_trans_frac: f64,
    #[arg(long, default_value_t = 25, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long)]
    d2d: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Per-trial CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary JSON (median, mean, bootstrap interval per method).
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    mesh: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "10,50,100")]
    ks: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "kmeans++")]
    inits: Vec<InitMethod>,
    #[arg(long, value_delimiter = ',', default_value = "exact,approx,points-centroid,points-vertex")]
    modes: Vec<FidelityMode>,
    #[arg(long, default_value_t = 50_000)]
    eval_n: usize,
    #[arg(long, default_value_t = 25)]
    iters: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type CliResult = Result<(), Failure>;

/// Entry point used by the binary.
pub fn main() -> i32 {
    run(std::env::args_os())
}

/// Parses `args` (program name first) and runs the command, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Failure::Usage(format!("cannot start {n} threads: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Register(a) => cmd_register(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    let seed = seed.unwrap_or_else(rand::random);
    eprintln!("seed: {seed}");
    seed
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn cmd_fit(a: FitArgs) -> CliResult {
    let seed = resolve_seed(a.seed);
    let mesh = load_mesh(&a.input)?;
    let (primitives, fit_mode) = if mesh.faces().is_empty() {
        eprintln!("{} has no faces; fitting its vertices as points", a.input.display());
        (FidelityMode::PointsVertex.primitives(&mesh), FidelityMode::PointsVertex.fit_mode())
    } else {
        (a.mode.primitives(&mesh), a.mode.fit_mode())
    };
    let config = FitConfig {
        init: a.init,
        max_iters: a.iters,
        tol: a.tol,
        reg: a.reg,
        mode: fit_mode,
        seed,
        ..FitConfig::new(a.k as usize)
    };
    let report = fit(&primitives, &config)?;
    save_model(&report.model, &a.out)?;
    if let Some(path) = &a.trace {
        report.write_trace_csv(create(path)?)?;
    }
    eprintln!(
        "{} iterations, converged: {}, rescues: {}",
        report.iterations_run,
        report.converged,
        report.rescues.len()
    );
    println!("{}", report.lower_bound_trace.last().expect("trace is never empty"));
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult {
    let model = load_model(&a.model)?;
    let cloud = load_points(&a.points)?;
    println!("{}", avg_loglik(&cloud, &model)?);
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> CliResult {
    let seed = resolve_seed(a.seed);
    let mesh = load_mesh(&a.mesh)?;
    let cloud = sample_surface(&mesh, a.n as usize, seed)?;
    write_ply_points(&a.out, &cloud)?;
    Ok(())
}

enum Input {
    Points(PointCloud),
    Model(GaussianMixture),
}

fn is_model_path(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn load_input(path: &Path) -> Result<Input, Error> {
    if is_model_path(path) {
        Ok(Input::Model(load_model(path)?))
    } else {
        Ok(Input::Points(load_points(path)?))
    }
}

#[derive(Serialize)]
struct RegisterOutput {
    method: &'static str,
    quaternion: [f64; 4],
    translation: [f64; 3],
    objective: f64,
    iterations: usize,
    converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    rotation_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    translation_error_pct: Option<f64>,
}

fn cmd_register(a: RegisterArgs) -> CliResult {
    resolve_seed(a.seed);
    let kinds = (is_model_path(&a.source), is_model_path(&a.target));
    let expected = match a.method {
        Method::P2d => (false, true),
        Method::D2d => (true, true),
        Method::Icp => (false, false),
    };
    if kinds != expected {
        let want = match a.method {
            Method::P2d => "a point file then a model JSON",
            Method::D2d => "two model JSON files",
            Method::Icp => "two point files",
        };
        return Err(Failure::Usage(format!("this method expects {want}")));
    }
    if a.truth.as_ref().is_some_and(|v| v.len() != 7) {
        return Err(Failure::Usage("--truth takes seven comma-separated numbers: w,x,y,z,tx,ty,tz".into()));
    }
    let truth = a
        .truth
        .as_deref()
        .map(|v| RigidTransform::from_quaternion([v[0], v[1], v[2], v[3]], Vec3::new(v[4], v[5], v[6])))
        .transpose()?;
    let (source, target) = (load_input(&a.source)?, load_input(&a.target)?);
    let reference_points: Vec<Vec3> = match &source {
        Input::Points(c) => c.points.clone(),
        Input::Model(m) => m.components().iter().map(|c| c.mean).collect(),
    };
    let config = RegistrationConfig::default();
    let (name, result): (&'static str, RegistrationResult) = match (a.method, source, target) {
        (Method::P2d, Input::Points(cloud), Input::Model(gmm)) => ("p2d", register_p2d(&cloud, &gmm, &config)?),
        (Method::D2d, Input::Model(s), Input::Model(t)) => ("d2d", register_d2d(&s, &t, &config)?),
        (Method::Icp, Input::Points(s), Input::Points(t)) => {
            ("icp", register_icp(&s, &t, &IcpConfig::default())?.result)
        }
        _ => unreachable!("input kinds checked above"),
    };
    let result = match &truth {
        Some(t) => {
            let diag = match a.diag {
                Some(d) => d,
                None => bbox_diagonal(&reference_points)?,
            };
            result.with_ground_truth(t, diag)
        }
        None => result,
    };
    let tr = result.transform.translation();
    let out = RegisterOutput {
        method: name,
        quaternion: result.transform.quaternion_wxyz(),
        translation: [tr.x, tr.y, tr.z],
        objective: result.final_objective,
        iterations: result.iterations,
        converged: result.converged,
        rotation_error: result.rotation_error,
        translation_error_pct: result.translation_error,
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("output serializes"));
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> CliResult {
    let seed = resolve_seed(a.seed);
    let spec = TrialSpec {
        model_path: a.mesh,
        k: a.k as usize,
        fit_mode: a.mode,
        init: a.init,
        fit_iters: a.fit_iters,
        fit_tol: a.fit_tol,
        n_points: a.n_points,
        max_angle: a.max_angle_deg.to_radians(),
        max_trans_frac: a.max_trans_frac,
        trials: a.trials as usize,
        seed,
        include_d2d: a.d2d,
        center_model: true,
    };
    let result = run_registration_benchmark(&spec)?;
    match &a.out {
        Some(path) => write_trials_csv(&result.rows, create(path)?)?,
        None => write_trials_csv(&result.rows, std::io::stdout().lock())?,
    }
    if let Some(path) = &a.summary {
        std::fs::write(path, result.summary_json()).map_err(|e| Error::io(path, e))?;
    }
    for s in &result.summaries {
        eprintln!(
            "{:<11} median rot {:.4} rad, median trans {:.3} %, failures {}",
            s.method, s.rotation.median, s.translation.median, s.failures
        );
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> CliResult {
    let seed = resolve_seed(a.seed);
    if a.ks.contains(&0) {
        return Err(Failure::Usage("every K must be at least 1".into()));
    }
    let mesh = load_mesh(&a.mesh)?;
    let config = SweepConfig {
        ks: a.ks,
        inits: a.inits,
        modes: a.modes,
        eval_n: a.eval_n,
        max_iters: a.iters,
        seed,
        ..SweepConfig::default()
    };
    let rows = run_fidelity_sweep(&mesh, &config)?;
    match &a.out {
        Some(path) => write_fidelity_csv(&rows, create(path)?)?,
        None => write_fidelity_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}
