//! Expectation-maximization over moment primitives.
//!
//! Each primitive `p` enters the E-step through its expected log-density
//! under every component, which adds `−½ tr(Σ_i⁻¹ Σ_p)` to the usual point
//! term, and enters the M-step as a weighted centroid plus its own second
//! moment. Points (zero covariance, unit size) reduce everything to textbook
//! EM.
//!
//! The covariance floor `reg` is applied as if every primitive carried an
//! extra `reg·I` of spread. The M-step then still maximizes the bound that the
//! E-step evaluates, so the tracked bound is exactly monotone.

mod init;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{bbox_diagonal, Mat3, Primitive, Vec3};
use crate::mixture::{log_sum_exp, Component, GaussianMixture};
use crate::{Error, Result};

pub use init::{init_kmeanspp, init_random};

/// Relative covariance floor: `reg = REG_SCALE × (bbox diagonal)²` unless
/// given explicitly.
pub const REG_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    /// Primitive covariances enter both steps.
    Exact,
    /// Centroids weighted by size; primitive covariances are ignored.
    Approx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMethod {
    KMeansPlusPlus,
    Random,
}

impl fmt::Display for FitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitMode::Exact => "exact",
            FitMode::Approx => "approx",
        })
    }
}

impl FromStr for FitMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "exact" => Ok(FitMode::Exact),
            "approx" => Ok(FitMode::Approx),
            _ => Err(format!("unknown fit mode '{s}' (expected exact or approx)")),
        }
    }
}

impl fmt::Display for InitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitMethod::KMeansPlusPlus => "kmeans++",
            InitMethod::Random => "random",
        })
    }
}

impl FromStr for InitMethod {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "kmeans++" | "kmeanspp" | "kmeans" => Ok(InitMethod::KMeansPlusPlus),
            "random" => Ok(InitMethod::Random),
            _ => Err(format!("unknown init '{s}' (expected kmeans++ or random)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub k: usize,
    pub init: InitMethod,
    pub max_iters: usize,
    /// Stop once the relative change of the bound falls to this.
    pub tol: f64,
    /// Covariance floor; `None` derives it from the data extent.
    pub reg: Option<f64>,
    pub mode: FitMode,
    pub seed: u64,
}

impl FitConfig {
    pub fn new(k: usize) -> Self {
        FitConfig {
            k,
            init: InitMethod::KMeansPlusPlus,
            max_iters: 25,
            tol: 1e-12,
            reg: None,
            mode: FitMode::Exact,
            seed: 0,
        }
    }
}

/// Soft assignment `η` of M primitives to K components, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    k: usize,
    eta: Vec<f64>,
    /// Per-primitive `log Σ_i exp(ℓ_ij)` when produced by an E-step.
    row_loglik: Option<Vec<f64>>,
}

impl Responsibilities {
    pub fn one_hot(labels: &[usize], k: usize) -> Self {
        let mut eta = vec![0.0; labels.len() * k];
        for (j, &l) in labels.iter().enumerate() {
            eta[j * k + l] = 1.0;
        }
        Responsibilities {
            k,
            eta,
            row_loglik: None,
        }
    }

    /// Wraps a row-major `M×K` matrix whose rows each sum to one.
    pub fn from_rows(k: usize, eta: Vec<f64>) -> Result<Self> {
        if k == 0 || eta.len() % k != 0 {
            return Err(Error::validation("responsibility matrix shape does not match K"));
        }
        for (j, row) in eta.chunks(k).enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|&v| !(v >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::validation(format!("responsibility row {j} does not sum to 1")));
            }
        }
        Ok(Responsibilities {
            k,
            eta,
            row_loglik: None,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.eta.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.eta[j * self.k..(j + 1) * self.k]
    }

    /// Most responsible component; ties go to the lowest index.
    pub fn argmax(&self, j: usize) -> usize {
        self.row(j)
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
            .0
    }

    pub fn row_loglik(&self) -> Option<&[f64]> {
        self.row_loglik.as_deref()
    }
}

/// Covariance a primitive contributes under `mode`, including the floor.
fn effective_cov(p: &Primitive, mode: FitMode, reg: f64) -> Mat3 {
    let floor = Mat3::identity() * reg;
    match mode {
        FitMode::Exact => p.cov + floor,
        FitMode::Approx => floor,
    }
}

#[derive(Debug, Clone)]
pub struct EStep {
    pub responsibilities: Responsibilities,
    /// `Σ_j α_j Σ_i η_ij (ℓ_ij − log η_ij)`, which at the softmax equals
    /// `Σ_j α_j log Σ_i exp ℓ_ij`.
    pub lower_bound: f64,
    /// `Σ_j α_j Σ_i η_ij ℓ_ij`, the form without the entropy term.
    pub jensen_bound: f64,
}

/// E-step on primitives as given (exact treatment, no covariance floor).
pub fn e_step(primitives: &[Primitive], gmm: &GaussianMixture) -> Result<EStep> {
    expectation(primitives, gmm, FitMode::Exact, 0.0)
}

pub(crate) fn expectation(
    primitives: &[Primitive],
    gmm: &GaussianMixture,
    mode: FitMode,
    reg: f64,
) -> Result<EStep> {
    let k = gmm.len();
    let rows: Vec<(Vec<f64>, f64, f64)> = primitives
        .par_iter()
        .map(|p| {
            let cov = effective_cov(p, mode, reg);
            let ell: Vec<f64> = (0..k)
                .map(|i| gmm.expected_weighted_log_pdf(i, &p.mean, &cov))
                .collect();
            let lse = log_sum_exp(&ell);
            let eta: Vec<f64> = ell.iter().map(|l| (l - lse).exp()).collect();
            let jensen = eta
                .iter()
                .zip(&ell)
                .filter(|(e, _)| **e > 0.0)
                .map(|(e, l)| e * l)
                .sum();
            (eta, lse, jensen)
        })
        .collect();

    let mut eta = Vec::with_capacity(primitives.len() * k);
    let mut row_loglik = Vec::with_capacity(primitives.len());
    let (mut lower_bound, mut jensen_bound) = (0.0, 0.0);
    for ((row, lse, jensen), p) in rows.into_iter().zip(primitives) {
        if !lse.is_finite() {
            return Err(Error::numeric(format!(
                "primitive at {:?} has non-finite likelihood under every component",
                p.mean.as_slice()
            )));
        }
        eta.extend(row);
        row_loglik.push(lse);
        if p.size > 0.0 {
            lower_bound += p.size * lse;
            jensen_bound += p.size * jensen;
        }
    }
    Ok(EStep {
        responsibilities: Responsibilities {
            k,
            eta,
            row_loglik: Some(row_loglik),
        },
        lower_bound,
        jensen_bound,
    })
}

#[derive(Debug, Clone)]
pub struct MStep {
    pub model: GaussianMixture,
    /// Components that had no mass and were re-seeded at a primitive.
    pub rescued: Vec<usize>,
}

/// Weighted moment matching: `λ_i = W_i / ΣW`, `μ_i` the `w`-weighted mean of
/// centroids, `Σ_i` the `w`-weighted scatter of centroids plus (exact mode)
/// the weighted primitive covariances, plus `reg·I`.
pub fn m_step(primitives: &[Primitive], resp: &Responsibilities, mode: FitMode, reg: f64) -> Result<MStep> {
    if resp.len() != primitives.len() {
        return Err(Error::validation(format!(
            "{} responsibility rows for {} primitives",
            resp.len(),
            primitives.len()
        )));
    }
    let k = resp.k();
    let mut mass = vec![0.0; k];
    let mut first = vec![Vec3::zeros(); k];
    for (j, p) in primitives.iter().enumerate() {
        if p.size <= 0.0 {
            continue;
        }
        for (i, &e) in resp.row(j).iter().enumerate() {
            if e > 0.0 {
                let w = e * p.size;
                mass[i] += w;
                first[i] += p.mean * w;
            }
        }
    }
    let total: f64 = mass.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::validation("primitives carry no total size"));
    }
    let empty: Vec<bool> = mass.iter().map(|&w| !(w >= f64::MIN_POSITIVE)).collect();
    let means: Vec<Vec3> = (0..k)
        .map(|i| if empty[i] { Vec3::zeros() } else { first[i] / mass[i] })
        .collect();

    let mut scatter = vec![Mat3::zeros(); k];
    for (j, p) in primitives.iter().enumerate() {
        if p.size <= 0.0 {
            continue;
        }
        for (i, &e) in resp.row(j).iter().enumerate() {
            if e > 0.0 && !empty[i] {
                let w = e * p.size;
                let d = p.mean - means[i];
                scatter[i] += d * d.transpose() * w;
                if mode == FitMode::Exact {
                    scatter[i] += p.cov * w;
                }
            }
        }
    }
    let floor = Mat3::identity() * reg;
    let mut components: Vec<Component> = (0..k)
        .map(|i| Component {
            weight: mass[i],
            mean: means[i],
            cov: if empty[i] {
                floor
            } else {
                crate::geometry::symmetrize(&(scatter[i] / mass[i])) + floor
            },
        })
        .collect();

    let rescued: Vec<usize> = (0..k).filter(|&i| empty[i]).collect();
    if !rescued.is_empty() {
        rescue(primitives, resp, mode, reg, &empty, &mut components)?;
    }
    let model = GaussianMixture::from_unnormalized(components)?;
    Ok(MStep { model, rescued })
}

/// Re-seeds empty components at the least likely primitives, one each, so
/// K stays fixed.
fn rescue(
    primitives: &[Primitive],
    resp: &Responsibilities,
    mode: FitMode,
    reg: f64,
    empty: &[bool],
    components: &mut [Component],
) -> Result<()> {
    // Lower score means less well explained by the current fit.
    let scores: Vec<f64> = match resp.row_loglik() {
        Some(ll) => ll.to_vec(),
        None => (0..primitives.len())
            .map(|j| -(primitives[j].mean - components[resp.argmax(j)].mean).norm_squared())
            .collect(),
    };
    let fallback_cov = {
        let (sum, w) = components
            .iter()
            .zip(empty)
            .filter(|(_, &e)| !e)
            .fold((Mat3::zeros(), 0.0), |(s, w), (c, _)| (s + c.cov * c.weight, w + c.weight));
        sum / w
    };
    let mut taken = vec![false; primitives.len()];
    for i in (0..components.len()).filter(|&i| empty[i]) {
        let j = (0..primitives.len())
            .filter(|&j| primitives[j].size > 0.0 && !taken[j])
            .fold(None, |best: Option<usize>, j| match best {
                Some(b) if scores[b] <= scores[j] => Some(b),
                _ => Some(j),
            })
            .ok_or_else(|| Error::validation("more empty components than primitives to re-seed them"))?;
        taken[j] = true;
        let p = &primitives[j];
        let cov = effective_cov(p, mode, reg);
        components[i] = Component {
            weight: p.size,
            mean: p.mean,
            cov: if nalgebra::Cholesky::new(cov).is_some() { cov } else { fallback_cov },
        };
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rescue {
    pub iteration: usize,
    pub component: usize,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: GaussianMixture,
    /// Bound of the initial model followed by the bound after every
    /// iteration; length `iterations_run + 1`.
    pub lower_bound_trace: Vec<f64>,
    pub jensen_trace: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    pub rescues: Vec<Rescue>,
    /// Covariance floor actually used.
    pub reg: f64,
}

impl FitReport {
    /// CSV with columns `iteration,lower_bound,jensen_bound`.
    pub fn write_trace_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| Error::numeric(format!("writing trace: {e}"));
        w.write_record(["iteration", "lower_bound", "jensen_bound"]).map_err(to_err)?;
        for (t, (lb, jb)) in self.lower_bound_trace.iter().zip(&self.jensen_trace).enumerate() {
            w.write_record([t.to_string(), lb.to_string(), jb.to_string()])
                .map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::io(Path::new("<trace>"), e))
    }
}

/// Covariance floor used when the config leaves it unset.
pub fn default_reg(primitives: &[Primitive]) -> f64 {
    let means: Vec<Vec3> = primitives.iter().map(|p| p.mean).collect();
    match bbox_diagonal(&means) {
        Ok(d) if d > 0.0 => REG_SCALE * d * d,
        _ => REG_SCALE,
    }
}

fn validate(primitives: &[Primitive], config: &FitConfig) -> Result<()> {
    if config.k < 1 {
        return Err(Error::validation("component count must be at least 1"));
    }
    if !(config.tol > 0.0) {
        return Err(Error::validation("tolerance must be positive"));
    }
    if let Some(reg) = config.reg {
        if !(reg >= 0.0 && reg.is_finite()) {
            return Err(Error::validation("covariance floor must be non-negative"));
        }
    }
    if primitives.is_empty() {
        return Err(Error::validation("nothing to fit: no primitives"));
    }
    for (j, p) in primitives.iter().enumerate() {
        if !(p.size >= 0.0 && p.size.is_finite())
            || p.mean.iter().any(|v| !v.is_finite())
            || p.cov.iter().any(|v| !v.is_finite())
        {
            return Err(Error::validation(format!("primitive {j} has non-finite or negative data")));
        }
    }
    if primitives.iter().map(|p| p.size).sum::<f64>() <= 0.0 {
        return Err(Error::validation("primitives have zero total size"));
    }
    Ok(())
}

/// Stepwise EM driver; [`fit`] runs it to completion.
#[derive(Debug)]
pub struct EmRun<'a> {
    primitives: &'a [Primitive],
    mode: FitMode,
    reg: f64,
    model: GaussianMixture,
    estep: EStep,
    iterations: usize,
    lower_bound_trace: Vec<f64>,
    jensen_trace: Vec<f64>,
    rescues: Vec<Rescue>,
}

impl<'a> EmRun<'a> {
    /// Initial assignment, its M-step, and the E-step of that model.
    pub fn new(primitives: &'a [Primitive], config: &FitConfig) -> Result<Self> {
        validate(primitives, config)?;
        let reg = config.reg.unwrap_or_else(|| default_reg(primitives));
        let initial = match config.init {
            InitMethod::KMeansPlusPlus => init_kmeanspp(primitives, config.k, config.seed)?,
            InitMethod::Random => init_random(primitives, config.k, config.seed)?,
        };
        Self::from_responsibilities(primitives, &initial, config.mode, reg)
    }

    pub fn from_responsibilities(
        primitives: &'a [Primitive],
        initial: &Responsibilities,
        mode: FitMode,
        reg: f64,
    ) -> Result<Self> {
        let m = m_step(primitives, initial, mode, reg)?;
        let estep = expectation(primitives, &m.model, mode, reg)?;
        Ok(EmRun {
            primitives,
            mode,
            reg,
            lower_bound_trace: vec![estep.lower_bound],
            jensen_trace: vec![estep.jensen_bound],
            rescues: m
                .rescued
                .iter()
                .map(|&component| Rescue { iteration: 0, component })
                .collect(),
            model: m.model,
            estep,
            iterations: 0,
        })
    }

    /// One M-step from the current responsibilities followed by an E-step.
    /// Returns the new bound.
    pub fn step(&mut self) -> Result<f64> {
        let m = m_step(self.primitives, &self.estep.responsibilities, self.mode, self.reg)?;
        self.iterations += 1;
        let iteration = self.iterations;
        self.rescues
            .extend(m.rescued.iter().map(|&component| Rescue { iteration, component }));
        self.estep = expectation(self.primitives, &m.model, self.mode, self.reg)?;
        self.model = m.model;
        self.lower_bound_trace.push(self.estep.lower_bound);
        self.jensen_trace.push(self.estep.jensen_bound);
        Ok(self.estep.lower_bound)
    }

    pub fn model(&self) -> &GaussianMixture {
        &self.model
    }

    pub fn lower_bound(&self) -> f64 {
        self.estep.lower_bound
    }

    pub fn responsibilities(&self) -> &Responsibilities {
        &self.estep.responsibilities
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    pub fn into_report(self, converged: bool) -> FitReport {
        FitReport {
            model: self.model,
            lower_bound_trace: self.lower_bound_trace,
            jensen_trace: self.jensen_trace,
            iterations_run: self.iterations,
            converged,
            rescues: self.rescues,
            reg: self.reg,
        }
    }
}

/// Alternates M- and E-steps until the relative bound change drops to
/// `tol` or `max_iters` iterations have run.
pub fn fit(primitives: &[Primitive], config: &FitConfig) -> Result<FitReport> {
    let mut run = EmRun::new(primitives, config)?;
    let mut converged = false;
    while run.iterations() < config.max_iters {
        let previous = run.lower_bound();
        let bound = run.step()?;
        let scale = previous.abs().max(bound.abs()).max(f64::MIN_POSITIVE);
        if (bound - previous).abs() <= config.tol * scale {
            converged = true;
            break;
        }
    }
    Ok(run.into_report(converged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::triangle_moments;
    use approx::assert_abs_diff_eq;

    fn pts(coords: &[[f64; 3]]) -> Vec<Primitive> {
        coords.iter().map(|c| Primitive::point(Vec3::from(*c))).collect()
    }

    #[test]
    fn single_point_fit_is_point_plus_floor() {
        let prims = pts(&[[1.0, 2.0, 3.0]]);
        let mut config = FitConfig::new(1);
        config.reg = Some(0.01);
        let report = fit(&prims, &config).unwrap();
        let c = report.model.components()[0];
        assert_eq!(c.mean, Vec3::new(1.0, 2.0, 3.0));
        assert_abs_diff_eq!(c.cov, Mat3::identity() * 0.01, epsilon = 1e-15);
    }

    #[test]
    fn single_triangle_exact_is_its_moments() {
        let tri = triangle_moments(&Vec3::zeros(), &Vec3::x(), &Vec3::y());
        let resp = Responsibilities::one_hot(&[0], 1);
        let m = m_step(&[tri], &resp, FitMode::Exact, 1e-3).unwrap();
        let c = m.model.components()[0];
        assert_abs_diff_eq!(c.mean, tri.mean, epsilon = 1e-15);
        assert_abs_diff_eq!(c.cov, tri.cov + Mat3::identity() * 1e-3, epsilon = 1e-15);
    }

    #[test]
    fn two_equal_triangles_pool_moments_and_scatter() {
        let t1 = triangle_moments(&Vec3::zeros(), &Vec3::x(), &Vec3::y());
        let t2 = triangle_moments(&Vec3::new(0.0, 0.0, 2.0), &Vec3::new(1.0, 0.0, 2.0), &Vec3::new(0.0, 1.0, 2.0));
        let resp = Responsibilities::one_hot(&[0, 0], 1);
        let m = m_step(&[t1, t2], &resp, FitMode::Exact, 0.5).unwrap();
        // Hand-derived: equal weights, centroids differ by 2 along z.
        let mut expected = t1.cov;
        expected[(2, 2)] += 1.0;
        expected += Mat3::identity() * 0.5;
        let c = m.model.components()[0];
        assert_abs_diff_eq!(c.mean, Vec3::new(1.0 / 3.0, 1.0 / 3.0, 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(c.cov, expected, epsilon = 1e-14);
    }

    #[test]
    fn estep_single_component() {
        let prims = vec![
            triangle_moments(&Vec3::zeros(), &Vec3::x(), &Vec3::y()),
            triangle_moments(&Vec3::z(), &Vec3::x(), &(Vec3::y() * 2.0)),
        ];
        let gmm = GaussianMixture::new(vec![Component {
            weight: 1.0,
            mean: Vec3::new(0.2, 0.1, 0.3),
            cov: Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 0.5)),
        }])
        .unwrap();
        let e = e_step(&prims, &gmm).unwrap();
        assert!((0..2).all(|j| e.responsibilities.row(j) == [1.0]));
        let expected: f64 = prims
            .iter()
            .map(|p| p.size * crate::mixture::expected_component_loglik(p, &gmm.components()[0]).unwrap())
            .sum();
        assert_abs_diff_eq!(e.lower_bound, expected, epsilon = 1e-13);
        assert_abs_diff_eq!(e.jensen_bound, expected, epsilon = 1e-13);
    }

    #[test]
    fn estep_far_primitive_belongs_to_near_component() {
        let gmm = GaussianMixture::new(vec![
            Component { weight: 0.5, mean: Vec3::zeros(), cov: Mat3::identity() },
            Component { weight: 0.5, mean: Vec3::new(1e4, 0.0, 0.0), cov: Mat3::identity() },
        ])
        .unwrap();
        let e = e_step(&pts(&[[0.1, 0.0, 0.0]]), &gmm).unwrap();
        assert_eq!(e.responsibilities.row(0)[0], 1.0);
        assert!(e.responsibilities.row(0)[1] < 1e-300);
    }

    #[test]
    fn entropy_completed_bound_matches_definition() {
        let prims = pts(&[[0.0, 0.0, 0.0], [1.0, 0.5, 0.0], [0.3, 0.2, 0.9], [2.0, 2.0, 2.0]]);
        let gmm = GaussianMixture::new(vec![
            Component { weight: 0.3, mean: Vec3::zeros(), cov: Mat3::identity() },
            Component { weight: 0.7, mean: Vec3::new(1.0, 1.0, 1.0), cov: Mat3::identity() * 2.0 },
        ])
        .unwrap();
        let e = e_step(&prims, &gmm).unwrap();
        let mut direct = 0.0;
        for (j, p) in prims.iter().enumerate() {
            for (i, c) in gmm.components().iter().enumerate() {
                let eta = e.responsibilities.row(j)[i];
                let ell = crate::mixture::expected_component_loglik(p, c).unwrap();
                direct += p.size * eta * (ell - eta.ln());
            }
        }
        assert_abs_diff_eq!(e.lower_bound, direct, epsilon = 1e-12);
    }

    #[test]
    fn zero_iterations_is_initial_mstep() {
        let prims = pts(&[[0.0; 3], [1.0, 0.0, 0.0], [5.0, 5.0, 0.0], [6.0, 5.0, 1.0], [0.0, 1.0, 1.0]]);
        let mut config = FitConfig::new(2);
        config.max_iters = 0;
        config.seed = 4;
        config.reg = Some(1e-3);
        let report = fit(&prims, &config).unwrap();
        let initial = init_kmeanspp(&prims, 2, 4).unwrap();
        let m = m_step(&prims, &initial, FitMode::Exact, 1e-3).unwrap();
        assert_eq!(report.model, m.model);
        assert_eq!(report.iterations_run, 0);
        assert_eq!(report.lower_bound_trace.len(), 1);
    }

    #[test]
    fn empty_component_is_rescued_at_worst_primitive() {
        let prims = pts(&[[0.0; 3], [0.1, 0.0, 0.0], [0.0, 0.1, 0.0], [9.0, 0.0, 0.0]]);
        let resp = Responsibilities::one_hot(&[0, 0, 0, 0], 2);
        let m = m_step(&prims, &resp, FitMode::Exact, 1e-2).unwrap();
        assert_eq!(m.rescued, vec![1]);
        assert_eq!(m.model.components()[1].mean, Vec3::new(9.0, 0.0, 0.0));
        let total: f64 = m.model.components().iter().map(|c| c.weight).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn config_and_input_validation() {
        let prims = pts(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        assert!(fit(&prims, &FitConfig::new(0)).is_err());
        let mut c = FitConfig::new(1);
        c.tol = 0.0;
        assert!(fit(&prims, &c).is_err());
        let mut c = FitConfig::new(1);
        c.reg = Some(-1.0);
        assert!(fit(&prims, &c).is_err());
        let flat: Vec<Primitive> = prims.iter().map(|p| Primitive { size: 0.0, ..*p }).collect();
        assert!(matches!(fit(&flat, &FitConfig::new(1)), Err(Error::Validation(_))));
        assert!(fit(&[], &FitConfig::new(1)).is_err());
    }

    #[test]
    fn approx_drops_primitive_covariance() {
        let t1 = triangle_moments(&Vec3::zeros(), &Vec3::x(), &Vec3::y());
        let t2 = triangle_moments(&Vec3::z(), &(Vec3::x() * 3.0), &Vec3::y());
        let prims = [t1, t2];
        let resp = Responsibilities::from_rows(2, vec![0.7, 0.3, 0.2, 0.8]).unwrap();
        let exact = m_step(&prims, &resp, FitMode::Exact, 1e-4).unwrap();
        let approx = m_step(&prims, &resp, FitMode::Approx, 1e-4).unwrap();
        for i in 0..2 {
            let w: Vec<f64> = (0..2).map(|j| resp.row(j)[i] * prims[j].size).collect();
            let pooled = (t1.cov * w[0] + t2.cov * w[1]) / (w[0] + w[1]);
            let diff = exact.model.components()[i].cov - approx.model.components()[i].cov;
            assert_abs_diff_eq!(diff, pooled, epsilon = 1e-12);
        }
    }
}
