//! Gaussian mixtures in three dimensions: densities, expected log-densities
//! over primitives, and the JSON model file.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::Cholesky;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{Mat3, PointCloud, Primitive, Vec3};
use crate::{Error, Result};

const DIM: f64 = 3.0;

/// `(k/2) log 2π` for k = 3.
pub(crate) fn half_log_2pi_k() -> f64 {
    0.5 * DIM * (2.0 * PI).ln()
}

/// Tolerance on `Σλ = 1` when validating a mixture.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// One weighted Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec3,
    pub cov: Mat3,
}

/// Cholesky factor of a covariance with the quantities every density
/// evaluation needs.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: Vec3,
    chol: Cholesky<f64, nalgebra::U3>,
    precision: Mat3,
    /// `−(k/2) log 2π − ½ log det Σ`
    log_norm: f64,
}

impl Gaussian {
    pub fn new(mean: Vec3, cov: &Mat3) -> Result<Self> {
        let chol = Cholesky::new(*cov)
            .ok_or_else(|| Error::numeric(format!("covariance is not positive definite: {cov}")))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::numeric("covariance has a non-finite log-determinant"));
        }
        let precision = chol.inverse();
        Ok(Gaussian {
            mean,
            precision: (precision + precision.transpose()) * 0.5,
            chol,
            log_norm: -half_log_2pi_k() - 0.5 * log_det,
        })
    }

    /// `(x−μ)ᵀ Σ⁻¹ (x−μ)`, through a triangular solve.
    pub fn mahalanobis_sq(&self, x: &Vec3) -> f64 {
        let mut d = x - self.mean;
        self.chol.l_dirty().solve_lower_triangular_mut(&mut d);
        d.norm_squared()
    }

    pub fn log_pdf(&self, x: &Vec3) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis_sq(x)
    }

    /// `trace(Σ⁻¹ S)` for symmetric `S`.
    pub fn trace_precision_times(&self, s: &Mat3) -> f64 {
        self.precision.component_mul(s).sum()
    }

    /// Mean over the uniform distribution of a primitive with the given
    /// centroid and second central moment of `log N(x)`.
    pub fn expected_log_pdf(&self, mean: &Vec3, cov: &Mat3) -> f64 {
        self.log_pdf(mean) - 0.5 * self.trace_precision_times(cov)
    }

    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }
}

/// `log N(x; μ, Σ)` in three dimensions.
pub fn gauss_logpdf(x: &Vec3, mean: &Vec3, cov: &Mat3) -> Result<f64> {
    Ok(Gaussian::new(*mean, cov)?.log_pdf(x))
}

/// Numerically stable `log Σ exp(v)`. Empty or all `−∞` input gives `−∞`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Immutable K-component mixture. Weights are validated to sum to one and
/// every covariance is factored on construction.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    components: Vec<Component>,
    gaussians: Vec<Gaussian>,
    log_weights: Vec<f64>,
}

impl PartialEq for GaussianMixture {
    fn eq(&self, other: &Self) -> bool {
        self.components == other.components
    }
}

impl GaussianMixture {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::validation("a mixture needs at least one component"));
        }
        if let Some(c) = components.iter().find(|c| !(c.weight >= 0.0 && c.weight.is_finite())) {
            return Err(Error::validation(format!("invalid mixture weight {}", c.weight)));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::validation(format!("mixture weights sum to {total}, not 1")));
        }
        for (i, c) in components.iter().enumerate() {
            if c.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("component {i} has a non-finite mean")));
            }
            let asym = (c.cov - c.cov.transpose()).abs().max();
            if asym > 1e-9 * c.cov.abs().max().max(f64::MIN_POSITIVE) {
                return Err(Error::validation(format!("component {i} covariance is not symmetric")));
            }
        }
        let gaussians = components
            .iter()
            .enumerate()
            .map(|(i, c)| {
                Gaussian::new(c.mean, &c.cov).map_err(|e| Error::numeric(format!("component {i}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let log_weights = components.iter().map(|c| c.weight.ln()).collect();
        Ok(GaussianMixture {
            components,
            gaussians,
            log_weights,
        })
    }

    /// Builds a mixture from weights that only need to be positive; they are
    /// normalized here.
    pub fn from_unnormalized(mut components: Vec<Component>) -> Result<Self> {
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::validation("mixture weights have no positive mass"));
        }
        for c in &mut components {
            c.weight /= total;
        }
        Self::new(components)
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn gaussian(&self, i: usize) -> &Gaussian {
        &self.gaussians[i]
    }

    pub fn log_weight(&self, i: usize) -> f64 {
        self.log_weights[i]
    }

    /// `log λ_i + log N(x; μ_i, Σ_i)`
    pub fn weighted_log_pdf(&self, i: usize, x: &Vec3) -> f64 {
        self.log_weights[i] + self.gaussians[i].log_pdf(x)
    }

    /// `log g(x)` via log-sum-exp over components.
    pub fn log_pdf(&self, x: &Vec3) -> f64 {
        let mut terms = [0.0; 16];
        if self.len() <= terms.len() {
            for (i, t) in terms.iter_mut().enumerate().take(self.len()) {
                *t = self.weighted_log_pdf(i, x);
            }
            log_sum_exp(&terms[..self.len()])
        } else {
            let terms: Vec<f64> = (0..self.len()).map(|i| self.weighted_log_pdf(i, x)).collect();
            log_sum_exp(&terms)
        }
    }

    /// Expected `log λ_i + log N(x)` per unit size of the primitive, with the
    /// primitive's covariance replaced by `cov`.
    pub fn expected_weighted_log_pdf(&self, i: usize, mean: &Vec3, cov: &Mat3) -> f64 {
        self.log_weights[i] + self.gaussians[i].expected_log_pdf(mean, cov)
    }
}

/// `log g(x)` for a mixture.
pub fn mixture_logpdf(x: &Vec3, gmm: &GaussianMixture) -> f64 {
    gmm.log_pdf(x)
}

/// Per-point average log-likelihood of a cloud.
pub fn avg_loglik(cloud: &PointCloud, gmm: &GaussianMixture) -> Result<f64> {
    if cloud.is_empty() {
        return Err(Error::validation("average log-likelihood of an empty cloud"));
    }
    let per_point: Vec<f64> = cloud.points.par_iter().map(|x| gmm.log_pdf(x)).collect();
    Ok(per_point.iter().sum::<f64>() / cloud.len() as f64)
}

/// Expected weighted log-density of one component over a primitive, per unit
/// of primitive size:
/// `log λ − (k/2) log 2π − ½ log det Σ − ½ (μ_p−μ)ᵀΣ⁻¹(μ_p−μ) − ½ tr(Σ⁻¹ Σ_p)`.
pub fn expected_component_loglik(p: &Primitive, component: &Component) -> Result<f64> {
    let g = Gaussian::new(component.mean, &component.cov)?;
    Ok(component.weight.ln() + g.expected_log_pdf(&p.mean, &p.cov))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    weights: Vec<f64>,
    means: Vec<[f64; 3]>,
    covariances: Vec<[[f64; 3]; 3]>,
}

impl GaussianMixture {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            weights: self.components.iter().map(|c| c.weight).collect(),
            means: self.components.iter().map(|c| c.mean.into()).collect(),
            covariances: self
                .components
                .iter()
                .map(|c| {
                    let m = &c.cov;
                    std::array::from_fn(|r| std::array::from_fn(|col| m[(r, col)]))
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        let k = file.weights.len();
        if file.means.len() != k || file.covariances.len() != k {
            return Err(Error::validation(format!(
                "model lists {k} weights, {} means and {} covariances",
                file.means.len(),
                file.covariances.len()
            )));
        }
        let components = (0..k)
            .map(|i| Component {
                weight: file.weights[i],
                mean: Vec3::from(file.means[i]),
                cov: Mat3::from_fn(|r, c| file.covariances[i][r][c]),
            })
            .collect();
        GaussianMixture::new(components)
    }
}

pub fn save_model(gmm: &GaussianMixture, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, gmm.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GaussianMixture> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    GaussianMixture::from_json(&text)
}
