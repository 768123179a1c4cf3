//! Rigid registration against fitted mixtures, plus an ICP baseline.
//!
//! Both mixture objectives are minimized over a flat parameter vector by the
//! same quasi-Newton routine with central-difference gradients. The default
//! parameterization is `(w, x, y, z, tx, ty, tz)` with the quaternion left
//! unnormalized during the search and normalized inside the objective.

mod d2d;
mod icp;
mod optimize;
mod transform;

use rayon::prelude::*;
use serde::Serialize;

use crate::geometry::{PointCloud, Vec3};
use crate::mixture::GaussianMixture;
use crate::{Error, Result};

pub use d2d::{d2d_l2, D2dObjective};
pub use icp::{kabsch, register_icp, IcpConfig, IcpOutcome, NearestNeighbors};
pub use optimize::{default_step, minimize, numerical_gradient, MinimizeConfig, MinimizeResult, StopReason};
pub use transform::{rotation_error, translation_error, RigidTransform, TransformRecord};

#[derive(Debug, Clone, Serialize)]
pub struct RegistrationResult {
    #[serde(serialize_with = "serialize_transform")]
    pub transform: RigidTransform,
    pub final_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Radians, against a known ground truth.
    pub rotation_error: Option<f64>,
    /// Percent of a reference length, against a known ground truth.
    pub translation_error: Option<f64>,
    #[serde(skip)]
    pub trace: Vec<f64>,
}

fn serialize_transform<S: serde::Serializer>(t: &RigidTransform, s: S) -> std::result::Result<S::Ok, S::Error> {
    TransformRecord::from(t).serialize(s)
}

impl RegistrationResult {
    /// Fills in both error metrics against `truth`, with translation error as
    /// a percentage of `diag`.
    pub fn with_ground_truth(mut self, truth: &RigidTransform, diag: f64) -> Self {
        self.rotation_error = Some(rotation_error(&self.transform, truth));
        self.translation_error = Some(translation_error(&self.transform, truth, diag));
        self
    }
}

/// How a rigid transform is laid out in the optimizer's parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parameterization {
    /// `(w, x, y, z, t)` in ℝ⁷.
    #[default]
    Quaternion,
    /// `(θ·axis, t)` in ℝ⁶.
    RotationVector,
}

impl Parameterization {
    pub fn encode(self, t: &RigidTransform) -> Vec<f64> {
        let tr = t.translation();
        match self {
            Parameterization::Quaternion => {
                let q = t.quaternion_wxyz();
                vec![q[0], q[1], q[2], q[3], tr.x, tr.y, tr.z]
            }
            Parameterization::RotationVector => {
                let v = t.rotation_vector();
                vec![v.x, v.y, v.z, tr.x, tr.y, tr.z]
            }
        }
    }

    pub fn decode(self, x: &[f64]) -> Result<RigidTransform> {
        match self {
            Parameterization::Quaternion => {
                RigidTransform::from_quaternion([x[0], x[1], x[2], x[3]], Vec3::new(x[4], x[5], x[6]))
            }
            Parameterization::RotationVector => Ok(RigidTransform::from_rotation_vector(
                &Vec3::new(x[0], x[1], x[2]),
                Vec3::new(x[3], x[4], x[5]),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegistrationConfig {
    pub init: RigidTransform,
    pub parameterization: Parameterization,
    pub optimizer: MinimizeConfig,
}

/// `−Σ log g(T x)` over the cloud; lower is better.
pub fn p2d_objective(cloud: &PointCloud, gmm: &GaussianMixture, t: &RigidTransform) -> f64 {
    let terms: Vec<f64> = cloud.points.par_iter().map(|x| gmm.log_pdf(&t.apply(x))).collect();
    -terms.iter().sum::<f64>()
}

fn run_optimizer<F>(objective: F, config: &RegistrationConfig) -> Result<RegistrationResult>
where
    F: Fn(&RigidTransform) -> Result<f64>,
{
    let param = config.parameterization;
    let f = |x: &[f64]| match param.decode(x).and_then(|t| objective(&t)) {
        Ok(v) => v,
        Err(_) => f64::NAN,
    };
    let x0 = param.encode(&config.init);
    let out = minimize(f, &x0, &config.optimizer)?;
    Ok(RegistrationResult {
        transform: param.decode(&out.x)?,
        final_objective: out.f,
        iterations: out.iterations,
        converged: out.converged,
        rotation_error: None,
        translation_error: None,
        trace: out.trace,
    })
}

/// Finds the rigid transform maximizing the likelihood of the moved cloud
/// under `gmm`. The result maps cloud coordinates into the model frame.
pub fn register_p2d(cloud: &PointCloud, gmm: &GaussianMixture, config: &RegistrationConfig) -> Result<RegistrationResult> {
    if cloud.is_empty() {
        return Err(Error::validation("cannot register an empty cloud"));
    }
    run_optimizer(|t| Ok(p2d_objective(cloud, gmm, t)), config)
}

/// Minimizes the L2 distance between `source` moved by the transform and
/// `target`.
pub fn register_d2d(
    source: &GaussianMixture,
    target: &GaussianMixture,
    config: &RegistrationConfig,
) -> Result<RegistrationResult> {
    let objective = D2dObjective::new(source, target)?;
    run_optimizer(|t| objective.value(t), config)
}
