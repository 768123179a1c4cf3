//! Closed-form L2 distance between Gaussian mixtures.
//!
//! `∫ N(x; a, A) N(x; b, B) dx = N(a; b, A + B)`, so
//! `∫ (g − h)² = Σ λλ' N(..)` over source-source, source-target and
//! target-target pairs. A rigid motion of the source leaves its self term
//! unchanged; [`d2d_l2`] still reports the full distance so that it is zero
//! exactly when the two densities agree.

use nalgebra::Cholesky;

use super::RigidTransform;
use crate::geometry::{Mat3, Vec3};
use crate::mixture::{half_log_2pi_k, GaussianMixture};
use crate::{Error, Result};

fn overlap(a_mean: &Vec3, a_cov: &Mat3, b_mean: &Vec3, b_cov: &Mat3) -> Result<f64> {
    let sum = a_cov + b_cov;
    let chol = Cholesky::new(sum).ok_or_else(|| Error::numeric("summed covariances are not positive definite"))?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let mut d = a_mean - b_mean;
    chol.l_dirty().solve_lower_triangular_mut(&mut d);
    Ok((-half_log_2pi_k() - 0.5 * log_det - 0.5 * d.norm_squared()).exp())
}

fn cross_term(a: &[(f64, Vec3, Mat3)], b: &[(f64, Vec3, Mat3)]) -> Result<f64> {
    let mut total = 0.0;
    for (wa, ma, ca) in a {
        for (wb, mb, cb) in b {
            total += wa * wb * overlap(ma, ca, mb, cb)?;
        }
    }
    Ok(total)
}

fn moved(gmm: &GaussianMixture, t: &RigidTransform) -> Vec<(f64, Vec3, Mat3)> {
    let r = t.rotation_matrix();
    gmm.components()
        .iter()
        .map(|c| (c.weight, t.apply(&c.mean), r * c.cov * r.transpose()))
        .collect()
}

fn as_is(gmm: &GaussianMixture) -> Vec<(f64, Vec3, Mat3)> {
    gmm.components().iter().map(|c| (c.weight, c.mean, c.cov)).collect()
}

/// `∫ (g_T − h)² dx` where `g_T` is `source` moved by `t`, in full form.
pub fn d2d_l2(source: &GaussianMixture, target: &GaussianMixture, t: &RigidTransform) -> Result<f64> {
    D2dObjective::new(source, target)?.value(t)
}

/// L2 objective with the transform-independent self terms precomputed.
#[derive(Debug, Clone)]
pub struct D2dObjective<'a> {
    source: &'a GaussianMixture,
    target: Vec<(f64, Vec3, Mat3)>,
    constant: f64,
}

impl<'a> D2dObjective<'a> {
    pub fn new(source: &'a GaussianMixture, target: &GaussianMixture) -> Result<Self> {
        let s = as_is(source);
        let t = as_is(target);
        let constant = cross_term(&s, &s)? + cross_term(&t, &t)?;
        Ok(D2dObjective {
            source,
            target: t,
            constant,
        })
    }

    /// Full L2 distance at `t`.
    pub fn value(&self, t: &RigidTransform) -> Result<f64> {
        Ok(self.constant - 2.0 * cross_term(&moved(self.source, t), &self.target)?)
    }
}
