use nalgebra::{Quaternion, Rotation3, Unit, UnitQuaternion};
use serde::Serialize;

use crate::geometry::{Mat3, Vec3};
use crate::{Error, Result};

/// Rotation (unit quaternion) followed by translation: `x ↦ R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: UnitQuaternion<f64>,
    translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        RigidTransform {
            rotation: canonical(rotation),
            translation,
        }
    }

    /// From a possibly unnormalized quaternion `(w, x, y, z)`; normalizes it.
    pub fn from_quaternion(wxyz: [f64; 4], translation: Vec3) -> Result<Self> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = q.norm();
        if !(norm > 1e-12 && norm.is_finite()) {
            return Err(Error::numeric(format!("quaternion {wxyz:?} cannot be normalized")));
        }
        Ok(Self::new(UnitQuaternion::new_unchecked(q / norm), translation))
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64, translation: Vec3) -> Self {
        match Unit::try_new(*axis, 1e-300) {
            Some(axis) => Self::new(UnitQuaternion::from_axis_angle(&axis, angle), translation),
            None => Self::new(UnitQuaternion::identity(), translation),
        }
    }

    /// From a rotation vector `θ·axis`.
    pub fn from_rotation_vector(v: &Vec3, translation: Vec3) -> Self {
        Self::new(UnitQuaternion::from_scaled_axis(*v), translation)
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        *self.rotation.to_rotation_matrix().matrix()
    }

    /// `(w, x, y, z)` with `w ≥ 0`.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn rotation_vector(&self) -> Vec3 {
        self.rotation.scaled_axis()
    }

    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.rotation * x + self.translation
    }

    pub fn inverse(&self) -> Self {
        let r = self.rotation.inverse();
        Self::new(r, -(r * self.translation))
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn from_matrix(r: &Mat3, translation: Vec3) -> Self {
        let rot = Rotation3::from_matrix_unchecked(*r);
        Self::new(UnitQuaternion::from_rotation_matrix(&rot), translation)
    }
}

/// Angle of `a.q · b.q⁻¹`, in `[0, π]`.
pub fn rotation_error(a: &RigidTransform, b: &RigidTransform) -> f64 {
    let d = a.rotation * b.rotation.inverse();
    let q = d.quaternion();
    2.0 * q.imag().norm().atan2(q.w.abs())
}

/// `‖a.t − b.t‖ / diag × 100`.
pub fn translation_error(a: &RigidTransform, b: &RigidTransform, diag: f64) -> f64 {
    (a.translation - b.translation).norm() / diag * 100.0
}

/// Serializable view: quaternion with `w ≥ 0` and translation.
#[derive(Debug, Clone, Serialize)]
pub struct TransformRecord {
    pub quaternion: [f64; 4],
    pub translation: [f64; 3],
}

impl From<&RigidTransform> for TransformRecord {
    fn from(t: &RigidTransform) -> Self {
        TransformRecord {
            quaternion: t.quaternion_wxyz(),
            translation: (*t.translation()).into(),
        }
    }
}
