//! Experiment drivers: fitting-fidelity sweeps, randomized registration
//! trials and depth frame-pair registration. Every run is governed by one
//! seed; per-row and per-trial seeds are derived from it.

mod bench;
mod fidelity;
mod frames;
mod stats;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::em::FitMode;
use crate::geometry::{mesh_to_primitives, points_to_primitives, Primitive, TriangleMesh, Vec3};
use crate::registration::RigidTransform;

pub use bench::{
    run_registration_benchmark, run_registration_benchmark_on, write_trials_csv, MethodSummary, Metric,
    TrialResult, TrialRow, TrialSpec,
};
pub use fidelity::{run_fidelity_sweep, write_fidelity_csv, FidelityRow, SweepConfig};
pub use frames::{
    back_project, load_tum_depth, run_frame_pair_d2d, DepthImage, FramePairConfig, Intrinsics, Plane,
    SyntheticScene,
};
pub use stats::{bootstrap_median_ci, mean, median};

/// Mixes a base seed with a stream tag and an index (SplitMix64 finalizer),
/// so derived seeds do not depend on evaluation order.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Rotation about a uniformly random axis by an angle uniform in
/// `[0, max_angle]`, and a translation uniform in the ball of radius
/// `max_trans`.
pub fn random_rigid(seed: u64, max_angle: f64, max_trans: f64) -> RigidTransform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = |rng: &mut ChaCha8Rng| loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    };
    let axis = unit(&mut rng);
    let angle = max_angle * rng.random::<f64>();
    let direction = unit(&mut rng);
    let radius = max_trans * rng.random::<f64>().cbrt();
    RigidTransform::from_axis_angle(&axis, angle, direction * radius)
}

/// What a GMM is fitted to in the fidelity and registration experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FidelityMode {
    /// Triangles with their second moments.
    Exact,
    /// Area-weighted centroids.
    Approx,
    /// Triangle centroids as unit points.
    PointsCentroid,
    /// Mesh vertices as unit points.
    PointsVertex,
}

impl FidelityMode {
    pub const ALL: [FidelityMode; 4] = [
        FidelityMode::Exact,
        FidelityMode::Approx,
        FidelityMode::PointsCentroid,
        FidelityMode::PointsVertex,
    ];

    pub fn fit_mode(self) -> FitMode {
        match self {
            FidelityMode::Approx => FitMode::Approx,
            _ => FitMode::Exact,
        }
    }

    pub fn primitives(self, mesh: &TriangleMesh) -> Vec<Primitive> {
        match self {
            FidelityMode::Exact | FidelityMode::Approx => mesh_to_primitives(mesh),
            FidelityMode::PointsCentroid => mesh_to_primitives(mesh)
                .into_iter()
                .map(|p| Primitive::point(p.mean))
                .collect(),
            FidelityMode::PointsVertex => {
                points_to_primitives(&mesh.vertex_cloud(), None).expect("no covariances given")
            }
        }
    }
}

impl fmt::Display for FidelityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FidelityMode::Exact => "exact",
            FidelityMode::Approx => "approx",
            FidelityMode::PointsCentroid => "points-centroid",
            FidelityMode::PointsVertex => "points-vertex",
        })
    }
}

impl FromStr for FidelityMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        FidelityMode::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| format!("unknown mode '{s}' (expected exact, approx, points-centroid or points-vertex)"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::rotation_error;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_bounds_give_identity() {
        let t = random_rigid(17, 0.0, 0.0);
        assert_eq!(t.apply(&Vec3::new(1.0, 2.0, 3.0)), Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn seeded() {
        assert_eq!(random_rigid(5, 0.5, 2.0), random_rigid(5, 0.5, 2.0));
        assert_ne!(random_rigid(5, 0.5, 2.0), random_rigid(6, 0.5, 2.0));
    }

    #[test]
    fn angle_and_radius_distribution() {
        let max_angle = 0.8;
        let n = 10_000;
        let draws: Vec<RigidTransform> = (0..n).map(|i| random_rigid(derive_seed(1, 2, i), max_angle, 3.0)).collect();
        let mean_angle = draws
            .iter()
            .map(|t| rotation_error(t, &RigidTransform::identity()))
            .sum::<f64>()
            / n as f64;
        assert!((mean_angle / (max_angle / 2.0) - 1.0).abs() < 0.02, "{mean_angle}");
        assert!(draws.iter().all(|t| t.translation().norm() <= 3.0));
        // Uniform in a ball: E‖t‖ = 3/4 · radius.
        let mean_r = draws.iter().map(|t| t.translation().norm()).sum::<f64>() / n as f64;
        assert_abs_diff_eq!(mean_r, 2.25, epsilon = 0.03);
    }

    #[test]
    fn modes_round_trip_through_strings() {
        for m in FidelityMode::ALL {
            assert_eq!(m.to_string().parse::<FidelityMode>().unwrap(), m);
        }
    }
}
