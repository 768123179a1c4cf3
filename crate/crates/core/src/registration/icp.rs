//! Point-to-point ICP: exact nearest neighbours, then the closed-form
//! least-squares rigid motion for those pairs, repeated.

use kiddo::{ImmutableKdTree, SquaredEuclidean};

use super::{RegistrationResult, RigidTransform};
use crate::geometry::{Mat3, PointCloud, Vec3};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct IcpConfig {
    pub max_iters: usize,
    /// Stop when the mean squared matching error improves by less than this.
    pub tol: f64,
    pub init: RigidTransform,
}

impl Default for IcpConfig {
    fn default() -> Self {
        IcpConfig {
            max_iters: 50_000,
            tol: 1e-9,
            init: RigidTransform::identity(),
        }
    }
}

/// Least-squares rotation and translation taking `source[i]` onto
/// `target[i]` (Kabsch). `None` when the cross-covariance has rank < 2.
pub fn kabsch(source: &[Vec3], target: &[Vec3]) -> Option<RigidTransform> {
    assert_eq!(source.len(), target.len());
    if source.is_empty() {
        return None;
    }
    let n = source.len() as f64;
    let sc = source.iter().sum::<Vec3>() / n;
    let tc = target.iter().sum::<Vec3>() / n;
    let h: Mat3 = source
        .iter()
        .zip(target)
        .map(|(s, t)| (s - sc) * (t - tc).transpose())
        .sum();
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= 1e-12 * sv[0] {
        return None;
    }
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose();
    Some(RigidTransform::from_matrix(&r, tc - r * sc))
}

/// Exact nearest-neighbour index over a fixed target cloud.
pub struct NearestNeighbors {
    tree: ImmutableKdTree<f64, 3>,
    points: Vec<Vec3>,
}

impl NearestNeighbors {
    pub fn new(target: &PointCloud) -> Self {
        let raw: Vec<[f64; 3]> = target.points.iter().map(|p| [p.x, p.y, p.z]).collect();
        NearestNeighbors {
            tree: ImmutableKdTree::new_from_slice(&raw),
            points: target.points.clone(),
        }
    }

    /// Closest target point and the squared distance to it.
    pub fn nearest(&self, q: &Vec3) -> (Vec3, f64) {
        let nn = self.tree.nearest_one::<SquaredEuclidean>(&[q.x, q.y, q.z]);
        (self.points[nn.item as usize], nn.distance)
    }
}

#[derive(Debug, Clone)]
pub struct IcpOutcome {
    pub result: RegistrationResult,
    /// Mean squared matching error at every correspondence pass.
    pub error_trace: Vec<f64>,
}

/// Aligns `source` onto `target`. The returned transform maps source
/// coordinates into the target frame.
pub fn register_icp(source: &PointCloud, target: &PointCloud, config: &IcpConfig) -> Result<IcpOutcome> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::validation("ICP needs non-empty source and target clouds"));
    }
    let index = NearestNeighbors::new(target);
    let mut transform = config.init;
    let mut previous = f64::INFINITY;
    let mut error_trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut moved: Vec<Vec3> = Vec::with_capacity(source.len());
    let mut matched: Vec<Vec3> = Vec::with_capacity(source.len());
    loop {
        moved.clear();
        matched.clear();
        let mut sq = 0.0;
        for p in &source.points {
            let m = transform.apply(p);
            let (q, d2) = index.nearest(&m);
            moved.push(m);
            matched.push(q);
            sq += d2;
        }
        let error = sq / source.len() as f64;
        error_trace.push(error);
        if previous - error < config.tol {
            converged = true;
            break;
        }
        if iterations >= config.max_iters {
            break;
        }
        let Some(step) = kabsch(&moved, &matched) else {
            break;
        };
        transform = step.compose(&transform);
        previous = error;
        iterations += 1;
    }
    let final_objective = *error_trace.last().expect("at least one pass");
    Ok(IcpOutcome {
        result: RegistrationResult {
            transform,
            final_objective,
            iterations,
            converged,
            rotation_error: None,
            translation_error: None,
            trace: error_trace.clone(),
        },
        error_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5)))
                .collect(),
        )
    }

    #[test]
    fn kabsch_recovers_exact_motion() {
        let cloud = random_cloud(30, 1);
        let truth = RigidTransform::from_axis_angle(&Vec3::new(0.2, 1.0, -0.4), 1.3, Vec3::new(3.0, -1.0, 0.5));
        let moved: Vec<Vec3> = cloud.points.iter().map(|p| truth.apply(p)).collect();
        let est = kabsch(&cloud.points, &moved).unwrap();
        assert!(super::super::rotation_error(&est, &truth) < 1e-12);
        assert_abs_diff_eq!(est.translation(), truth.translation(), epsilon = 1e-12);
    }

    #[test]
    fn kabsch_rejects_collinear_pairs() {
        let line: Vec<Vec3> = (0..5).map(|i| Vec3::x() * i as f64).collect();
        assert!(kabsch(&line, &line).is_none());
    }

    #[test]
    fn identical_clouds_stay_put() {
        let cloud = random_cloud(200, 2);
        let out = register_icp(&cloud, &cloud, &IcpConfig::default()).unwrap();
        let r = out.result;
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert!(super::super::rotation_error(&r.transform, &RigidTransform::identity()) < 1e-10);
        assert!(r.transform.translation().norm() < 1e-10);
    }

    #[test]
    fn recovers_ten_degree_rotation_with_full_overlap() {
        let cloud = random_cloud(300, 3);
        let truth = RigidTransform::from_axis_angle(&Vec3::new(0.3, 0.2, 1.0), 10f64.to_radians(), Vec3::zeros());
        let target = PointCloud::new(cloud.points.iter().map(|p| truth.apply(p)).collect());
        let out = register_icp(&cloud, &target, &IcpConfig::default()).unwrap();
        assert!(out.result.converged);
        assert!(super::super::rotation_error(&out.result.transform, &truth) < 1e-6);
        assert!(out.result.transform.translation().norm() < 1e-6);
        assert!(out.error_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn outlier_pulls_result_off_the_true_motion() {
        let cloud = random_cloud(100, 4);
        let truth = RigidTransform::from_axis_angle(&Vec3::z(), 5f64.to_radians(), Vec3::new(0.05, 0.0, 0.0));
        let target = PointCloud::new(cloud.points.iter().map(|p| truth.apply(p)).collect());
        let mut noisy = cloud.clone();
        noisy.points.push(Vec3::new(50.0, 50.0, 50.0));
        let out = register_icp(&noisy, &target, &IcpConfig::default()).unwrap();
        let clean = register_icp(&cloud, &target, &IcpConfig::default()).unwrap();
        let err = |r: &RegistrationResult| super::super::rotation_error(&r.transform, &truth);
        assert!(err(&out.result) > 100.0 * err(&clean.result).max(1e-12));
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(register_icp(&PointCloud::default(), &random_cloud(3, 0), &IcpConfig::default()).is_err());
    }
}
