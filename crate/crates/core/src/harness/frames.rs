//! Depth frame pairs: pinhole back-projection into rectangle primitives,
//! a TUM-style depth reader and a small raycast scene with known motion.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::em::{fit, FitConfig};
use crate::geometry::{rect_primitive, Primitive, Vec3};
use crate::registration::{register_d2d, RegistrationConfig, RegistrationResult, RigidTransform};
use crate::{Error, Result};

/// Depth units per metre in TUM RGB-D depth PNGs.
pub const TUM_DEPTH_SCALE: f64 = 5000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Default calibration shipped with the TUM RGB-D tools.
    pub fn tum_default() -> Self {
        Intrinsics {
            fx: 525.0,
            fy: 525.0,
            cx: 319.5,
            cy: 239.5,
        }
    }

    fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Row-major depth in metres; zero or non-finite marks a missing reading.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    depth: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, depth: Vec<f64>) -> Result<Self> {
        if depth.len() != width * height {
            return Err(Error::validation(format!(
                "{} depth values for a {width} x {height} image",
                depth.len()
            )));
        }
        Ok(DepthImage { width, height, depth })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.depth[v * self.width + u]
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|z| is_valid(**z)).count()
    }

    /// Adds independent Gaussian noise to every valid reading.
    pub fn with_noise(&self, sigma: f64, seed: u64) -> Result<DepthImage> {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::validation(format!("bad noise level: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth = self
            .depth
            .iter()
            .map(|&z| if is_valid(z) { z + normal.sample(&mut rng) } else { z })
            .collect();
        Ok(DepthImage { depth, ..*self })
    }
}

fn is_valid(z: f64) -> bool {
    z.is_finite() && z > 0.0
}

/// Reads a 16-bit single-channel PNG in TUM units (5000 per metre).
pub fn load_tum_depth(path: impl AsRef<Path>) -> Result<DepthImage> {
    let path = path.as_ref();
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
    let image::DynamicImage::ImageLuma16(gray) = img else {
        return Err(Error::validation(format!(
            "{}: expected a 16-bit grayscale depth image",
            path.display()
        )));
    };
    let (w, h) = gray.dimensions();
    let depth = gray.pixels().map(|p| p.0[0] as f64 / TUM_DEPTH_SCALE).collect();
    DepthImage::new(w as usize, h as usize, depth)
}

/// One primitive per valid pixel (every `stride`-th in each direction).
/// With `uncertainty` each is a rectangle the size of the pixel footprint
/// at its depth, `z/fx` by `z/fy`; otherwise a zero-covariance point.
pub fn back_project(depth: &DepthImage, intrinsics: &Intrinsics, stride: usize, uncertainty: bool) -> Result<Vec<Primitive>> {
    if stride == 0 {
        return Err(Error::validation("stride must be at least 1"));
    }
    let mut out = Vec::new();
    for v in (0..depth.height).step_by(stride) {
        for u in (0..depth.width).step_by(stride) {
            let z = depth.get(u, v);
            if !is_valid(z) {
                continue;
            }
            let p = intrinsics.ray(u as f64, v as f64) * z;
            out.push(if uncertainty {
                rect_primitive(p, z / intrinsics.fx, z / intrinsics.fy)?
            } else {
                Primitive::point(p)
            });
        }
    }
    if out.is_empty() {
        return Err(Error::validation("depth image has no valid readings"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramePairConfig {
    pub k: usize,
    pub stride: usize,
    pub uncertainty: bool,
    pub fit_iters: usize,
    pub fit_tol: f64,
    pub seed: u64,
    pub registration: RegistrationConfig,
}

impl Default for FramePairConfig {
    fn default() -> Self {
        FramePairConfig {
            k: 100,
            stride: 1,
            uncertainty: true,
            fit_iters: 25,
            fit_tol: 1e-6,
            seed: 0,
            registration: RegistrationConfig::default(),
        }
    }
}

/// Fits a mixture to each frame and minimizes their L2 distance. The
/// returned transform maps frame-`a` camera coordinates into frame `b`.
pub fn run_frame_pair_d2d(
    a: &DepthImage,
    b: &DepthImage,
    intrinsics: &Intrinsics,
    config: &FramePairConfig,
) -> Result<RegistrationResult> {
    let fit_frame = |depth: &DepthImage, seed: u64| {
        let prims = back_project(depth, intrinsics, config.stride, config.uncertainty)?;
        let fit_config = FitConfig {
            max_iters: config.fit_iters,
            tol: config.fit_tol,
            seed,
            ..FitConfig::new(config.k.min(prims.len()))
        };
        Ok::<_, Error>(fit(&prims, &fit_config)?.model)
    };
    let source = fit_frame(a, config.seed)?;
    let target = fit_frame(b, config.seed.wrapping_add(1))?;
    register_d2d(&source, &target, &config.registration)
}

/// Infinite plane `normal · x = offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

/// Planes seen by a pinhole camera, rendered by ray casting.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub planes: Vec<Plane>,
    /// Readings beyond this range are dropped.
    pub max_depth: f64,
}

impl SyntheticScene {
    /// Floor, left wall and back wall meeting in a corner in front of a
    /// camera at the origin looking down +z with +y pointing down. Three
    /// independent normals make every translation observable.
    pub fn room_corner() -> Self {
        SyntheticScene {
            planes: vec![
                Plane { normal: Vec3::y(), offset: 1.0 },
                Plane { normal: Vec3::x(), offset: -1.0 },
                Plane { normal: Vec3::z(), offset: 3.0 },
            ],
            max_depth: 10.0,
        }
    }

    /// Depth seen by a camera whose pose maps camera coordinates to the world.
    pub fn render(&self, pose: &RigidTransform, intrinsics: &Intrinsics, width: usize, height: usize) -> DepthImage {
        let r = pose.rotation_matrix();
        let origin = *pose.translation();
        let mut depth = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                // Camera-frame ray with unit z, so the hit parameter is the depth.
                let dir = r * intrinsics.ray(u as f64, v as f64);
                let z = self
                    .planes
                    .iter()
                    .filter_map(|p| {
                        let denom = p.normal.dot(&dir);
                        let t = (p.offset - p.normal.dot(&origin)) / denom;
                        (denom.abs() > 1e-12 && t > 0.0).then_some(t)
                    })
                    .fold(f64::INFINITY, f64::min);
                depth.push(if z <= self.max_depth { z } else { 0.0 });
            }
        }
        DepthImage { width, height, depth }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::rotation_error;
    use approx::assert_abs_diff_eq;

    fn small_intrinsics() -> Intrinsics {
        Intrinsics { fx: 40.0, fy: 40.0, cx: 23.5, cy: 17.5 }
    }

    #[test]
    fn back_projection_inverts_the_pinhole_model() {
        let intr = small_intrinsics();
        let mut d = vec![0.0; 4 * 3];
        d[2 * 4 + 3] = 2.0;
        let img = DepthImage::new(4, 3, d).unwrap();
        let prims = back_project(&img, &intr, 1, true).unwrap();
        assert_eq!(prims.len(), 1);
        let p = prims[0].mean;
        assert_abs_diff_eq!(p, Vec3::new((3.0 - 23.5) * 2.0 / 40.0, (2.0 - 17.5) * 2.0 / 40.0, 2.0), epsilon = 1e-15);
        let side = 2.0 / 40.0;
        assert_abs_diff_eq!(prims[0].cov[(0, 0)], side * side / 12.0, epsilon = 1e-18);
        assert_eq!(prims[0].cov[(2, 2)], 0.0);
    }

    #[test]
    fn empty_depth_is_a_validation_error() {
        let img = DepthImage::new(3, 2, vec![0.0; 6]).unwrap();
        assert!(matches!(back_project(&img, &small_intrinsics(), 1, true), Err(Error::Validation(_))));
        assert!(DepthImage::new(3, 2, vec![0.0; 5]).is_err());
    }

    #[test]
    fn renderer_hits_the_back_wall_on_axis() {
        let scene = SyntheticScene::room_corner();
        let intr = Intrinsics { fx: 40.0, fy: 40.0, cx: 0.0, cy: 0.0 };
        let img = scene.render(&RigidTransform::identity(), &intr, 1, 1);
        assert_abs_diff_eq!(img.get(0, 0), 3.0, epsilon = 1e-15);
        let moved = scene.render(&RigidTransform::new(Default::default(), Vec3::new(0.0, 0.0, 0.5)), &intr, 1, 1);
        assert_abs_diff_eq!(moved.get(0, 0), 2.5, epsilon = 1e-15);
    }

    #[test]
    fn identical_frames_register_to_identity() {
        let intr = small_intrinsics();
        let img = SyntheticScene::room_corner().render(&RigidTransform::identity(), &intr, 48, 36);
        let config = FramePairConfig { k: 12, stride: 2, ..Default::default() };
        let r = run_frame_pair_d2d(&img, &img, &intr, &config).unwrap();
        assert!(rotation_error(&r.transform, &RigidTransform::identity()) < 1e-2);
        assert!(r.transform.translation().norm() < 1e-3, "{:?}", r.transform);
    }

    #[test]
    fn tum_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("depth.png");
        let raw: Vec<u16> = vec![0, 5000, 10000, 65535];
        image::ImageBuffer::<image::Luma<u16>, _>::from_raw(2, 2, raw).unwrap().save(&path).unwrap();
        let img = load_tum_depth(&path).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.get(1, 0), 1.0);
        assert_eq!(img.get(0, 1), 2.0);
        assert_eq!(img.valid_count(), 3);
    }
}
