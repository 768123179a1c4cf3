//! Meshes, point clouds and the moment summaries EM consumes.

mod io;

use nalgebra::{Matrix3, Vector3};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub use io::{load_mesh, load_points, parse_obj, parse_ply, write_ply_points};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Indexed triangle surface.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Builds a mesh, rejecting faces that index past the vertex list.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (f, face) in faces.iter().enumerate() {
            if let Some(&bad) = face.iter().find(|&&i| i >= n) {
                return Err(Error::validation(format!(
                    "face {f} references vertex {bad}, but the mesh has {n} vertices"
                )));
            }
        }
        Ok(TriangleMesh { vertices, faces })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangles(&self) -> impl Iterator<Item = [Vec3; 3]> + '_ {
        (0..self.faces.len()).map(move |f| self.triangle(f))
    }

    pub fn surface_area(&self) -> f64 {
        self.triangles().map(|[a, b, c]| triangle_area(&a, &b, &c)).sum()
    }

    /// The vertex positions as a cloud.
    pub fn vertex_cloud(&self) -> PointCloud {
        PointCloud::new(self.vertices.clone())
    }

    /// Copy of the mesh moved by `offset`.
    pub fn translated(&self, offset: &Vec3) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| v + offset).collect(),
            faces: self.faces.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Moment summary of one geometric element: centroid, second central moment
/// of the uniform distribution over it, and its size (area, or a per-sample
/// weight for points).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub mean: Vec3,
    pub cov: Mat3,
    pub size: f64,
}

impl Primitive {
    /// A zero-extent point of unit weight.
    pub fn point(p: Vec3) -> Self {
        Primitive {
            mean: p,
            cov: Mat3::zeros(),
            size: 1.0,
        }
    }
}

fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Centroid, area and covariance of the uniform density on triangle `abc`.
///
/// The covariance is `(A Aᵀ + B Bᵀ + C Cᵀ − 3 μ μᵀ) / 12`, evaluated on
/// vertices centered at the centroid so translated triangles do not lose
/// precision to cancellation.
pub fn triangle_moments(a: &Vec3, b: &Vec3, c: &Vec3) -> Primitive {
    let mean = (a + b + c) / 3.0;
    let (da, db, dc) = (a - mean, b - mean, c - mean);
    let cov = (da * da.transpose() + db * db.transpose() + dc * dc.transpose()) / 12.0;
    Primitive {
        mean,
        cov: symmetrize(&cov),
        size: triangle_area(a, b, c),
    }
}

pub(crate) fn symmetrize(m: &Mat3) -> Mat3 {
    (m + m.transpose()) * 0.5
}

/// One primitive per face, in face order. Zero-area faces are kept with size 0.
pub fn mesh_to_primitives(mesh: &TriangleMesh) -> Vec<Primitive> {
    mesh.triangles()
        .map(|[a, b, c]| triangle_moments(&a, &b, &c))
        .collect()
}

/// Unit-size point primitives, optionally carrying a known per-point covariance.
pub fn points_to_primitives(cloud: &PointCloud, covs: Option<&[Mat3]>) -> Result<Vec<Primitive>> {
    match covs {
        None => Ok(cloud.points.iter().copied().map(Primitive::point).collect()),
        Some(covs) => {
            if covs.len() != cloud.len() {
                return Err(Error::validation(format!(
                    "{} covariances supplied for {} points",
                    covs.len(),
                    cloud.len()
                )));
            }
            Ok(cloud
                .points
                .iter()
                .zip(covs)
                .map(|(p, c)| Primitive {
                    mean: *p,
                    cov: *c,
                    size: 1.0,
                })
                .collect())
        }
    }
}

/// Uncertainty rectangle spanning `width` along X and `height` along Y,
/// centered on a measurement. Its weight is one measurement, not its area.
pub fn rect_primitive(center: Vec3, width: f64, height: f64) -> Result<Primitive> {
    if !(width >= 0.0 && height >= 0.0) {
        return Err(Error::validation(format!(
            "rectangle dimensions must be non-negative, got {width} x {height}"
        )));
    }
    Ok(Primitive {
        mean: center,
        cov: Mat3::from_diagonal(&Vec3::new(width * width / 12.0, height * height / 12.0, 0.0)),
        size: 1.0,
    })
}

/// Draws `n` points uniformly over the surface: faces by area, positions
/// uniform in barycentric coordinates.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::validation("sample count must be at least 1"));
    }
    let areas: Vec<f64> = mesh.triangles().map(|[a, b, c]| triangle_area(&a, &b, &c)).collect();
    let faces = WeightedIndex::new(&areas)
        .map_err(|_| Error::validation("cannot sample a mesh with zero surface area"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            let [a, b, c] = mesh.triangle(faces.sample(&mut rng));
            let r1: f64 = rng.random();
            let r2: f64 = rng.random();
            let s = r1.sqrt();
            a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2)
        })
        .collect();
    Ok(PointCloud::new(points))
}

/// Length of the diagonal of the axis-aligned bounding box.
pub fn bbox_diagonal(points: &[Vec3]) -> Result<f64> {
    let (lo, hi) = bounding_box(points)?;
    Ok((hi - lo).norm())
}

/// Axis-aligned bounds `(min, max)`.
pub fn bounding_box(points: &[Vec3]) -> Result<(Vec3, Vec3)> {
    let first = points
        .first()
        .ok_or_else(|| Error::validation("bounding box of an empty point set"))?;
    Ok(points
        .iter()
        .fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
}
