//! Hard initial assignments: uniform random, or size-weighted k-means++
//! seeding refined by Lloyd iterations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Responsibilities;
use crate::geometry::{Primitive, Vec3};
use crate::{Error, Result};

const MAX_LLOYD_ITERATIONS: usize = 100;

/// Every primitive goes to one uniformly chosen component.
pub fn init_random(primitives: &[Primitive], k: usize, seed: u64) -> Result<Responsibilities> {
    if k < 1 {
        return Err(Error::validation("component count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = primitives.iter().map(|_| rng.random_range(0..k)).collect();
    Ok(Responsibilities::one_hot(&labels, k))
}

/// k-means++ on primitive centroids, with seeding probability proportional to
/// `size × D²`, then Lloyd iterations to convergence.
pub fn init_kmeanspp(primitives: &[Primitive], k: usize, seed: u64) -> Result<Responsibilities> {
    let labels = kmeans_labels(primitives, k, seed)?;
    Ok(Responsibilities::one_hot(&labels, k))
}

fn distinct_count(points: &[Vec3]) -> usize {
    let mut keys: Vec<[u64; 3]> = points
        .iter()
        .map(|p| [p.x, p.y, p.z].map(|v| (v + 0.0).to_bits()))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// Draws an index with probability proportional to `weights`; `None` when
/// they carry no mass.
fn sample_weighted(rng: &mut ChaCha8Rng, weights: &[f64]) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return None;
    }
    let mut target = rng.random::<f64>() * total;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if target < w {
                return Some(i);
            }
            target -= w;
            last_positive = Some(i);
        }
    }
    last_positive
}

/// Index of the closest center; ties go to the lowest index.
fn nearest(p: &Vec3, centers: &[Vec3]) -> (usize, f64) {
    centers
        .iter()
        .enumerate()
        .map(|(i, c)| (i, (p - c).norm_squared()))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

pub(crate) fn kmeans_labels(primitives: &[Primitive], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 1 {
        return Err(Error::validation("component count must be at least 1"));
    }
    let points: Vec<Vec3> = primitives.iter().map(|p| p.mean).collect();
    let distinct = distinct_count(&points);
    if distinct < k {
        return Err(Error::validation(format!(
            "k-means++ needs {k} distinct centroids, found {distinct}"
        )));
    }
    let sizes: Vec<f64> = primitives.iter().map(|p| p.size).collect();
    let uniform = vec![1.0; points.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let first = sample_weighted(&mut rng, &sizes)
        .or_else(|| sample_weighted(&mut rng, &uniform))
        .expect("non-empty input");
    let mut centers = vec![points[first]];
    let mut d2: Vec<f64> = points.iter().map(|p| (p - points[first]).norm_squared()).collect();
    while centers.len() < k {
        let weighted: Vec<f64> = d2.iter().zip(&sizes).map(|(d, s)| d * s).collect();
        // Zero-size primitives can still be the only uncovered locations.
        let next = sample_weighted(&mut rng, &weighted)
            .or_else(|| sample_weighted(&mut rng, &d2))
            .ok_or_else(|| Error::validation("k-means++ ran out of distinct centroids"))?;
        let c = points[next];
        centers.push(c);
        for (d, p) in d2.iter_mut().zip(&points) {
            *d = d.min((p - c).norm_squared());
        }
    }

    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centers).0).collect();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut sum = vec![Vec3::zeros(); k];
        let mut mass = vec![0.0; k];
        let mut plain_sum = vec![Vec3::zeros(); k];
        let mut count = vec![0usize; k];
        for ((p, &l), &s) in points.iter().zip(&labels).zip(&sizes) {
            sum[l] += p * s;
            mass[l] += s;
            plain_sum[l] += p;
            count[l] += 1;
        }
        for i in 0..k {
            if mass[i] > 0.0 {
                centers[i] = sum[i] / mass[i];
            } else if count[i] > 0 {
                centers[i] = plain_sum[i] / count[i] as f64;
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers).0).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(labels)
}
