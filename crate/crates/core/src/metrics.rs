//! Shape comparison metrics: surface Chamfer distance and normal
//! consistency between normal maps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point3};
use crate::nn::NearestGrid;
use crate::raster::render_normal_map;

pub const DEFAULT_SAMPLES: usize = 10_000;
/// Azimuth offsets, degrees, of the extra views used by
/// [`evaluation_cameras`].
pub const EXTRA_VIEW_OFFSETS_DEG: [f64; 3] = [90.0, 180.0, 270.0];

/// Area-weighted uniform samples of the surface.
pub fn sample_surface(mesh: &Mesh, n: usize, seed: u64) -> Result<Vec<Point3>> {
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if total.is_nan() || total <= 0.0 {
        return Err(Error::ZeroArea);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let r = rng.random::<f64>() * total;
            let f = cumulative.partition_point(|&c| c <= r).min(cumulative.len() - 1);
            let (mut u, mut v) = (rng.random::<f64>(), rng.random::<f64>());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            let [a, b, c] = mesh.corners(f);
            a + (b - a) * u + (c - a) * v
        })
        .collect())
}

fn mean_nearest_squared(from: &[Point3], to: &NearestGrid<3>) -> f64 {
    let sum: f64 = from
        .iter()
        .map(|p| to.nearest(&[p.x, p.y, p.z]).expect("non-empty cloud").1)
        .sum();
    sum / from.len() as f64
}

/// Sum of the two directional mean squared nearest-neighbour distances.
pub fn chamfer_points(a: &[Point3], b: &[Point3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyPointSet("surface sample"));
    }
    let grid = |p: &[Point3]| NearestGrid::new(p.iter().map(|v| [v.x, v.y, v.z]).collect());
    Ok(mean_nearest_squared(a, &grid(b)) + mean_nearest_squared(b, &grid(a)))
}

/// Surface Chamfer distance in squared object units, sampling `a` with
/// `seeds.0` and `b` with `seeds.1`.
pub fn chamfer_3d(a: &Mesh, b: &Mesh, n: usize, seeds: (u64, u64)) -> Result<f64> {
    chamfer_points(&sample_surface(a, n, seeds.0)?, &sample_surface(b, n, seeds.1)?)
}

/// Mean dot product of two normal maps over pixels both cover. Pixels with
/// bitwise equal normals contribute exactly one.
pub fn normal_map_agreement(a: &[Point3], b: &[Point3]) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (na, nb) in a.iter().zip(b) {
        let zero = Point3::zeros();
        if *na == zero || *nb == zero {
            continue;
        }
        sum += if na == nb { 1.0 } else { na.dot(nb) };
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

/// Mean over cameras of [`normal_map_agreement`], in [-1, 1]. Cameras where
/// the renders do not overlap are skipped; the call fails when none overlap.
pub fn normal_consistency(a: &Mesh, b: &Mesh, cameras: &[Camera]) -> Result<f64> {
    let per_view: Vec<f64> = cameras
        .iter()
        .filter_map(|c| normal_map_agreement(&render_normal_map(a, c), &render_normal_map(b, c)))
        .collect();
    if per_view.is_empty() {
        return Err(Error::NoJointCoverage);
    }
    Ok(per_view.iter().sum::<f64>() / per_view.len() as f64)
}

/// The input camera followed by the same camera orbited by
/// [`EXTRA_VIEW_OFFSETS_DEG`] in azimuth.
pub fn evaluation_cameras(camera: &Camera) -> Result<Vec<Camera>> {
    let mut out = vec![camera.clone()];
    for off in EXTRA_VIEW_OFFSETS_DEG {
        out.push(camera.with_view(camera.azimuth() + off.to_radians(), camera.elevation())?);
    }
    Ok(out)
}

/// One row of an evaluation table, in the scaled units of published
/// tables: Chamfer times 10^3, normal consistency times 100.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub sample: usize,
    pub cd_l2_e3: Option<f64>,
    pub nc_e2: Option<f64>,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            samples: DEFAULT_SAMPLES,
            seed: 0,
        }
    }
}

/// Both metrics for a prediction against ground truth seen from `camera`.
pub fn compare_meshes(
    sample: usize,
    predicted: &Mesh,
    truth: &Mesh,
    camera: &Camera,
    config: &MetricConfig,
) -> MetricRow {
    let seeds = (config.seed, config.seed.wrapping_add(1));
    let cd = chamfer_3d(predicted, truth, config.samples, seeds);
    let nc = evaluation_cameras(camera).and_then(|cams| normal_consistency(predicted, truth, &cams));
    let status = match (&cd, &nc) {
        (Ok(_), Ok(_)) => "ok".to_string(),
        (Err(e), _) | (_, Err(e)) => e.to_string(),
    };
    MetricRow {
        sample,
        cd_l2_e3: cd.ok().map(|v| v * 1e3),
        nc_e2: nc.ok().map(|v| v * 100.0),
        status,
    }
}
