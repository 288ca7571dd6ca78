//! Synthetic line drawings of meshes and the multi-view dataset protocol.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::{Camera, CameraSpec};
use crate::error::{Error, Result};
use crate::image::BinaryImage;
use crate::mesh::Mesh;
use crate::raster::{rasterize, RasterBuffers};
use crate::shape::{LatentCode, TemplateMesh};

/// Depth jump threshold as a fraction of the camera distance.
pub const DEFAULT_DEPTH_FRACTION: f64 = 0.02;
pub const DEFAULT_CREASE_DEG: f64 = 25.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SketchStyle {
    /// Depth discontinuities plus sharp normal creases.
    Sketchfd,
    /// Depth discontinuities only.
    Occluding,
}

impl SketchStyle {
    pub const ALL: [SketchStyle; 2] = [SketchStyle::Sketchfd, SketchStyle::Occluding];

    pub fn as_str(self) -> &'static str {
        match self {
            SketchStyle::Sketchfd => "sketchfd",
            SketchStyle::Occluding => "occluding",
        }
    }
}

impl fmt::Display for SketchStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SketchStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sketchfd" => Ok(SketchStyle::Sketchfd),
            "occluding" => Ok(SketchStyle::Occluding),
            other => Err(Error::InvalidConfig(format!("unknown sketch style `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeThresholds {
    /// Absolute depth jump, camera units.
    pub depth: f64,
    /// Normal angle, radians.
    pub crease: f64,
}

impl EdgeThresholds {
    pub fn for_camera(camera: &Camera) -> Self {
        EdgeThresholds {
            depth: DEFAULT_DEPTH_FRACTION * camera.distance(),
            crease: DEFAULT_CREASE_DEG.to_radians(),
        }
    }
}

const NEIGHBOURS8: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

fn background_depth(buffers: &RasterBuffers) -> f64 {
    let far = buffers
        .depth
        .iter()
        .copied()
        .filter(|d| d.is_finite())
        .fold(0.0, f64::max);
    1e6 * (1.0 + far)
}

/// Multiple of the depth slope beside a jump that the jump must exceed.
const SLOPE_ALLOWANCE: f64 = 3.0;

/// Depth of pixel `to` minus depth at `from`, when both are covered.
fn recession(buffers: &RasterBuffers, depth: &impl Fn(usize) -> f64, from: (isize, isize), to: usize) -> Option<f64> {
    let (w, h) = (buffers.width as isize, buffers.height as isize);
    if from.0 < 0 || from.1 < 0 || from.0 >= w || from.1 >= h {
        return None;
    }
    let f = (from.1 * w + from.0) as usize;
    (buffers.face_id[f] >= 0 && buffers.face_id[to] >= 0).then(|| depth(to) - depth(f))
}

/// Strokes of one rendering. A covered pixel is a depth edge when an
/// 8-neighbour lies farther by more than `depth` plus three times the local
/// depth slope, measured on both sides of the jump (background counts as
/// very far), and a crease when a covered 8-neighbour's normal differs by
/// more than `crease`. The slope allowance keeps smooth surfaces near
/// grazing, and steep faces beside shallow ones, from reading as
/// discontinuities.
pub fn sketch_from_buffers(buffers: &RasterBuffers, style: SketchStyle, thresholds: EdgeThresholds) -> BinaryImage {
    let (w, h) = (buffers.width, buffers.height);
    let far = background_depth(buffers);
    let depth = |i: usize| if buffers.depth[i].is_finite() { buffers.depth[i] } else { far };
    let cos_crease = thresholds.crease.cos();
    let mut strokes = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if buffers.face_id[i] < 0 {
                continue;
            }
            let d = depth(i);
            let n = buffers.normals[i];
            for (dx, dy) in NEIGHBOURS8 {
                let (qx, qy) = (x as isize + dx, y as isize + dy);
                if qx < 0 || qy < 0 || qx >= w as isize || qy >= h as isize {
                    continue;
                }
                let q = qy as usize * w + qx as usize;
                let near_slope = recession(buffers, &depth, (x as isize - dx, y as isize - dy), i);
                let far_slope = recession(buffers, &depth, (qx + dx, qy + dy), q).map(|r| -r);
                let allowance = |slope: Option<f64>| thresholds.depth + SLOPE_ALLOWANCE * slope.unwrap_or(0.0).max(0.0);
                let jump = depth(q) - d;
                if jump > allowance(near_slope) && jump > allowance(far_slope) {
                    strokes[i] = true;
                    break;
                }
                if style == SketchStyle::Sketchfd && buffers.face_id[q] >= 0 && n.dot(&buffers.normals[q]) < cos_crease {
                    strokes[i] = true;
                    break;
                }
            }
        }
    }
    BinaryImage::from_strokes(w, h, &strokes)
}

pub fn render_sketch(mesh: &Mesh, camera: &Camera, style: SketchStyle) -> BinaryImage {
    sketch_from_buffers(&rasterize(mesh, camera), style, EdgeThresholds::for_camera(camera))
}

pub fn render_sketchfd(mesh: &Mesh, camera: &Camera) -> BinaryImage {
    render_sketch(mesh, camera, SketchStyle::Sketchfd)
}

pub fn render_occluding(mesh: &Mesh, camera: &Camera) -> BinaryImage {
    render_sketch(mesh, camera, SketchStyle::Occluding)
}

/// Codes drawn from independent normals with the template's per-mode
/// spread, clamped to the box.
pub fn sample_codes(template: &TemplateMesh, count: usize, seed: u64) -> Vec<LatentCode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut code = LatentCode(
                template
                    .sigma()
                    .iter()
                    .map(|&s| if s > 0.0 { Normal::new(0.0, s).expect("finite spread").sample(&mut rng) } else { 0.0 })
                    .collect(),
            );
            template.clamp(&mut code);
            code
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub views_per_shape: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Shared camera distance; three times the largest bounding radius of
    /// the decoded shapes when unset.
    pub distance: Option<f64>,
    pub min_elevation_deg: f64,
    pub max_elevation_deg: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            views_per_shape: 16,
            seed: 0,
            width: 256,
            height: 256,
            distance: None,
            min_elevation_deg: -20.0,
            max_elevation_deg: 60.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub sample: usize,
    pub shape: usize,
    pub view: usize,
    /// Paths relative to the manifest directory.
    pub code: String,
    pub camera_file: String,
    pub camera: CameraSpec,
    pub sketches: Vec<StyledSketch>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyledSketch {
    pub style: SketchStyle,
    pub path: String,
}

impl ManifestRecord {
    pub fn sketch(&self, style: SketchStyle) -> Option<&str> {
        self.sketches.iter().find(|s| s.style == style).map(|s| s.path.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub shape: usize,
    pub view: usize,
    pub code: LatentCode,
    pub camera: Camera,
}

/// Cameras for every (shape, view) pair in manifest order.
pub fn dataset_samples(template: &TemplateMesh, shapes: &[LatentCode], config: &DatasetConfig) -> Result<Vec<Sample>> {
    if shapes.is_empty() {
        return Err(Error::EmptyShapeList);
    }
    let distance = match config.distance {
        Some(d) => d,
        None => {
            let mut r: f64 = 0.0;
            for code in shapes {
                r = r.max(template.decode(code)?.bounding_radius());
            }
            3.0 * r
        }
    };
    let focal = 1.2 * config.width.min(config.height) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (lo, hi) = (config.min_elevation_deg.to_radians(), config.max_elevation_deg.to_radians());
    let mut out = Vec::with_capacity(shapes.len() * config.views_per_shape);
    for (shape, code) in shapes.iter().enumerate() {
        for view in 0..config.views_per_shape {
            let az = rng.random_range(0.0..std::f64::consts::TAU);
            let el = rng.random_range(lo..hi);
            out.push(Sample {
                shape,
                view,
                code: code.clone(),
                camera: Camera::new(az, el, distance, focal, config.width, config.height)?,
            });
        }
    }
    Ok(out)
}

/// Writes sketches in both styles, codes and cameras under `out_dir` and
/// returns the manifest records, also written as `manifest.jsonl`.
pub fn generate_dataset(
    template: &TemplateMesh,
    shapes: &[LatentCode],
    config: &DatasetConfig,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<ManifestRecord>> {
    let out_dir = out_dir.as_ref();
    let samples = dataset_samples(template, shapes, config)?;
    for sub in ["codes", "cameras", "sketches"] {
        fs::create_dir_all(out_dir.join(sub))?;
    }
    for (shape, code) in shapes.iter().enumerate() {
        code.save(out_dir.join(format!("codes/shape_{shape:04}.bin")))?;
    }
    let mut records = Vec::with_capacity(samples.len());
    for (sample, s) in samples.iter().enumerate() {
        let mesh = template.decode(&s.code)?;
        let buffers = rasterize(&mesh, &s.camera);
        let thresholds = EdgeThresholds::for_camera(&s.camera);
        let mut sketches = Vec::new();
        for style in SketchStyle::ALL {
            let rel = format!("sketches/{sample:05}_{style}.png");
            sketch_from_buffers(&buffers, style, thresholds).save_png(out_dir.join(&rel))?;
            sketches.push(StyledSketch { style, path: rel });
        }
        let camera = s.camera.spec();
        let camera_file = format!("cameras/{sample:05}.json");
        fs::write(out_dir.join(&camera_file), serde_json::to_string_pretty(&camera)?)?;
        records.push(ManifestRecord {
            sample,
            shape: s.shape,
            view: s.view,
            code: format!("codes/shape_{:04}.bin", s.shape),
            camera_file,
            camera,
            sketches,
        });
    }
    write_manifest(out_dir.join("manifest.jsonl"), &records)?;
    Ok(records)
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[ManifestRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Resolves a manifest-relative path.
pub fn manifest_path(manifest: &Path, rel: &str) -> PathBuf {
    manifest.parent().unwrap_or(Path::new(".")).join(rel)
}
