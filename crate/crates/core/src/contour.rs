//! External contours of rendered masks and of line drawings, and lifting of
//! mask contour pixels to barycentric surface anchors.

use crate::camera::{Camera, Point2};
use crate::error::{Error, Result};
use crate::image::{dilate8, flood_fill4, BinaryImage};
use crate::mesh::{Mesh, Point3};
use crate::raster::RasterBuffers;

/// Rotation angles (degrees) at which border rays are shot.
pub const FILTER_ANGLES_DEG: [f64; 13] = [
    0.0, 10.0, -10.0, 20.0, -20.0, 30.0, -30.0, 35.0, -35.0, 40.0, -40.0, 45.0, -45.0,
];

/// Average entry-to-exit run length (pixels) above which strokes count as
/// thick and the inner side is kept.
pub const DEFAULT_THICKNESS_THRESHOLD: f64 = 3.0;

/// Chebyshev radius by which strokes are thickened before filling a sketch.
/// Radius `r` bridges gaps of up to `2r` missing pixels, diagonal ones
/// included.
pub const DEFAULT_CLOSING_RADIUS: usize = 2;

/// External contour of a foreground-role mask, as a stroke-role image.
///
/// The background is flood filled (4-connected) from the top-left corner,
/// dilated by one pixel (8-connected) and intersected with the mask, so
/// interior holes produce no contour.
pub fn external_contour_of_mask(mask: &BinaryImage) -> Result<BinaryImage> {
    let (w, h) = (mask.width(), mask.height());
    if w == 0 || h == 0 {
        return Ok(mask.clone());
    }
    for x in 0..w {
        for y in [0, h - 1] {
            if mask.get(x, y) == 1 {
                return Err(Error::MaskTouchesBorder { x, y });
            }
        }
    }
    for y in 0..h {
        for x in [0, w - 1] {
            if mask.get(x, y) == 1 {
                return Err(Error::MaskTouchesBorder { x, y });
            }
        }
    }
    let covered = mask.covered();
    let background: Vec<bool> = covered.iter().map(|&c| !c).collect();
    let outside = flood_fill4(&background, w, h, (0, 0));
    let ring = dilate8(&outside, w, h, 1);
    let contour: Vec<bool> = ring.iter().zip(&covered).map(|(&r, &c)| r && c).collect();
    Ok(BinaryImage::from_strokes(w, h, &contour))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SketchFilter {
    pub thickness_threshold: f64,
}

impl Default for SketchFilter {
    fn default() -> Self {
        SketchFilter {
            thickness_threshold: DEFAULT_THICKNESS_THRESHOLD,
        }
    }
}

/// Keeps the outermost strokes of a line drawing with default settings.
pub fn filter_sketch_external(sketch: &BinaryImage) -> Result<BinaryImage> {
    SketchFilter::default().apply(sketch)
}

const NO_SOURCE: u32 = u32::MAX;

#[derive(Default)]
struct RayHits {
    entries: Vec<u32>,
    exits: Vec<u32>,
    runs: Vec<usize>,
}

impl RayHits {
    /// Scans `cells` (source pixel per canvas cell) in order and records
    /// the first stroke run.
    fn shoot(&mut self, cells: impl Iterator<Item = u32>) {
        let mut entry: Option<(usize, u32)> = None;
        let mut last = (0usize, NO_SOURCE);
        for (i, src) in cells.enumerate() {
            match (entry, src != NO_SOURCE) {
                (None, true) => {
                    entry = Some((i, src));
                    last = (i, src);
                }
                (Some(_), true) => last = (i, src),
                (Some(_), false) => break,
                (None, false) => {}
            }
        }
        if let Some((i0, src0)) = entry {
            self.entries.push(src0);
            self.exits.push(last.1);
            self.runs.push(last.0 - i0);
        }
    }
}

/// Stroke pixel sampled by the rotated cell centred at `p` with axes
/// `(c, s)` and `(-s, c)`: the pixel under the centre, or, when the cell
/// covers the shared corner of two diagonal stroke pixels whose other two
/// neighbours are empty, the nearer of that pair. The second case keeps rays
/// from slipping between diagonal steps of thin strokes.
fn sample_stroke(strokes: &[bool], w: usize, h: usize, p: Point2, (c, s): (f64, f64)) -> u32 {
    let at = |x: i64, y: i64| x >= 0 && y >= 0 && x < w as i64 && y < h as i64 && strokes[y as usize * w + x as usize];
    let index = |x: i64, y: i64| (y as usize * w + x as usize) as u32;
    let (px, py) = (p.x.floor() as i64, p.y.floor() as i64);
    if at(px, py) {
        return index(px, py);
    }
    let dist = |q: (i64, i64)| (Point2::new(q.0 as f64 + 0.5, q.1 as f64 + 0.5) - p).norm_squared();
    let (rx, ry) = (p.x.round() as i64, p.y.round() as i64);
    let mut best = (NO_SOURCE, f64::INFINITY);
    for ky in ry - 1..=ry + 1 {
        for kx in rx - 1..=rx + 1 {
            let d = Point2::new(kx as f64, ky as f64) - p;
            if (c * d.x + s * d.y).abs() >= 0.5 || (-s * d.x + c * d.y).abs() >= 0.5 {
                continue;
            }
            let (a, b) = ((kx - 1, ky - 1), (kx, ky));
            let (e, f) = ((kx, ky - 1), (kx - 1, ky));
            let (ab, ef) = (at(a.0, a.1) && at(b.0, b.1), at(e.0, e.1) && at(f.0, f.1));
            let pair = match (ab, ef) {
                (true, false) if !at(e.0, e.1) && !at(f.0, f.1) => [a, b],
                (false, true) if !at(a.0, a.1) && !at(b.0, b.1) => [e, f],
                _ => continue,
            };
            for q in pair {
                if dist(q) < best.1 {
                    best = (index(q.0, q.1), dist(q));
                }
            }
        }
    }
    best.0
}

impl SketchFilter {
    /// Shoots horizontal and vertical rays from the four borders of the
    /// sketch rotated at each of [`FILTER_ANGLES_DEG`] and keeps the first
    /// stroke run each ray meets. Rotation samples the nearest pixel and plugs
    /// diagonal gaps between thin stroke steps, so every kept pixel is a stroke
    /// pixel of the input. If the median run
    /// length over all rays (last minus first index along the ray) exceeds
    /// the threshold the exit pixels are kept, otherwise the entry pixels.
    pub fn apply(&self, sketch: &BinaryImage) -> Result<BinaryImage> {
        Ok(self.apply_with_run_length(sketch)?.0)
    }

    /// [`SketchFilter::apply`] and the median first-run length it measured.
    pub fn apply_with_run_length(&self, sketch: &BinaryImage) -> Result<(BinaryImage, f64)> {
        let (w, h) = (sketch.width(), sketch.height());
        if sketch.stroke_count() == 0 {
            return Err(Error::EmptySketch);
        }
        let strokes = sketch.strokes();
        let pad = ((w as f64).hypot(h as f64) / 2.0).ceil() as usize;
        let (cw, ch) = (w + 2 * pad, h + 2 * pad);
        let center = Point2::new(w as f64 / 2.0, h as f64 / 2.0);
        let canvas_center = Point2::new(cw as f64 / 2.0, ch as f64 / 2.0);

        let mut hits = RayHits::default();
        let mut canvas = vec![NO_SOURCE; cw * ch];
        for deg in FILTER_ANGLES_DEG {
            let (s, c) = deg.to_radians().sin_cos();
            for b in 0..ch {
                for a in 0..cw {
                    let q = Point2::new(a as f64 + 0.5, b as f64 + 0.5) - canvas_center;
                    let p = center + Point2::new(c * q.x - s * q.y, s * q.x + c * q.y);
                    canvas[b * cw + a] = sample_stroke(&strokes, w, h, p, (c, s));
                }
            }
            for b in 0..ch {
                let row = &canvas[b * cw..(b + 1) * cw];
                hits.shoot(row.iter().copied());
                hits.shoot(row.iter().rev().copied());
            }
            for a in 0..cw {
                hits.shoot((0..ch).map(|b| canvas[b * cw + a]));
                hits.shoot((0..ch).rev().map(|b| canvas[b * cw + a]));
            }
        }

        hits.runs.sort_unstable();
        let typical_run = hits.runs[hits.runs.len() / 2] as f64;
        let keep = if typical_run > self.thickness_threshold {
            &hits.exits
        } else {
            &hits.entries
        };
        let mut out = vec![false; w * h];
        for &i in keep {
            out[i as usize] = true;
        }
        Ok((BinaryImage::from_strokes(w, h, &out), typical_run))
    }
}

/// Surface point given by a face and barycentric weights, tagged with the
/// contour pixel it was lifted from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchor {
    pub face: usize,
    pub bary: [f64; 3],
    pub pixel: (usize, usize),
}

impl Anchor {
    pub fn realize(&self, mesh: &Mesh) -> Point3 {
        let [a, b, c] = mesh.corners(self.face);
        a * self.bary[0] + b * self.bary[1] + c * self.bary[2]
    }

    pub fn pixel_center(&self) -> Point2 {
        Point2::new(self.pixel.0 as f64 + 0.5, self.pixel.1 as f64 + 0.5)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SurfaceSampleSet {
    pub anchors: Vec<Anchor>,
}

impl SurfaceSampleSet {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn realize(&self, mesh: &Mesh) -> Vec<Point3> {
        self.anchors.iter().map(|a| a.realize(mesh)).collect()
    }

    pub fn project(&self, mesh: &Mesh, camera: &Camera) -> Result<Vec<Point2>> {
        self.anchors
            .iter()
            .map(|a| camera.project(&a.realize(mesh)))
            .collect()
    }
}

/// One anchor per stroke pixel of `contour`, in raster order, copying the
/// face id and barycentrics the rasterizer found at that pixel.
pub fn lift_contour(buffers: &RasterBuffers, contour: &BinaryImage) -> Result<SurfaceSampleSet> {
    if contour.width() != buffers.width || contour.height() != buffers.height {
        return Err(Error::ImageSize(format!(
            "contour {}x{} vs buffers {}x{}",
            contour.width(),
            contour.height(),
            buffers.width,
            buffers.height
        )));
    }
    let anchors = contour
        .pixels_with(0)
        .map(|(x, y)| {
            let face = buffers
                .face_at(x, y)
                .ok_or(Error::UncoveredContourPixel { x, y })?;
            Ok(Anchor {
                face,
                bary: buffers.bary[buffers.index(x, y)],
                pixel: (x, y),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SurfaceSampleSet { anchors })
}

/// Rasterization followed by external contour extraction and lifting.
pub fn mesh_contour_anchors(buffers: &RasterBuffers) -> Result<(BinaryImage, SurfaceSampleSet)> {
    let contour = external_contour_of_mask(&buffers.mask)?;
    let anchors = lift_contour(buffers, &contour)?;
    Ok((contour, anchors))
}

/// Foreground mask enclosed by a line drawing, with the default closing.
pub fn sketch_to_mask(sketch: &BinaryImage) -> Result<BinaryImage> {
    sketch_to_mask_with(sketch, DEFAULT_CLOSING_RADIUS)
}

/// Thickens the strokes by `closing_radius`, flood fills the outside from
/// the top-left corner, grows the outside back by the same radius and
/// returns the complement. Fails when nothing but the strokes themselves is
/// enclosed, or when the fill cannot start.
pub fn sketch_to_mask_with(sketch: &BinaryImage, closing_radius: usize) -> Result<BinaryImage> {
    let (w, h) = (sketch.width(), sketch.height());
    if sketch.stroke_count() == 0 {
        return Err(Error::EmptySketch);
    }
    let strokes = sketch.strokes();
    let band = dilate8(&strokes, w, h, closing_radius);
    let open: Vec<bool> = band.iter().map(|&c| !c).collect();
    if !open[0] {
        return Err(Error::OpenContour("the top-left corner is covered by strokes".into()));
    }
    let outside = dilate8(&flood_fill4(&open, w, h, (0, 0)), w, h, closing_radius);
    let foreground: Vec<bool> = outside.iter().map(|&o| !o).collect();
    let interior = foreground.iter().zip(&strokes).filter(|(&f, &s)| f && !s).count();
    if interior == 0 {
        return Err(Error::OpenContour("the fill leaks into the drawing".into()));
    }
    let area = foreground.iter().filter(|&&f| f).count();
    if area as f64 > 0.95 * (w * h) as f64 {
        return Err(Error::OpenContour(format!(
            "foreground covers {:.1}% of the image",
            100.0 * area as f64 / (w * h) as f64
        )));
    }
    Ok(BinaryImage::from_mask(w, h, &foreground))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_mask(size: usize, lo: usize, hi: usize) -> BinaryImage {
        BinaryImage::from_fn(size, size, |x, y| u8::from((lo..=hi).contains(&x) && (lo..=hi).contains(&y)))
    }

    #[test]
    fn solid_square_contour_is_its_border() {
        let mask = square_mask(9, 2, 6);
        let c = external_contour_of_mask(&mask).unwrap();
        assert_eq!(c.stroke_count(), 16);
        for (x, y) in c.pixels_with(0) {
            assert!(x == 2 || x == 6 || y == 2 || y == 6);
        }
    }

    #[test]
    fn interior_hole_is_ignored() {
        let solid = square_mask(9, 2, 6);
        let mut holed = solid.clone();
        holed.set(4, 4, 0);
        assert_eq!(
            external_contour_of_mask(&holed).unwrap(),
            external_contour_of_mask(&solid).unwrap()
        );
    }

    #[test]
    fn empty_mask_and_border_errors() {
        let empty = BinaryImage::new(8, 8, 0);
        assert_eq!(external_contour_of_mask(&empty).unwrap().stroke_count(), 0);
        let touching = square_mask(8, 0, 3);
        assert!(matches!(
            external_contour_of_mask(&touching),
            Err(Error::MaskTouchesBorder { .. })
        ));
    }

    #[test]
    fn isolated_stroke_pixel_is_kept() {
        let mut s = BinaryImage::blank(20, 20);
        s.set(7, 11, 0);
        let f = filter_sketch_external(&s).unwrap();
        assert_eq!(f.pixels_with(0).collect::<Vec<_>>(), vec![(7, 11)]);
        assert!(matches!(
            filter_sketch_external(&BinaryImage::blank(5, 5)),
            Err(Error::EmptySketch)
        ));
    }

    #[test]
    fn thick_outline_keeps_inner_shell() {
        // 5-px thick square frame from 10..=49; inner shell is at 14 / 45.
        let s = BinaryImage::from_fn(60, 60, |x, y| {
            let inside_outer = (10..50).contains(&x) && (10..50).contains(&y);
            let inside_inner = (15..45).contains(&x) && (15..45).contains(&y);
            u8::from(!(inside_outer && !inside_inner))
        });
        let f = filter_sketch_external(&s).unwrap();
        assert!(f.get(30, 14) == 0 && f.get(30, 10) == 1);
        let thin = SketchFilter {
            thickness_threshold: 100.0,
        };
        let g = thin.apply(&s).unwrap();
        assert!(g.get(30, 10) == 0 && g.get(30, 14) == 1);
    }

    #[test]
    fn sketch_to_mask_fills_closed_square() {
        let s = BinaryImage::from_fn(30, 30, |x, y| {
            let on = ((x == 5 || x == 24) && (5..=24).contains(&y)) || ((y == 5 || y == 24) && (5..=24).contains(&x));
            u8::from(!on)
        });
        let m = sketch_to_mask(&s).unwrap();
        assert_eq!(m.count(1), 20 * 20);
        assert!(matches!(sketch_to_mask(&BinaryImage::blank(9, 9)), Err(Error::EmptySketch)));
    }
}
