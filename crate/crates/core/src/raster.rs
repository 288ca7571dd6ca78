//! Z-buffered triangle rasterizer producing coverage, depth, face ids,
//! perspective-correct barycentrics and flat camera-frame normals.

use crate::camera::{Camera, Point2, NEAR};
use crate::image::{encode_pgm, encode_png, BinaryImage};
use crate::error::Result;
use crate::mesh::{Mesh, Point3};

/// Per-pixel buffers of one rendering, sampled at pixel centers.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterBuffers {
    pub width: usize,
    pub height: usize,
    /// Foreground role: `1` where a face covers the pixel center.
    pub mask: BinaryImage,
    /// Camera-frame depth, `+inf` on background.
    pub depth: Vec<f64>,
    /// Nearest face, `-1` on background.
    pub face_id: Vec<i64>,
    pub bary: Vec<[f64; 3]>,
    /// Unit face normal in camera frame, zero on background.
    pub normals: Vec<Point3>,
}

impl RasterBuffers {
    pub fn empty(width: usize, height: usize) -> Self {
        let n = width * height;
        RasterBuffers {
            width,
            height,
            mask: BinaryImage::new(width, height, 0),
            depth: vec![f64::INFINITY; n],
            face_id: vec![-1; n],
            bary: vec![[0.0; 3]; n],
            normals: vec![Point3::zeros(); n],
        }
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn face_at(&self, x: usize, y: usize) -> Option<usize> {
        let f = self.face_id[self.index(x, y)];
        (f >= 0).then_some(f as usize)
    }

    pub fn covered_count(&self) -> usize {
        self.face_id.iter().filter(|&&f| f >= 0).count()
    }

    /// Depth as 8-bit PGM: nearest covered depth black, farthest 254,
    /// background white.
    pub fn depth_pgm(&self) -> Vec<u8> {
        let finite = self.depth.iter().copied().filter(|d| d.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        let span = (hi - lo).max(1e-12);
        let gray: Vec<u8> = self
            .depth
            .iter()
            .map(|&d| if d.is_finite() { (254.0 * (d - lo) / span).round() as u8 } else { 255 })
            .collect();
        encode_pgm(self.width, self.height, &gray)
    }

    pub fn mask_pgm(&self) -> Vec<u8> {
        self.mask.to_pgm()
    }

    pub fn normal_png(&self) -> Result<Vec<u8>> {
        normal_map_png(&self.normals, self.width, self.height)
    }
}

/// RGB PNG with `rgb = (n + 1) / 2`.
pub fn normal_map_png(normals: &[Point3], width: usize, height: usize) -> Result<Vec<u8>> {
    let rgb: Vec<u8> = normals
        .iter()
        .flat_map(|n| [n.x, n.y, n.z].map(|c| ((c + 1.0) * 0.5 * 255.0).round().clamp(0.0, 255.0) as u8))
        .collect();
    encode_png(width, height, png::ColorType::Rgb, &rgb)
}

fn edge(a: &Point2, b: &Point2, p: &Point2) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

const INSIDE_TOL: f64 = 1e-12;

/// Renders `mesh` through `camera`. Faces with a corner at or behind the
/// near plane are skipped; depth ties keep the lower face index.
pub fn rasterize(mesh: &Mesh, camera: &Camera) -> RasterBuffers {
    let (w, h) = (camera.width(), camera.height());
    let mut out = RasterBuffers::empty(w, h);
    let cam_pts: Vec<Point3> = mesh.vertices.iter().map(|v| camera.to_camera(v)).collect();
    let mut covered = vec![false; w * h];

    for (fi, f) in mesh.faces.iter().enumerate() {
        let pc = [cam_pts[f[0]], cam_pts[f[1]], cam_pts[f[2]]];
        if pc.iter().any(|p| p.z <= NEAR) {
            continue;
        }
        let cross = (pc[1] - pc[0]).cross(&(pc[2] - pc[0]));
        let cross_norm = cross.norm();
        if cross_norm == 0.0 {
            continue;
        }
        let normal = cross / cross_norm;
        let s: [Point2; 3] = pc.map(|p| {
            camera
                .project_camera(&p)
                .expect("depth checked against the near plane")
        });
        let area = edge(&s[0], &s[1], &s[2]);
        if area.abs() < 1e-12 {
            continue;
        }
        let min_x = s.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let max_x = s.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let min_y = s.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let max_y = s.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        let x0 = (min_x - 0.5).ceil().max(0.0);
        let x1 = (max_x - 0.5).floor().min(w as f64 - 1.0);
        let y0 = (min_y - 0.5).ceil().max(0.0);
        let y1 = (max_y - 0.5).floor().min(h as f64 - 1.0);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        for y in y0 as usize..=y1 as usize {
            for x in x0 as usize..=x1 as usize {
                let p = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
                let l = [
                    edge(&s[1], &s[2], &p) / area,
                    edge(&s[2], &s[0], &p) / area,
                    edge(&s[0], &s[1], &p) / area,
                ];
                if l.iter().any(|&v| v < -INSIDE_TOL) {
                    continue;
                }
                let l = l.map(|v| v.max(0.0));
                let wts = [l[0] / pc[0].z, l[1] / pc[1].z, l[2] / pc[2].z];
                let sum = wts[0] + wts[1] + wts[2];
                let z = 1.0 / sum;
                let i = y * w + x;
                if z < out.depth[i] {
                    out.depth[i] = z;
                    out.face_id[i] = fi as i64;
                    out.bary[i] = [wts[0] * z, wts[1] * z, wts[2] * z];
                    out.normals[i] = normal;
                    covered[i] = true;
                }
            }
        }
    }
    out.mask = BinaryImage::from_mask(w, h, &covered);
    out
}

/// Flat camera-frame normals; zero vectors on background.
pub fn render_normal_map(mesh: &Mesh, camera: &Camera) -> Vec<Point3> {
    rasterize(mesh, camera).normals
}

#[cfg(test)]
mod tests {
    use super::*;

    fn front_camera(size: usize) -> Camera {
        Camera::new(0.0, 0.0, 3.0, 1.2 * size as f64, size, size).unwrap()
    }

    /// Triangle in the plane z = `z`, wound to face the camera at +z.
    fn facing_triangle(z: f64, s: f64) -> Mesh {
        Mesh::single_triangle(
            Point3::new(-s, -s, z),
            Point3::new(s, -s, z),
            Point3::new(0.0, s, z),
        )
    }

    #[test]
    fn single_triangle_buffers() {
        let cam = front_camera(64);
        let tri = facing_triangle(0.0, 0.5);
        let buf = rasterize(&tri, &cam);
        let c = buf.index(32, 32);
        assert_eq!(buf.mask.get(32, 32), 1);
        assert_eq!(buf.face_id[c], 0);
        let [a, b, cc] = tri.corners(0);
        let alpha = buf.bary[c];
        let p = a * alpha[0] + b * alpha[1] + cc * alpha[2];
        let uv = cam.project(&p).unwrap();
        assert!((uv - Point2::new(32.5, 32.5)).norm() < 0.5);
        assert!((buf.normals[c] - Point3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        assert_eq!(buf.mask.get(0, 0), 0);
        assert_eq!(buf.face_id[0], -1);
        assert!(buf.depth[0].is_infinite());
    }

    #[test]
    fn nearer_triangle_wins() {
        let cam = front_camera(32);
        let far = facing_triangle(0.0, 0.5);
        let near = facing_triangle(0.5, 0.3);
        let mut vertices = far.vertices.clone();
        vertices.extend(near.vertices.iter().copied());
        let mesh = Mesh::new(vertices, vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        let buf = rasterize(&mesh, &cam);
        assert_eq!(buf.face_at(16, 16), Some(1));

        let swapped = Mesh::new(mesh.vertices.clone(), vec![[3, 4, 5], [0, 1, 2]]).unwrap();
        assert_eq!(rasterize(&swapped, &cam).face_at(16, 16), Some(0));
    }

    #[test]
    fn depth_ties_keep_lower_face_index() {
        let cam = front_camera(32);
        let t = facing_triangle(0.0, 0.5);
        let mesh = Mesh::new(t.vertices.clone(), vec![[0, 1, 2], [0, 1, 2]]).unwrap();
        assert_eq!(rasterize(&mesh, &cam).face_at(16, 16), Some(0));
    }

    #[test]
    fn empty_mesh_renders_background() {
        let cam = front_camera(16);
        let buf = rasterize(&Mesh::empty(), &cam);
        assert_eq!(buf, RasterBuffers::empty(16, 16));
        assert!(render_normal_map(&Mesh::empty(), &cam).iter().all(|n| n.norm() == 0.0));
    }

    #[test]
    fn buffers_export() {
        let cam = front_camera(16);
        let buf = rasterize(&Mesh::sphere(3, 0.8), &cam);
        let pgm = buf.mask_pgm();
        assert!(pgm.starts_with(b"P5\n16 16\n255\n"));
        assert_eq!(BinaryImage::read_pgm(&pgm).unwrap(), buf.mask);
        assert!(buf.depth_pgm().len() == 13 + 256);
        assert!(buf.normal_png().unwrap().starts_with(b"\x89PNG"));
    }
}
