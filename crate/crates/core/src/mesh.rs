//! Triangle meshes with fixed connectivity, a few procedural primitives and
//! ASCII OBJ input/output.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Point3 = Vector3<f64>;
pub type Face = [usize; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point3>,
    pub faces: Arc<[Face]>,
}

impl Mesh {
    pub fn new(vertices: Vec<Point3>, faces: impl Into<Arc<[Face]>>) -> Result<Self> {
        let mesh = Mesh {
            vertices,
            faces: faces.into(),
        };
        mesh.check_indices()?;
        Ok(mesh)
    }

    pub fn empty() -> Self {
        Mesh {
            vertices: Vec::new(),
            faces: Arc::from(Vec::new()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Face indices in range, three distinct corners, finite coordinates.
    pub fn check_indices(&self) -> Result<()> {
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} references a vertex out of range ({n} vertices)"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {fi} is degenerate: {f:?}")));
            }
        }
        if let Some(i) = self.vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        Ok(())
    }

    /// Every directed edge appears once and its reverse appears once: the
    /// surface is closed and consistently oriented.
    pub fn check_watertight(&self) -> Result<()> {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for f in self.faces.iter() {
            for k in 0..3 {
                *directed.entry((f[k], f[(k + 1) % 3])).or_default() += 1;
            }
        }
        for (&(a, b), &count) in &directed {
            if count != 1 {
                return Err(Error::InvalidMesh(format!(
                    "edge {a}->{b} used {count} times with the same orientation"
                )));
            }
            if !directed.contains_key(&(b, a)) {
                return Err(Error::InvalidMesh(format!("edge {a}-{b} is a boundary edge")));
            }
        }
        Ok(())
    }

    pub fn corners(&self, face: usize) -> [Point3; 3] {
        let f = self.faces[face];
        [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]]
    }

    /// Unnormalized normal `(v1 - v0) x (v2 - v0)`; its length is twice the area.
    pub fn face_cross(&self, face: usize) -> Point3 {
        let [a, b, c] = self.corners(face);
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, face: usize) -> f64 {
        0.5 * self.face_cross(face).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn map_vertices(&self, f: impl Fn(&Point3) -> Point3) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn scaled(&self, s: f64) -> Mesh {
        self.map_vertices(|v| v * s)
    }

    pub fn translated(&self, t: Point3) -> Mesh {
        self.map_vertices(|v| v + t)
    }

    /// Flattened `[x0, y0, z0, x1, ...]` coordinates.
    pub fn flat_coords(&self) -> Vec<f64> {
        self.vertices.iter().flat_map(|v| [v.x, v.y, v.z]).collect()
    }

    pub fn single_triangle(a: Point3, b: Point3, c: Point3) -> Mesh {
        Mesh {
            vertices: vec![a, b, c],
            faces: Arc::from(vec![[0, 1, 2]]),
        }
    }

    /// Surface of `[-1, 1]^3` with `segments` quads per edge, split into
    /// outward-wound triangles.
    pub fn subdivided_cube(segments: usize) -> Mesh {
        let n = segments.max(1);
        let mut index: HashMap<[usize; 3], usize> = HashMap::new();
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        let coord = |i: usize| -1.0 + 2.0 * i as f64 / n as f64;

        // (normal axis, side, u axis, v axis) with u x v pointing outward.
        let sides = [
            (0, n, 1, 2),
            (0, 0, 2, 1),
            (1, n, 2, 0),
            (1, 0, 0, 2),
            (2, n, 0, 1),
            (2, 0, 1, 0),
        ];
        for &(axis, side, u, v) in &sides {
            let mut vid = |i: usize, j: usize| {
                let mut key = [0usize; 3];
                key[axis] = side;
                key[u] = i;
                key[v] = j;
                *index.entry(key).or_insert_with(|| {
                    vertices.push(Point3::new(coord(key[0]), coord(key[1]), coord(key[2])));
                    vertices.len() - 1
                })
            };
            for i in 0..n {
                for j in 0..n {
                    let a = vid(i, j);
                    let b = vid(i + 1, j);
                    let c = vid(i + 1, j + 1);
                    let d = vid(i, j + 1);
                    faces.push([a, b, c]);
                    faces.push([a, c, d]);
                }
            }
        }
        Mesh {
            vertices,
            faces: Arc::from(faces),
        }
    }

    /// Sphere of the given radius made by pushing a subdivided cube onto it.
    pub fn sphere(segments: usize, radius: f64) -> Mesh {
        Mesh::subdivided_cube(segments).map_vertices(|v| v.normalize() * radius)
    }

    /// Torus around the y axis.
    pub fn torus(major: f64, minor: f64, segments_major: usize, segments_minor: usize) -> Mesh {
        let (nu, nv) = (segments_major.max(3), segments_minor.max(3));
        let mut vertices = Vec::with_capacity(nu * nv);
        for i in 0..nu {
            let u = std::f64::consts::TAU * i as f64 / nu as f64;
            for j in 0..nv {
                let v = std::f64::consts::TAU * j as f64 / nv as f64;
                let r = major + minor * v.cos();
                vertices.push(Point3::new(r * u.cos(), minor * v.sin(), r * u.sin()));
            }
        }
        let id = |i: usize, j: usize| (i % nu) * nv + (j % nv);
        let mut faces = Vec::with_capacity(2 * nu * nv);
        for i in 0..nu {
            for j in 0..nv {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                faces.push([a, c, b]);
                faces.push([a, d, c]);
            }
        }
        Mesh {
            vertices,
            faces: Arc::from(faces),
        }
    }

    pub fn write_obj(&self, mut out: impl Write) -> Result<()> {
        out.write_all(self.to_obj_string().as_bytes())?;
        Ok(())
    }

    pub fn to_obj_string(&self) -> String {
        let mut s = String::with_capacity(32 * (self.vertices.len() + self.faces.len()));
        for v in &self.vertices {
            let _ = writeln!(s, "v {:e} {:e} {:e}", v.x, v.y, v.z);
        }
        for f in self.faces.iter() {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        s
    }

    /// Reads `v` and `f` records; texture/normal indices in `f` are ignored.
    /// Only triangles are accepted.
    pub fn read_obj(input: impl BufRead) -> Result<Mesh> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let coords: Vec<f64> = parts
                        .take(3)
                        .map(|p| p.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::format("OBJ", format!("line {}: {e}", lineno + 1)))?;
                    if coords.len() != 3 {
                        return Err(Error::format(
                            "OBJ",
                            format!("line {}: vertex needs 3 coordinates", lineno + 1),
                        ));
                    }
                    vertices.push(Point3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let mut idx = Vec::with_capacity(3);
                    for p in parts {
                        let first = p.split('/').next().unwrap_or("");
                        let i: i64 = first.parse().map_err(|_| {
                            Error::format("OBJ", format!("line {}: bad index {p:?}", lineno + 1))
                        })?;
                        let resolved = if i > 0 {
                            i - 1
                        } else {
                            vertices.len() as i64 + i
                        };
                        if resolved < 0 {
                            return Err(Error::format(
                                "OBJ",
                                format!("line {}: index {i} out of range", lineno + 1),
                            ));
                        }
                        idx.push(resolved as usize);
                    }
                    if idx.len() != 3 {
                        return Err(Error::format(
                            "OBJ",
                            format!("line {}: only triangles are supported", lineno + 1),
                        ));
                    }
                    faces.push([idx[0], idx[1], idx[2]]);
                }
                _ => {}
            }
        }
        Mesh::new(vertices, faces)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subdivided_cube_is_closed_and_outward() {
        for n in 1..5 {
            let m = Mesh::subdivided_cube(n);
            assert_eq!(m.vertices.len(), 6 * n * n + 2);
            assert_eq!(m.faces.len(), 12 * n * n);
            m.check_watertight().unwrap();
            for f in 0..m.faces.len() {
                let [a, b, c] = m.corners(f);
                let centroid = (a + b + c) / 3.0;
                assert!(m.face_cross(f).dot(&centroid) > 0.0, "face {f} points inward");
            }
            assert!((m.area() - 24.0).abs() < 1e-12);
        }
    }

    #[test]
    fn torus_is_closed_and_outward() {
        let t = Mesh::torus(1.0, 0.3, 24, 12);
        t.check_watertight().unwrap();
        let f = 0;
        let [a, b, c] = t.corners(f);
        let centroid = (a + b + c) / 3.0;
        let ring = Point3::new(centroid.x, 0.0, centroid.z).normalize();
        assert!(t.face_cross(f).dot(&(centroid - ring)) > 0.0);
    }

    #[test]
    fn open_mesh_fails_watertight_check() {
        let m = Mesh::single_triangle(Point3::x(), Point3::y(), Point3::z());
        assert!(m.check_watertight().is_err());
    }

    #[test]
    fn obj_round_trip_and_errors() {
        let m = Mesh::sphere(3, 0.7);
        let text = m.to_obj_string();
        let back = Mesh::read_obj(text.as_bytes()).unwrap();
        assert_eq!(back.faces, m.faces);
        for (a, b) in back.vertices.iter().zip(&m.vertices) {
            assert_eq!(a, b);
        }

        let quad = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        assert!(Mesh::read_obj(quad.as_bytes()).is_err());
        let slashes = "v 0 0 0\nv 1 0 0\nv 1 1 0\nf 1/1/1 2/2/2 -1\n";
        assert_eq!(Mesh::read_obj(slashes.as_bytes()).unwrap().faces[0], [0, 1, 2]);
        assert!(Mesh::read_obj("v 0 0 0\nf 1 2 3\n".as_bytes()).is_err());
        assert!(Mesh::read_obj("v 0 zero 0\n".as_bytes()).is_err());
    }
}
