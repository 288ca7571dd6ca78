//! Linear latent shape model: a watertight template whose vertices move
//! along an orthonormal set of displacement modes.
//!
//! Decoding is affine in the code, so the vertex Jacobian is the basis
//! matrix itself and gradients can be pulled back from vertex space with a
//! single transposed product.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_container, write_container, ContainerHeader};
use crate::mesh::{Face, Mesh, Point3};

/// Per-mode clamp in units of the mode's spread.
pub const CLAMP_SIGMAS: f64 = 3.0;

const ORTHONORMAL_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentCode(pub Vec<f64>);

impl LatentCode {
    pub fn zeros(k: usize) -> Self {
        LatentCode(vec![0.0; k])
    }

    pub fn unit(k: usize, i: usize) -> Self {
        let mut c = Self::zeros(k);
        c.0[i] = 1.0;
        c
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &LatentCode) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = ContainerHeader::Code { k: self.len() };
        write_container(path, &header, &self.0)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        match read_container(path)? {
            (ContainerHeader::Code { k }, payload) if payload.len() == k => Ok(LatentCode(payload)),
            (ContainerHeader::Code { k }, payload) => Err(Error::DimensionMismatch {
                expected: k,
                got: payload.len(),
            }),
            _ => Err(Error::format("code file", "header kind is not `code`")),
        }
    }
}

/// Watertight template plus an orthonormal displacement basis.
#[derive(Clone, Debug)]
pub struct TemplateMesh {
    base: Mesh,
    /// Column-major, `k` columns of length `3 * vertex_count`.
    basis: Vec<f64>,
    sigma: Vec<f64>,
}

impl TemplateMesh {
    /// Validates connectivity, watertightness and basis orthonormality.
    pub fn new(base: Mesh, basis: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        base.check_indices()?;
        base.check_watertight()?;
        let dim = 3 * base.vertices.len();
        let k = sigma.len();
        if basis.len() != k * dim {
            return Err(Error::DimensionMismatch {
                expected: k * dim,
                got: basis.len(),
            });
        }
        if sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidMesh("mode spreads must be finite and non-negative".into()));
        }
        let t = TemplateMesh { base, basis, sigma };
        for i in 0..k {
            for j in i..k {
                let d = dot(t.column(i), t.column(j));
                let want = if i == j { 1.0 } else { 0.0 };
                if (d - want).abs() > ORTHONORMAL_TOL {
                    return Err(Error::InvalidMesh(format!(
                        "basis columns {i},{j} are not orthonormal (dot = {d})"
                    )));
                }
            }
        }
        Ok(t)
    }

    pub fn k(&self) -> usize {
        self.sigma.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.base.vertices.len()
    }

    pub fn base(&self) -> &Mesh {
        &self.base
    }

    pub fn faces(&self) -> &Arc<[Face]> {
        &self.base.faces
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn column(&self, k: usize) -> &[f64] {
        let dim = 3 * self.vertex_count();
        &self.basis[k * dim..(k + 1) * dim]
    }

    /// Displacement of vertex `v` per unit of mode `k`.
    pub fn mode_displacement(&self, k: usize, v: usize) -> Point3 {
        let c = self.column(k);
        Point3::new(c[3 * v], c[3 * v + 1], c[3 * v + 2])
    }

    pub fn bounds(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| CLAMP_SIGMAS * s).collect()
    }

    pub fn check_code(&self, code: &LatentCode) -> Result<()> {
        if code.len() != self.k() {
            return Err(Error::DimensionMismatch {
                expected: self.k(),
                got: code.len(),
            });
        }
        Ok(())
    }

    /// `base + sum_k theta_k * basis_k`.
    pub fn decode(&self, code: &LatentCode) -> Result<Mesh> {
        self.check_code(code)?;
        let mut flat = self.base.flat_coords();
        for (k, &theta) in code.0.iter().enumerate() {
            if theta != 0.0 {
                for (x, b) in flat.iter_mut().zip(self.column(k)) {
                    *x += theta * b;
                }
            }
        }
        let vertices = flat
            .chunks_exact(3)
            .map(|c| Point3::new(c[0], c[1], c[2]))
            .collect();
        Ok(Mesh {
            vertices,
            faces: self.base.faces.clone(),
        })
    }

    /// Pulls a gradient over flattened vertex coordinates back to the code:
    /// `B^T g`.
    pub fn pullback(&self, vertex_grad: &[Point3]) -> Vec<f64> {
        (0..self.k())
            .map(|k| {
                let col = self.column(k);
                vertex_grad
                    .iter()
                    .enumerate()
                    .map(|(v, g)| col[3 * v] * g.x + col[3 * v + 1] * g.y + col[3 * v + 2] * g.z)
                    .sum()
            })
            .collect()
    }

    /// Orthogonal projection of a mesh with the same connectivity onto the
    /// latent space.
    pub fn encode(&self, mesh: &Mesh) -> Result<LatentCode> {
        if mesh.vertices.len() != self.vertex_count() {
            return Err(Error::DimensionMismatch {
                expected: self.vertex_count(),
                got: mesh.vertices.len(),
            });
        }
        let diff: Vec<f64> = mesh
            .flat_coords()
            .iter()
            .zip(self.base.flat_coords())
            .map(|(a, b)| a - b)
            .collect();
        Ok(LatentCode(
            (0..self.k()).map(|k| dot(self.column(k), &diff)).collect(),
        ))
    }

    pub fn clamp(&self, code: &mut LatentCode) {
        for (theta, s) in code.0.iter_mut().zip(&self.sigma) {
            let b = CLAMP_SIGMAS * s;
            *theta = theta.clamp(-b, b);
        }
    }

    /// Writes `mesh.obj` and `basis.bin` into `dir`.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("mesh.obj"), self.base.to_obj_string())?;
        let header = ContainerHeader::Basis {
            k: self.k(),
            vertex_count: self.vertex_count(),
            sigma: self.sigma.clone(),
        };
        write_container(dir.join("basis.bin"), &header, &self.basis)
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let obj = std::fs::File::open(dir.join("mesh.obj"))?;
        let base = Mesh::read_obj(std::io::BufReader::new(obj))?;
        match read_container(dir.join("basis.bin"))? {
            (
                ContainerHeader::Basis {
                    k,
                    vertex_count,
                    sigma,
                },
                payload,
            ) => {
                if vertex_count != base.vertices.len() || sigma.len() != k {
                    return Err(Error::format(
                        "basis file",
                        format!(
                            "header says {vertex_count} vertices / {} spreads for k = {k}, mesh has {} vertices",
                            sigma.len(),
                            base.vertices.len()
                        ),
                    ));
                }
                TemplateMesh::new(base, payload, sigma)
            }
            _ => Err(Error::format("basis file", "header kind is not `basis`")),
        }
    }

    /// Subdivided-cube sphere fitted to a procedural family of blobs, boxes
    /// and tapered shapes.
    pub fn builtin() -> TemplateMesh {
        Self::builtin_with(BuiltinSpec::default())
    }

    pub fn builtin_with(spec: BuiltinSpec) -> TemplateMesh {
        let lib = procedural_library(spec.segments, spec.library_size, spec.seed);
        fit_basis(&lib, spec.k).expect("procedural library supports the requested rank")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuiltinSpec {
    pub segments: usize,
    pub k: usize,
    pub library_size: usize,
    pub seed: u64,
}

impl Default for BuiltinSpec {
    fn default() -> Self {
        BuiltinSpec {
            segments: 6,
            k: 32,
            library_size: 96,
            seed: 7,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Principal displacement modes of a set of meshes sharing connectivity.
///
/// The base is the per-vertex mean and `sigma_k` the population standard
/// deviation of the inputs along mode `k`. Modes with zero variance are
/// completed with arbitrary orthonormal directions.
pub fn fit_basis(meshes: &[Mesh], k: usize) -> Result<TemplateMesh> {
    let first = meshes
        .first()
        .ok_or_else(|| Error::InvalidConfig("fit_basis needs at least one mesh".into()))?;
    let n = first.vertices.len();
    for (i, m) in meshes.iter().enumerate() {
        if m.vertices.len() != n || m.faces != first.faces {
            return Err(Error::ConnectivityMismatch(format!(
                "mesh {i} differs from mesh 0"
            )));
        }
    }
    let samples = meshes.len();
    let dim = 3 * n;
    let max = (samples - 1).min(dim);
    if k == 0 || k > max {
        return Err(Error::TooManyModes {
            requested: k,
            meshes: samples,
            max,
        });
    }

    let flats: Vec<Vec<f64>> = meshes.iter().map(Mesh::flat_coords).collect();
    let mut mean = vec![0.0; dim];
    for f in &flats {
        for (m, x) in mean.iter_mut().zip(f) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= samples as f64);
    let centered = DMatrix::from_fn(samples, dim, |i, j| flats[i][j] - mean[j]);

    let gram = &centered * centered.transpose();
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..samples).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let tiny = 1e-12 * top.max(f64::MIN_POSITIVE);

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut sigma = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        let lambda = eig.eigenvalues[i];
        if lambda > tiny {
            let u = eig.eigenvectors.column(i);
            let col = centered.transpose() * u;
            columns.push(col.iter().map(|x| x / lambda.sqrt()).collect());
            sigma.push((lambda / samples as f64).sqrt());
        } else {
            columns.push(Vec::new());
            sigma.push(0.0);
        }
    }
    orthonormalize(&mut columns, dim);

    let base_vertices = mean
        .chunks_exact(3)
        .map(|c| Point3::new(c[0], c[1], c[2]))
        .collect();
    let base = Mesh {
        vertices: base_vertices,
        faces: first.faces.clone(),
    };
    TemplateMesh::new(base, columns.concat(), sigma)
}

/// Modified Gram-Schmidt with one reorthogonalization pass. Empty columns
/// are filled from the canonical directions.
fn orthonormalize(columns: &mut [Vec<f64>], dim: usize) {
    let mut canonical = 0usize;
    for i in 0..columns.len() {
        loop {
            if columns[i].is_empty() {
                let mut e = vec![0.0; dim];
                e[canonical % dim] = 1.0;
                canonical += 1;
                columns[i] = e;
            }
            let (done, rest) = columns.split_at_mut(i);
            let col = &mut rest[0];
            let before = dot(col, col).sqrt();
            for _ in 0..2 {
                for prev in done.iter() {
                    let p = dot(col, prev);
                    col.iter_mut().zip(prev).for_each(|(c, q)| *c -= p * q);
                }
            }
            let norm = dot(col, col).sqrt();
            if norm > 1e-8 * before.max(1.0) {
                col.iter_mut().for_each(|c| *c /= norm);
                break;
            }
            col.clear();
        }
    }
}

/// Random shapes on a subdivided-cube template: box/sphere blends with
/// per-axis extents, taper, bend and bulge. Centered and scaled so that the
/// whole library fits in the unit ball.
pub fn procedural_library(segments: usize, count: usize, seed: u64) -> Vec<Mesh> {
    let cube = Mesh::subdivided_cube(segments);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shapes: Vec<Mesh> = (0..count)
        .map(|_| {
            let params = ShapeParams {
                roundness: rng.random_range(0.0..1.0),
                extents: [
                    rng.random_range(0.5..1.0),
                    rng.random_range(0.5..1.0),
                    rng.random_range(0.5..1.0),
                ],
                taper: rng.random_range(-0.4..0.4),
                bend: rng.random_range(-0.3..0.3),
                bulge: rng.random_range(-0.2..0.3),
            };
            params.apply(&cube)
        })
        .collect();
    let radius = shapes.iter().map(Mesh::bounding_radius).fold(0.0, f64::max);
    let s = 0.95 / radius;
    for m in &mut shapes {
        *m = m.scaled(s);
    }
    shapes
}

#[derive(Clone, Copy, Debug)]
struct ShapeParams {
    roundness: f64,
    extents: [f64; 3],
    taper: f64,
    bend: f64,
    bulge: f64,
}

impl ShapeParams {
    fn apply(&self, cube: &Mesh) -> Mesh {
        let m = cube.map_vertices(|c| {
            let sphere = c.normalize();
            let p = c * 0.8 * (1.0 - self.roundness) + sphere * self.roundness;
            let mut q = Point3::new(
                p.x * self.extents[0],
                p.y * self.extents[1],
                p.z * self.extents[2],
            );
            let taper = 1.0 + self.taper * p.y;
            q.x *= taper;
            q.z *= taper;
            q.x += self.bend * p.y * p.y;
            q.z *= 1.0 + self.bulge * (1.0 - p.x * p.x);
            q
        });
        let centroid =
            m.vertices.iter().fold(Point3::zeros(), |acc, v| acc + v) / m.vertices.len() as f64;
        m.translated(-centroid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bipyramid() -> Mesh {
        // 8-gon ring plus two apexes: 10 vertices, 16 faces, watertight.
        let ring = 8;
        let mut vertices: Vec<Point3> = (0..ring)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / ring as f64;
                Point3::new(0.6 * a.cos(), 0.0, 0.6 * a.sin())
            })
            .collect();
        vertices.push(Point3::new(0.0, 0.7, 0.0));
        vertices.push(Point3::new(0.0, -0.7, 0.0));
        let mut faces = Vec::new();
        for i in 0..ring {
            let j = (i + 1) % ring;
            faces.push([i, ring, j]);
            faces.push([i, j, ring + 1]);
        }
        Mesh::new(vertices, faces).unwrap()
    }

    fn random_template(k: usize, seed: u64) -> TemplateMesh {
        let base = bipyramid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lib: Vec<Mesh> = (0..k + 3)
            .map(|_| {
                let vertices = base
                    .vertices
                    .iter()
                    .map(|v| v + Point3::from_fn(|_, _| rng.random_range(-0.1..0.1)))
                    .collect();
                Mesh::new(vertices, base.faces.clone()).unwrap()
            })
            .collect();
        fit_basis(&lib, k).unwrap()
    }

    #[test]
    fn decode_zero_is_base_and_unit_adds_column() {
        let t = random_template(4, 1);
        let zero = t.decode(&LatentCode::zeros(4)).unwrap();
        assert_eq!(zero.vertices, t.base().vertices);
        let e1 = t.decode(&LatentCode::unit(4, 0)).unwrap();
        for v in 0..t.vertex_count() {
            assert_eq!(e1.vertices[v], t.base().vertices[v] + t.mode_displacement(0, v));
        }
        assert!(matches!(
            t.decode(&LatentCode::zeros(3)),
            Err(Error::DimensionMismatch { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn decode_jacobian_matches_finite_differences() {
        let t = random_template(4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let code = LatentCode((0..4).map(|_| rng.random_range(-1.0..1.0)).collect());
        let h = 1e-5;
        for k in 0..4 {
            let mut plus = code.clone();
            let mut minus = code.clone();
            plus.0[k] += h;
            minus.0[k] -= h;
            let (p, m) = (t.decode(&plus).unwrap(), t.decode(&minus).unwrap());
            let fd: Vec<f64> = p
                .flat_coords()
                .iter()
                .zip(m.flat_coords())
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect();
            let col = t.column(k);
            let err: f64 = fd.iter().zip(col).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(err / dot(col, col).sqrt() < 1e-8, "mode {k}: {err}");
        }
    }

    #[test]
    fn identical_inputs_give_zero_spread() {
        let s = bipyramid();
        let t = fit_basis(&[s.clone(), s.clone()], 1).unwrap();
        assert_eq!(t.sigma(), &[0.0]);
        for (a, b) in t.base().vertices.iter().zip(&s.vertices) {
            assert!((a - b).norm() < 1e-15);
        }
        assert!((dot(t.column(0), t.column(0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_samples_give_displacement_direction() {
        let s = bipyramid();
        let d: Vec<Point3> = (0..s.vertices.len())
            .map(|i| Point3::new(0.01 * i as f64, -0.02, 0.03 * (i % 3) as f64))
            .collect();
        let moved = Mesh {
            vertices: s.vertices.iter().zip(&d).map(|(v, dv)| v + dv).collect(),
            faces: s.faces.clone(),
        };
        let t = fit_basis(&[s.clone(), moved.clone()], 1).unwrap();
        let flat_d: Vec<f64> = d.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        let norm_d = dot(&flat_d, &flat_d).sqrt();
        let cos = dot(t.column(0), &flat_d) / norm_d;
        assert!((cos.abs() - 1.0).abs() < 1e-12);
        assert!((t.sigma()[0] - norm_d / 2.0).abs() < 1e-12);
        for m in [&s, &moved] {
            let back = t.decode(&t.encode(m).unwrap()).unwrap();
            for (a, b) in back.vertices.iter().zip(&m.vertices) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn boxes_of_varying_width_and_height_are_rank_two() {
        let cube = Mesh::subdivided_cube(2);
        let dims = [(0.5, 0.4), (0.7, 0.3), (0.2, 0.6), (0.6, 0.6), (0.3, 0.2), (0.4, 0.5)];
        let boxes: Vec<Mesh> = dims
            .iter()
            .map(|&(w, h)| cube.map_vertices(|v| Point3::new(v.x * w, v.y * h, v.z * 0.4)))
            .collect();
        let t = fit_basis(&boxes, 2).unwrap();
        for b in &boxes {
            let rec = t.decode(&t.encode(b).unwrap()).unwrap();
            let rms = (rec
                .vertices
                .iter()
                .zip(&b.vertices)
                .map(|(x, y)| (x - y).norm_squared())
                .sum::<f64>()
                / b.vertices.len() as f64)
                .sqrt();
            assert!(rms < 1e-10 * b.bounding_radius(), "rms {rms}");
        }
    }

    #[test]
    fn fit_basis_errors() {
        let s = bipyramid();
        assert!(matches!(
            fit_basis(&[s.clone(), s.clone()], 2),
            Err(Error::TooManyModes { .. })
        ));
        let other = Mesh::subdivided_cube(1);
        assert!(matches!(
            fit_basis(&[s, other], 1),
            Err(Error::ConnectivityMismatch(_))
        ));
    }

    #[test]
    fn builtin_template_is_valid() {
        let t = TemplateMesh::builtin_with(BuiltinSpec {
            k: 8,
            ..Default::default()
        });
        assert_eq!(t.k(), 8);
        assert!(t.base().bounding_radius() <= 1.0);
        assert!(t.sigma().windows(2).all(|w| w[0] >= w[1]));
        assert!(t.sigma()[0] > 0.0);
    }

    #[test]
    fn template_dir_round_trip() {
        let t = random_template(3, 9);
        let dir = tempfile::tempdir().unwrap();
        t.save_dir(dir.path()).unwrap();
        let back = TemplateMesh::load_dir(dir.path()).unwrap();
        assert_eq!(back.sigma(), t.sigma());
        assert_eq!(back.basis, t.basis);
        let code = LatentCode(vec![0.5, -1.0, 2.0]);
        let p = dir.path().join("code.bin");
        code.save(&p).unwrap();
        assert_eq!(LatentCode::load(&p).unwrap(), code);
    }

    #[test]
    fn clamp_limits_to_three_sigma() {
        let t = random_template(2, 4);
        let mut c = LatentCode(vec![1e3, -1e3]);
        t.clamp(&mut c);
        assert_eq!(c.0[0], 3.0 * t.sigma()[0]);
        assert_eq!(c.0[1], -3.0 * t.sigma()[1]);
    }
}
