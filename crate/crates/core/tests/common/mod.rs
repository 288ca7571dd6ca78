#![allow(dead_code)]

use contour_refine::camera::Point2;
use contour_refine::refine::Objective;
use contour_refine::shape::BuiltinSpec;
use contour_refine::{Camera, LatentCode, Mesh, Point3, TemplateMesh};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn template(k: usize, seed: u64) -> TemplateMesh {
    TemplateMesh::builtin_with(BuiltinSpec {
        segments: 6,
        k,
        library_size: 48,
        seed,
    })
}

/// Code drawn uniformly from a box of `scale` spreads per mode.
pub fn random_code(t: &TemplateMesh, scale: f64, rng: &mut ChaCha8Rng) -> LatentCode {
    LatentCode(t.sigma().iter().map(|s| scale * s * rng.random_range(-1.0..1.0)).collect())
}

/// `code` moved by a random direction of unit length in spread-normalized
/// coordinates, times `amount`.
pub fn perturb(t: &TemplateMesh, code: &LatentCode, amount: f64, rng: &mut ChaCha8Rng) -> LatentCode {
    let z: Vec<f64> = (0..t.k()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut out = code.clone();
    for (k, zk) in z.iter().enumerate() {
        out.0[k] += amount * t.sigma()[k] * zk / n;
    }
    t.clamp(&mut out);
    out
}

pub fn random_camera(size: usize, rng: &mut ChaCha8Rng) -> Camera {
    let az = rng.random_range(0.0..std::f64::consts::TAU);
    let el = rng.random_range(-20f64..60.0).to_radians();
    Camera::framing(az, el, size, size, 1.0).unwrap()
}

/// All-pairs Chamfer loss and anchor gradient, each direction averaged,
/// ties to the lowest index.
pub fn brute_chamfer(anchors: &[Point2], targets: &[Point2]) -> (f64, Vec<Point2>) {
    let nearest = |q: &Point2, set: &[Point2]| {
        let mut best = (0, f64::INFINITY);
        for (i, p) in set.iter().enumerate() {
            let d = (p - q).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    };
    let mut grad = vec![Point2::zeros(); anchors.len()];
    let mut fwd = 0.0;
    for (i, u) in anchors.iter().enumerate() {
        let (j, d) = nearest(u, targets);
        fwd += d;
        grad[i] += (u - targets[j]) * (2.0 / anchors.len() as f64);
    }
    let mut bwd = 0.0;
    for v in targets {
        let (i, d) = nearest(v, anchors);
        bwd += d;
        grad[i] += (anchors[i] - v) * (2.0 / targets.len() as f64);
    }
    (fwd / anchors.len() as f64 + bwd / targets.len() as f64, grad)
}

/// Largest per-coordinate relative error between the analytic gradient of
/// the frozen surrogate and central differences of the same surrogate.
pub fn fd_check(objective: &Objective, t: &TemplateMesh, cam: &Camera, code: &LatentCode, h: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let lin = objective.linearize(t, cam, code).unwrap();
    let analytic = lin.evaluate(t, cam, code).unwrap().grad;
    let mut fd = Vec::with_capacity(t.k());
    for k in 0..t.k() {
        let mut plus = code.clone();
        let mut minus = code.clone();
        plus.0[k] += h;
        minus.0[k] -= h;
        let lp = lin.evaluate(t, cam, &plus).unwrap().terms.total;
        let lm = lin.evaluate(t, cam, &minus).unwrap().terms.total;
        fd.push((lp - lm) / (2.0 * h));
    }
    let scale = fd.iter().chain(&analytic).fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = analytic
        .iter()
        .zip(&fd)
        .map(|(a, f)| (a - f).abs() / (a.abs().max(f.abs()) + 1e-7 * scale + 1e-12))
        .fold(0.0, f64::max);
    (worst, analytic, fd)
}

/// Subdivided-cube sphere with every vertex at `radius`.
pub fn sphere(segments: usize, radius: f64) -> Mesh {
    Mesh::sphere(segments, radius)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    if s.len() % 2 == 1 {
        s[s.len() / 2]
    } else {
        0.5 * (s[s.len() / 2 - 1] + s[s.len() / 2])
    }
}

pub fn centroid(m: &Mesh) -> Point3 {
    m.vertices.iter().fold(Point3::zeros(), |a, v| a + v) / m.vertices.len() as f64
}

/// One-mode template moving each vertex by `field(v)` per unit of
/// `code[0] / scale`; `scale` is returned and is also the mode's spread.
pub fn single_mode(base: &Mesh, field: impl Fn(&Point3) -> Point3) -> (TemplateMesh, f64) {
    let col: Vec<f64> = base.vertices.iter().flat_map(|v| {
        let d = field(v);
        [d.x, d.y, d.z]
    }).collect();
    let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
    let col = col.iter().map(|v| v / norm).collect();
    (TemplateMesh::new(base.clone(), col, vec![norm]).unwrap(), norm)
}
