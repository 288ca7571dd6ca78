//! Losses over the latent code and their gradients.
//!
//! Every loss depends on the code through a rasterization, which is piecewise
//! constant. A [`Linearization`] freezes the discrete choices made by one
//! rendering (contour anchors, nearest-neighbour pairings, silhouette
//! boundary pixels, visible faces) and exposes a smooth surrogate that
//! equals the true loss at the code it was built from. Gradients are those
//! of the surrogate.

use std::sync::Arc;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::camera::{Camera, Point2};
use crate::chamfer::{ChamferMode, ChamferPairing, ChamferResult, ChamferTarget};
use crate::contour::{filter_sketch_external, mesh_contour_anchors, Anchor};
use crate::error::{Error, Result};
use crate::image::{distance_transform, BinaryImage};
use crate::mesh::{Mesh, Point3};
use crate::raster::{rasterize, RasterBuffers};
use crate::shape::{LatentCode, TemplateMesh};

use super::RefinementConfig;

/// Loss breakdown. `total` is the weighted sum the optimizer minimizes;
/// the other fields are unweighted term values (zero when absent).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub chamfer: f64,
    pub silhouette: f64,
    pub mask: f64,
    pub normal: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub terms: LossTerms,
    pub grad: Vec<f64>,
}

/// Silhouette boundary pixel lifted to the surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryAnchor {
    pub anchor: Anchor,
    /// Unit outward direction in the image.
    pub normal: Point2,
    /// Loss change per pixel of outward boundary motion.
    pub weight: f64,
}

/// Reference data for a local edit, captured from the code being edited.
#[derive(Clone, Debug)]
pub struct PartialEdit {
    stroke: Arc<ChamferTarget>,
    stroke_distance: Vec<f64>,
    locality: Vec<f64>,
    reference_mask: Vec<f64>,
    reference_normals: Vec<Point3>,
    width: usize,
    height: usize,
    t: f64,
    lambda_mask: f64,
    lambda_normal: f64,
}

impl PartialEdit {
    pub fn locality(&self) -> &[f64] {
        &self.locality
    }
}

#[derive(Clone, Debug)]
pub enum Objective {
    /// Chamfer distance between the mesh's external contour and a filtered
    /// sketch.
    Chamfer { target: Arc<ChamferTarget>, width: usize, height: usize },
    /// Squared mask difference against a foreground mask.
    Silhouette { target: BinaryImage },
    /// Stroke-local Chamfer plus mask and normal preservation away from the
    /// stroke.
    Partial(Box<PartialEdit>),
}

impl Objective {
    /// Chamfer objective against an already filtered contour image.
    pub fn chamfer(filtered: &BinaryImage) -> Result<Objective> {
        if filtered.stroke_count() == 0 {
            return Err(Error::EmptySketch);
        }
        Ok(Objective::Chamfer {
            target: Arc::new(ChamferTarget::from_image(filtered)?),
            width: filtered.width(),
            height: filtered.height(),
        })
    }

    /// Chamfer objective from a raw sketch; applies the external filter.
    pub fn chamfer_from_sketch(sketch: &BinaryImage) -> Result<Objective> {
        Objective::chamfer(&filter_sketch_external(sketch)?)
    }

    pub fn silhouette(target: BinaryImage) -> Result<Objective> {
        if target.count(1) == 0 {
            return Err(Error::EmptyMask);
        }
        Ok(Objective::Silhouette { target })
    }

    /// Edit objective: `stroke` is drawn over the rendering of `code0`.
    pub fn partial_edit(
        template: &TemplateMesh,
        camera: &Camera,
        code0: &LatentCode,
        stroke: &BinaryImage,
        config: &RefinementConfig,
    ) -> Result<Objective> {
        check_size(camera, stroke.width(), stroke.height())?;
        if stroke.stroke_count() == 0 {
            return Err(Error::EmptySketch);
        }
        let reference = rasterize(&template.decode(code0)?, camera);
        let (w, h) = (stroke.width(), stroke.height());
        let stroke_distance = distance_transform(&stroke.strokes(), w, h);
        Ok(Objective::Partial(Box::new(PartialEdit {
            stroke: Arc::new(ChamferTarget::from_image(stroke)?),
            locality: locality_mask(&stroke_distance, config.t),
            stroke_distance,
            reference_mask: reference.mask.values().iter().map(|&m| f64::from(m)).collect(),
            reference_normals: reference.normals,
            width: w,
            height: h,
            t: config.t,
            lambda_mask: config.lambda_mask,
            lambda_normal: config.lambda_normal,
        })))
    }

    fn size(&self) -> (usize, usize) {
        match self {
            Objective::Chamfer { width, height, .. } => (*width, *height),
            Objective::Silhouette { target } => (target.width(), target.height()),
            Objective::Partial(p) => (p.width, p.height),
        }
    }

    /// Renders `code` and freezes the discrete choices of that rendering.
    pub fn linearize(&self, template: &TemplateMesh, camera: &Camera, code: &LatentCode) -> Result<Linearization> {
        let (w, h) = self.size();
        check_size(camera, w, h)?;
        let mesh = template.decode(code)?;
        let buffers = rasterize(&mesh, camera);
        let hw = (camera.width() * camera.height()) as f64;
        let mut lin = Linearization {
            code: code.clone(),
            contour: None,
            boundary: None,
            normal: None,
        };
        match self {
            Objective::Chamfer { target, .. } => {
                let (_, set) = mesh_contour_anchors(&buffers)?;
                let uv = project_anchors(&mesh, camera, &set.anchors)?;
                let r = target.evaluate(&uv, ChamferMode::Full)?;
                lin.contour = Some(ContourPart {
                    anchors: set.anchors,
                    pairing: r.pairing,
                    target: target.clone(),
                });
            }
            Objective::Silhouette { target } => {
                target.same_size(&buffers.mask)?;
                let t: Vec<f64> = target.values().iter().map(|&m| f64::from(m)).collect();
                let value = mask_loss(&buffers, &t, None) / hw;
                let anchors = boundary_anchors(&buffers, &t, None);
                lin.boundary = Some(BoundaryPart::new(&mesh, camera, anchors, value, 1.0)?);
            }
            Objective::Partial(p) => {
                let (_, set) = mesh_contour_anchors(&buffers)?;
                let reach = 2.0 * p.t;
                let anchors: Vec<Anchor> = set
                    .anchors
                    .into_iter()
                    .filter(|a| p.stroke_distance[buffers.index(a.pixel.0, a.pixel.1)] < reach)
                    .collect();
                if anchors.is_empty() {
                    return Err(Error::NoContourNearStroke { radius: reach });
                }
                let uv = project_anchors(&mesh, camera, &anchors)?;
                let r = p.stroke.evaluate(&uv, ChamferMode::StrokeMatched)?;
                lin.contour = Some(ContourPart {
                    anchors,
                    pairing: r.pairing,
                    target: p.stroke.clone(),
                });
                if p.lambda_mask > 0.0 {
                    let value = mask_loss(&buffers, &p.reference_mask, Some(&p.locality)) / hw;
                    let anchors = boundary_anchors(&buffers, &p.reference_mask, Some(&p.locality));
                    lin.boundary = Some(BoundaryPart::new(&mesh, camera, anchors, value, p.lambda_mask)?);
                }
                if p.lambda_normal > 0.0 {
                    lin.normal = Some(NormalPart::new(&buffers, p, camera));
                }
            }
        }
        Ok(lin)
    }

    /// True loss and surrogate gradient at `code`.
    pub fn evaluate(&self, template: &TemplateMesh, camera: &Camera, code: &LatentCode) -> Result<Evaluation> {
        self.linearize(template, camera, code)?.evaluate(template, camera, code)
    }
}

fn check_size(camera: &Camera, w: usize, h: usize) -> Result<()> {
    if camera.width() != w || camera.height() != h {
        return Err(Error::ImageSize(format!(
            "target is {w}x{h} but the camera renders {}x{}",
            camera.width(),
            camera.height()
        )));
    }
    Ok(())
}

/// Per-pixel weight of the preservation terms: zero within `t` pixels of a
/// stroke, one elsewhere.
pub fn locality_mask(stroke_distance: &[f64], t: f64) -> Vec<f64> {
    stroke_distance.iter().map(|&d| if d < t { 0.0 } else { 1.0 }).collect()
}

fn project_anchors(mesh: &Mesh, camera: &Camera, anchors: &[Anchor]) -> Result<Vec<Point2>> {
    anchors.iter().map(|a| camera.project(&a.realize(mesh))).collect()
}

fn mask_loss(buffers: &RasterBuffers, reference: &[f64], weight: Option<&[f64]>) -> f64 {
    buffers
        .mask
        .values()
        .iter()
        .zip(reference)
        .enumerate()
        .map(|(i, (&m, &r))| weight.map_or(1.0, |w| w[i]) * (f64::from(m) - r).powi(2))
        .sum()
}

/// Foreground pixels with a background 4-neighbour inside the image, with
/// outward directions and the derivative of the weighted squared mask
/// difference against `reference` per pixel of outward motion.
pub fn boundary_anchors(buffers: &RasterBuffers, reference: &[f64], weight: Option<&[f64]>) -> Vec<BoundaryAnchor> {
    let (w, h) = (buffers.width, buffers.height);
    let hw = (w * h) as f64;
    let ell = |i: usize| weight.map_or(1.0, |wt| wt[i]);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let Some(face) = buffers.face_at(x, y) else { continue };
            let mut dir = Point2::zeros();
            let mut grow = 0.0;
            let mut n_bg = 0usize;
            let neighbours = [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)];
            for (dx, dy) in neighbours {
                let (qx, qy) = (x as isize + dx, y as isize + dy);
                if qx < 0 || qy < 0 || qx >= w as isize || qy >= h as isize {
                    continue;
                }
                let q = qy as usize * w + qx as usize;
                if buffers.face_id[q] >= 0 {
                    continue;
                }
                dir += Point2::new(dx as f64, dy as f64);
                grow += ell(q) * (1.0 - 2.0 * reference[q]);
                n_bg += 1;
            }
            if n_bg == 0 {
                continue;
            }
            let norm = dir.norm();
            if norm == 0.0 {
                continue;
            }
            let shrink = ell(i) * (1.0 - 2.0 * reference[i]);
            let weight = 0.5 * (grow / n_bg as f64 + shrink) / hw;
            out.push(BoundaryAnchor {
                anchor: Anchor {
                    face,
                    bary: buffers.bary[i],
                    pixel: (x, y),
                },
                normal: dir / norm,
                weight,
            });
        }
    }
    out
}

/// Accumulates per-anchor image gradients into vertex gradients and pulls
/// them back to the code.
pub fn pullback_anchor_grads(
    template: &TemplateMesh,
    mesh: &Mesh,
    camera: &Camera,
    anchors: &[Anchor],
    grads: &[Point2],
) -> Result<Vec<f64>> {
    let mut vertex_grad = vec![Point3::zeros(); mesh.vertices.len()];
    accumulate_anchor_grads(mesh, camera, anchors, grads, &mut vertex_grad)?;
    Ok(template.pullback(&vertex_grad))
}

fn accumulate_anchor_grads(
    mesh: &Mesh,
    camera: &Camera,
    anchors: &[Anchor],
    grads: &[Point2],
    vertex_grad: &mut [Point3],
) -> Result<()> {
    for (a, g) in anchors.iter().zip(grads) {
        if g.x == 0.0 && g.y == 0.0 {
            continue;
        }
        let (_, jac) = camera.project_with_jacobian(&a.realize(mesh))?;
        let g3: Point3 = jac.transpose() * g;
        let f = mesh.faces[a.face];
        for c in 0..3 {
            vertex_grad[f[c]] += g3 * a.bary[c];
        }
    }
    Ok(())
}

/// Chamfer loss of the mesh contour anchors against `target`, and its
/// gradient over the code.
pub fn chamfer_grad_code(
    anchors: &[Anchor],
    template: &TemplateMesh,
    code: &LatentCode,
    camera: &Camera,
    target: &ChamferTarget,
) -> Result<(ChamferResult, Vec<f64>)> {
    let mesh = template.decode(code)?;
    let uv = project_anchors(&mesh, camera, anchors)?;
    let r = target.evaluate(&uv, ChamferMode::Full)?;
    let grad = pullback_anchor_grads(template, &mesh, camera, anchors, &r.grad)?;
    Ok((r, grad))
}

/// Mean squared difference between the rendered mask and `target_mask`,
/// with its boundary-motion gradient.
pub fn silhouette_loss(
    code: &LatentCode,
    target_mask: &BinaryImage,
    template: &TemplateMesh,
    camera: &Camera,
) -> Result<(f64, Vec<f64>)> {
    let e = Objective::silhouette(target_mask.clone())?.evaluate(template, camera, code)?;
    Ok((e.terms.silhouette, e.grad))
}

/// Local edit loss of `code` for a stroke drawn over the rendering of
/// `code0`.
pub fn partial_edit_loss(
    code: &LatentCode,
    code0: &LatentCode,
    stroke: &BinaryImage,
    template: &TemplateMesh,
    camera: &Camera,
    config: &RefinementConfig,
) -> Result<(LossTerms, Vec<f64>)> {
    let e = Objective::partial_edit(template, camera, code0, stroke, config)?.evaluate(template, camera, code)?;
    Ok((e.terms, e.grad))
}

#[derive(Clone, Debug)]
struct ContourPart {
    anchors: Vec<Anchor>,
    pairing: ChamferPairing,
    target: Arc<ChamferTarget>,
}

#[derive(Clone, Debug)]
struct BoundaryPart {
    anchors: Vec<BoundaryAnchor>,
    plain: Vec<Anchor>,
    origin: Vec<Point2>,
    value: f64,
    scale: f64,
}

impl BoundaryPart {
    fn new(mesh: &Mesh, camera: &Camera, anchors: Vec<BoundaryAnchor>, value: f64, scale: f64) -> Result<Self> {
        let plain: Vec<Anchor> = anchors.iter().map(|b| b.anchor).collect();
        let origin = project_anchors(mesh, camera, &plain)?;
        Ok(BoundaryPart {
            anchors,
            plain,
            origin,
            value,
            scale,
        })
    }
}

/// Visible faces of the linearization rendering with the moments of the
/// weighted reference normals they cover.
#[derive(Clone, Debug)]
struct FaceMoments {
    face: usize,
    count: f64,
    sum: Point3,
    square: f64,
}

#[derive(Clone, Debug)]
struct NormalPart {
    faces: Vec<FaceMoments>,
    constant: f64,
    scale: f64,
    hw: f64,
    rotation: Matrix3<f64>,
}

impl NormalPart {
    fn new(buffers: &RasterBuffers, p: &PartialEdit, camera: &Camera) -> Self {
        let mut index = std::collections::BTreeMap::<usize, FaceMoments>::new();
        let mut constant = 0.0;
        for (i, &l) in p.locality.iter().enumerate() {
            if l == 0.0 {
                continue;
            }
            let n0 = p.reference_normals[i];
            match buffers.face_id[i] {
                f if f >= 0 => {
                    let m = index.entry(f as usize).or_insert(FaceMoments {
                        face: f as usize,
                        count: 0.0,
                        sum: Point3::zeros(),
                        square: 0.0,
                    });
                    m.count += l;
                    m.sum += n0 * l;
                    m.square += l * n0.norm_squared();
                }
                _ => constant += l * n0.norm_squared(),
            }
        }
        NormalPart {
            faces: index.into_values().collect(),
            constant,
            scale: p.lambda_normal,
            hw: (buffers.width * buffers.height) as f64,
            rotation: *camera.rotation(),
        }
    }

    /// Weighted squared normal difference over `hw` and its vertex gradient.
    fn evaluate(&self, mesh: &Mesh, vertex_grad: &mut [Point3]) -> f64 {
        let mut total = self.constant;
        for m in &self.faces {
            let [a, b, c] = mesh.corners(m.face);
            let (e1, e2) = (b - a, c - a);
            let cross = e1.cross(&e2);
            let len = cross.norm();
            if len == 0.0 {
                total += m.square;
                continue;
            }
            let nw = cross / len;
            let n = self.rotation * nw;
            total += m.count * n.norm_squared() - 2.0 * n.dot(&m.sum) + m.square;
            let g_n = (n * m.count - m.sum) * (2.0 * self.scale / self.hw);
            let g_w = self.rotation.transpose() * g_n;
            let g_c = (g_w - nw * nw.dot(&g_w)) / len;
            let g_e1 = e2.cross(&g_c);
            let g_e2 = g_c.cross(&e1);
            let f = mesh.faces[m.face];
            vertex_grad[f[1]] += g_e1;
            vertex_grad[f[2]] += g_e2;
            vertex_grad[f[0]] -= g_e1 + g_e2;
        }
        total / self.hw
    }
}

/// Discrete state of one rendering. [`Linearization::evaluate`] is smooth in
/// the code and equals the true loss at [`Linearization::code`].
#[derive(Clone, Debug)]
pub struct Linearization {
    code: LatentCode,
    contour: Option<ContourPart>,
    boundary: Option<BoundaryPart>,
    normal: Option<NormalPart>,
}

impl Linearization {
    pub fn code(&self) -> &LatentCode {
        &self.code
    }

    pub fn anchor_count(&self) -> usize {
        self.contour.as_ref().map_or(0, |c| c.anchors.len())
    }

    pub fn boundary_count(&self) -> usize {
        self.boundary.as_ref().map_or(0, |b| b.anchors.len())
    }

    pub fn evaluate(&self, template: &TemplateMesh, camera: &Camera, code: &LatentCode) -> Result<Evaluation> {
        let mesh = template.decode(code)?;
        let mut vertex_grad = vec![Point3::zeros(); mesh.vertices.len()];
        let mut terms = LossTerms::default();
        if let Some(c) = &self.contour {
            let uv = project_anchors(&mesh, camera, &c.anchors)?;
            let r = c.target.evaluate_paired(&uv, &c.pairing);
            accumulate_anchor_grads(&mesh, camera, &c.anchors, &r.grad, &mut vertex_grad)?;
            terms.chamfer = r.loss;
            terms.total += r.loss;
        }
        if let Some(b) = &self.boundary {
            let uv = project_anchors(&mesh, camera, &b.plain)?;
            let mut value = b.value;
            let grads: Vec<Point2> = b
                .anchors
                .iter()
                .zip(uv.iter().zip(&b.origin))
                .map(|(ba, (u, u0))| {
                    value += ba.weight * ba.normal.dot(&(u - u0));
                    ba.normal * (ba.weight * b.scale)
                })
                .collect();
            accumulate_anchor_grads(&mesh, camera, &b.plain, &grads, &mut vertex_grad)?;
            if self.contour.is_some() {
                terms.mask = value;
            } else {
                terms.silhouette = value;
            }
            terms.total += b.scale * value;
        }
        if let Some(n) = &self.normal {
            let value = n.evaluate(&mesh, &mut vertex_grad);
            terms.normal = value;
            terms.total += n.scale * value;
        }
        Ok(Evaluation {
            terms,
            grad: template.pullback(&vertex_grad),
        })
    }
}
