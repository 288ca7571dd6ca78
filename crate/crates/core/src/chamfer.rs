//! Bidirectional 2D Chamfer distance between projected contour anchors and
//! target stroke pixels, with gradients over the anchor positions.
//!
//! Each directional sum is divided by the size of the set it runs over so
//! the loss is comparable across resolutions. Nearest-neighbour pairings are
//! returned so callers can evaluate the loss with the pairing held fixed.

use crate::camera::Point2;
use crate::error::{Error, Result};
use crate::image::BinaryImage;
use crate::nn::NearestGrid;

/// Which anchors enter the anchor-to-target direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChamferMode {
    /// Every anchor.
    Full,
    /// Only anchors that are the nearest anchor of at least one target
    /// pixel; used when the target is a partial stroke.
    StrokeMatched,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChamferPairing {
    /// Nearest target of each anchor.
    pub nearest_target: Vec<usize>,
    /// Nearest anchor of each target.
    pub nearest_anchor: Vec<usize>,
    /// Anchors taking part in the anchor-to-target sum.
    pub active: Vec<bool>,
}

impl ChamferPairing {
    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChamferResult {
    pub loss: f64,
    /// Anchor-to-target mean squared distance.
    pub forward: f64,
    /// Target-to-anchor mean squared distance.
    pub backward: f64,
    /// dL/du per anchor.
    pub grad: Vec<Point2>,
    pub pairing: ChamferPairing,
}

/// Centers of the stroke pixels of a stroke-role image, raster order.
pub fn stroke_points(image: &BinaryImage) -> Vec<Point2> {
    image
        .pixels_with(0)
        .map(|(x, y)| Point2::new(x as f64 + 0.5, y as f64 + 0.5))
        .collect()
}

fn to_arrays(points: &[Point2]) -> Vec<[f64; 2]> {
    points.iter().map(|p| [p.x, p.y]).collect()
}

/// Prebuilt index over a fixed target set.
#[derive(Clone, Debug)]
pub struct ChamferTarget {
    points: Vec<Point2>,
    grid: NearestGrid<2>,
}

impl ChamferTarget {
    pub fn new(points: Vec<Point2>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet("chamfer target"));
        }
        let grid = NearestGrid::new(to_arrays(&points));
        Ok(ChamferTarget { points, grid })
    }

    pub fn from_image(image: &BinaryImage) -> Result<Self> {
        Self::new(stroke_points(image))
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn evaluate(&self, anchors: &[Point2], mode: ChamferMode) -> Result<ChamferResult> {
        if anchors.is_empty() {
            return Err(Error::EmptyPointSet("projected contour"));
        }
        let anchor_grid = NearestGrid::new(to_arrays(anchors));
        let nearest_target: Vec<usize> = anchors
            .iter()
            .map(|u| self.grid.nearest(&[u.x, u.y]).expect("non-empty target").0)
            .collect();
        let nearest_anchor: Vec<usize> = self
            .points
            .iter()
            .map(|v| anchor_grid.nearest(&[v.x, v.y]).expect("non-empty anchors").0)
            .collect();
        let active = match mode {
            ChamferMode::Full => vec![true; anchors.len()],
            ChamferMode::StrokeMatched => {
                let mut a = vec![false; anchors.len()];
                for &i in &nearest_anchor {
                    a[i] = true;
                }
                a
            }
        };
        let pairing = ChamferPairing {
            nearest_target,
            nearest_anchor,
            active,
        };
        Ok(self.evaluate_paired(anchors, &pairing))
    }

    /// Loss and gradient with the nearest-neighbour pairing held fixed.
    /// Equals [`ChamferTarget::evaluate`] when `pairing` came from the same
    /// anchor positions.
    pub fn evaluate_paired(&self, anchors: &[Point2], pairing: &ChamferPairing) -> ChamferResult {
        let n_active = pairing.active_count().max(1) as f64;
        let n_target = self.points.len() as f64;
        let mut grad = vec![Point2::zeros(); anchors.len()];
        let mut forward = 0.0;
        for (i, u) in anchors.iter().enumerate() {
            if !pairing.active[i] {
                continue;
            }
            let d = u - self.points[pairing.nearest_target[i]];
            forward += d.norm_squared();
            grad[i] += d * (2.0 / n_active);
        }
        let mut backward = 0.0;
        for (v, &i) in self.points.iter().zip(&pairing.nearest_anchor) {
            let d = anchors[i] - v;
            backward += d.norm_squared();
            grad[i] += d * (2.0 / n_target);
        }
        forward /= n_active;
        backward /= n_target;
        ChamferResult {
            loss: forward + backward,
            forward,
            backward,
            grad,
            pairing: pairing.clone(),
        }
    }
}

/// One-shot Chamfer loss over all anchors.
pub fn chamfer_loss(anchors: &[Point2], targets: &[Point2]) -> Result<ChamferResult> {
    ChamferTarget::new(targets.to_vec())?.evaluate(anchors, ChamferMode::Full)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coincident_sets_have_zero_loss_and_gradient() {
        let pts: Vec<Point2> = (0..10).map(|i| Point2::new(i as f64 + 0.5, 3.5)).collect();
        let r = chamfer_loss(&pts, &pts).unwrap();
        assert_eq!(r.loss, 0.0);
        assert!(r.grad.iter().all(|g| g.norm() == 0.0));
    }

    #[test]
    fn single_pair() {
        let r = chamfer_loss(&[Point2::new(5.0, 5.0)], &[Point2::new(5.0, 8.0)]).unwrap();
        assert_eq!(r.loss, 18.0);
        assert_eq!(r.grad[0], Point2::new(0.0, -12.0));
    }

    #[test]
    fn empty_sets_are_errors() {
        assert!(chamfer_loss(&[], &[Point2::zeros()]).is_err());
        assert!(chamfer_loss(&[Point2::zeros()], &[]).is_err());
    }

    #[test]
    fn stroke_matched_ignores_unmatched_anchors() {
        let anchors = [Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)];
        let target = ChamferTarget::new(vec![Point2::new(0.0, 1.0)]).unwrap();
        let full = target.evaluate(&anchors, ChamferMode::Full).unwrap();
        let part = target.evaluate(&anchors, ChamferMode::StrokeMatched).unwrap();
        assert_eq!(full.forward, (1.0 + 101.0) / 2.0);
        assert_eq!(part.forward, 1.0);
        assert_eq!(part.grad[1], Point2::zeros());
    }
}
