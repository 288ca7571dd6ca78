mod common;

use contour_refine::camera::Point2;
use contour_refine::{chamfer_loss, external_contour_of_mask, rasterize, Camera, LatentCode, Mesh, Objective, Point3};

#[test]
fn single_pair_loss_and_gradient() {
    let r = chamfer_loss(&[Point2::new(5.0, 5.0)], &[Point2::new(5.0, 8.0)]).unwrap();
    assert_eq!(r.loss, 18.0);
    assert_eq!((r.forward, r.backward), (9.0, 9.0));
    assert_eq!(r.grad, vec![Point2::new(0.0, -12.0)]);
}

#[test]
fn gradient_points_along_the_translation_to_the_target() {
    let base = Mesh::sphere(6, 0.7);
    let (t, scale) = common::single_mode(&base, |_| Point3::new(1.0, 0.0, 0.0));
    let cam = Camera::framing(0.5, 0.3, 96, 96, 1.0).unwrap();
    let at = |shift: f64| LatentCode(vec![shift * scale]);
    let target = external_contour_of_mask(&rasterize(&t.decode(&at(0.15)).unwrap(), &cam).mask).unwrap();
    let objective = Objective::chamfer(&target).unwrap();

    let behind = objective.evaluate(&t, &cam, &at(0.0)).unwrap();
    let past = objective.evaluate(&t, &cam, &at(0.3)).unwrap();
    assert!(behind.grad[0] < 0.0, "{}", behind.grad[0]);
    assert!(past.grad[0] > 0.0, "{}", past.grad[0]);
    assert!(behind.terms.chamfer > 0.0);
}

#[test]
fn own_contour_is_a_stationary_point() {
    let t = common::template(8, 5);
    let code = LatentCode::unit(8, 1);
    let cam = Camera::framing(1.0, 0.1, 96, 96, 1.0).unwrap();
    let contour = external_contour_of_mask(&rasterize(&t.decode(&code).unwrap(), &cam).mask).unwrap();
    let e = Objective::chamfer(&contour).unwrap().evaluate(&t, &cam, &code).unwrap();
    assert!(e.terms.chamfer < 1e-18, "{}", e.terms.chamfer);
    assert!(e.grad.iter().all(|g| g.abs() < 1e-9), "{:?}", e.grad);
}

#[test]
fn empty_target_is_rejected() {
    let blank = contour_refine::BinaryImage::blank(16, 16);
    assert!(Objective::chamfer(&blank).is_err());
    assert!(chamfer_loss(&[], &[Point2::zeros()]).is_err());
}
