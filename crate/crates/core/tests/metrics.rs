mod common;

use contour_refine::metrics::{compare_meshes, evaluation_cameras, MetricConfig};
use contour_refine::{chamfer_3d, normal_consistency, sample_surface, Camera, Mesh, Point3};

#[test]
fn samples_split_by_area() {
    let v = |x: f64, y: f64, z: f64| Point3::new(x, y, z);
    // Areas 4.5 and 0.5, far apart.
    let mesh = Mesh::new(
        vec![v(0.0, 0.0, 0.0), v(3.0, 0.0, 0.0), v(0.0, 3.0, 0.0), v(10.0, 0.0, 0.0), v(11.0, 0.0, 0.0), v(10.0, 1.0, 0.0)],
        vec![[0, 1, 2], [3, 4, 5]],
    )
    .unwrap();
    let n = 10_000;
    let pts = sample_surface(&mesh, n, 17).unwrap();
    let big = pts.iter().filter(|p| p.x < 5.0).count() as f64;
    let sd = (n as f64 * 0.9 * 0.1).sqrt();
    assert!((big - 9000.0).abs() <= 3.0 * sd, "{big} in the large triangle");
    assert_eq!(pts, sample_surface(&mesh, n, 17).unwrap());
}

/// Sum of the two directional mean squared distances between unit spheres
/// with centres `d` apart, by quadrature over the uniform cosine.
fn offset_sphere_oracle(d: f64) -> f64 {
    let m = 100_000;
    let mean = (0..m)
        .map(|i| {
            let u = -1.0 + 2.0 * (i as f64 + 0.5) / m as f64;
            ((1.0 - 2.0 * d * u + d * d).sqrt() - 1.0).powi(2)
        })
        .sum::<f64>()
        / m as f64;
    2.0 * mean
}

#[test]
fn offset_spheres_match_the_analytic_distance() {
    let n = 10_000;
    let a = Mesh::sphere(16, 1.0);
    let floor = chamfer_3d(&a, &a, n, (1, 2)).unwrap();
    // Poisson nearest-neighbour floor, both directions.
    let predicted_floor = 2.0 * a.area() / (std::f64::consts::PI * n as f64);
    assert!((floor - predicted_floor).abs() / predicted_floor < 0.1, "floor {floor}");
    for d in [0.1, 0.2, 0.3] {
        let b = a.translated(Point3::new(d, 0.0, 0.0));
        let cd = chamfer_3d(&a, &b, n, (1, 2)).unwrap();
        let want = offset_sphere_oracle(d) + floor;
        assert!((cd - want).abs() / want < 0.1, "d = {d}: {cd} vs {want}");
    }
}

#[test]
fn identical_seeds_give_zero_and_swapping_is_symmetric() {
    let a = Mesh::sphere(8, 1.0);
    let b = Mesh::subdivided_cube(3).scaled(0.8);
    assert_eq!(chamfer_3d(&a, &a, 2000, (5, 5)).unwrap(), 0.0);
    assert_eq!(chamfer_3d(&a, &b, 2000, (3, 4)).unwrap(), chamfer_3d(&b, &a, 2000, (4, 3)).unwrap());
}

#[test]
fn normal_consistency_of_a_mesh_with_itself_is_exactly_one() {
    let t = common::template(8, 6);
    let m = t.decode(&contour_refine::LatentCode::unit(8, 0)).unwrap();
    let cam = Camera::framing(0.2, 0.3, 96, 96, 1.0).unwrap();
    let row = compare_meshes(0, &m, &m, &cam, &MetricConfig { samples: 1000, seed: 0 });
    assert_eq!(row.nc_e2, Some(100.0));
    assert_eq!(row.cd_l2_e3.map(|v| v > 0.0), Some(true));
    assert_eq!(row.status, "ok");
}

#[test]
fn half_turn_about_the_view_axis_keeps_a_front_face() {
    let cam = Camera::framing(0.6, 0.25, 128, 128, 1.0).unwrap();
    let axis = cam.eye().normalize();
    // Square facing the camera through the origin.
    let u = axis.cross(&Point3::new(0.0, 1.0, 0.0)).normalize();
    let v = axis.cross(&u);
    let quad = Mesh::new(vec![-u - v, u - v, u + v, -u + v], vec![[0, 1, 2], [0, 2, 3]]).unwrap();
    let turned = quad.map_vertices(|p| 2.0 * axis * axis.dot(p) - p);
    let nc = normal_consistency(&quad, &turned, std::slice::from_ref(&cam)).unwrap();
    assert!((nc - 1.0).abs() < 1e-12, "{nc}");
}

#[test]
fn slightly_scaled_sphere_is_consistent() {
    let a = Mesh::sphere(16, 1.0);
    let cam = Camera::framing(0.0, 0.2, 256, 256, 1.1).unwrap();
    let nc = normal_consistency(&a, &a.scaled(1.05), &evaluation_cameras(&cam).unwrap()).unwrap();
    assert!(nc * 100.0 > 99.0, "{nc}");
}

#[test]
fn disjoint_renders_have_no_consistency() {
    let cam = Camera::framing(0.0, 0.0, 64, 64, 3.0).unwrap();
    let a = Mesh::sphere(4, 0.3).translated(Point3::new(0.0, 1.5, 0.0));
    let b = Mesh::sphere(4, 0.3).translated(Point3::new(0.0, -1.5, 0.0));
    assert!(normal_consistency(&a, &b, &[cam]).is_err());
}
