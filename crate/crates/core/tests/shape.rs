mod common;

use contour_refine::shape::procedural_library;
use contour_refine::{fit_basis, LatentCode, Mesh, TemplateMesh};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_template() -> TemplateMesh {
    common::template(8, 3)
}

/// Squared residual of `x - base` after projection onto the columns of `q`.
fn residual(x: &[f64], base: &[f64], q: &[Vec<f64>]) -> f64 {
    let mut r: Vec<f64> = x.iter().zip(base).map(|(a, b)| a - b).collect();
    for col in q {
        let c: f64 = r.iter().zip(col).map(|(a, b)| a * b).sum();
        for (ri, qi) in r.iter_mut().zip(col) {
            *ri -= c * qi;
        }
    }
    r.iter().map(|v| v * v).sum()
}

fn gram_schmidt(mut cols: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    for i in 0..cols.len() {
        for j in 0..i {
            let c: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
            let prev = cols[j].clone();
            for (a, b) in cols[i].iter_mut().zip(&prev) {
                *a -= c * b;
            }
        }
        let n = cols[i].iter().map(|v| v * v).sum::<f64>().sqrt();
        cols[i].iter_mut().for_each(|v| *v /= n);
    }
    cols
}

#[test]
fn basis_is_orthonormal() {
    let t = TemplateMesh::builtin();
    for i in 0..t.k() {
        for j in 0..t.k() {
            let d: f64 = t.column(i).iter().zip(t.column(j)).map(|(a, b)| a * b).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((d - want).abs() < 1e-10, "B^T B [{i},{j}] = {d}");
        }
    }
}

#[test]
fn fitted_basis_beats_random_bases() {
    let library = procedural_library(4, 30, 11);
    let k = 5;
    let t = fit_basis(&library, k).unwrap();
    let base = t.base().flat_coords();
    let fitted: Vec<Vec<f64>> = (0..k).map(|i| t.column(i).to_vec()).collect();
    let total = |q: &[Vec<f64>]| library.iter().map(|m| residual(&m.flat_coords(), &base, q)).sum::<f64>();
    let best = total(&fitted);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        // Random bases near the fitted one as well as fully random ones.
        let mix = rng.random_range(0.0..1.0);
        let cols = (0..k)
            .map(|i| {
                fitted[i]
                    .iter()
                    .map(|&v| (1.0 - mix) * v + mix * rng.random_range(-1.0..1.0) / (base.len() as f64).sqrt())
                    .collect()
            })
            .collect();
        let other = total(&gram_schmidt(cols));
        assert!(best <= other * (1.0 + 1e-9), "fitted {best} vs random {other}");
    }
}

#[test]
fn encode_inverts_decode_inside_the_span() {
    let t = small_template();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let code = common::random_code(&t, 2.0, &mut rng);
    let back = t.encode(&t.decode(&code).unwrap()).unwrap();
    assert!(back.max_abs_diff(&code) < 1e-9);
}

#[test]
fn wrong_code_length_is_rejected() {
    let t = small_template();
    assert!(t.decode(&LatentCode::zeros(t.k() + 1)).is_err());
}

#[test]
fn code_and_template_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let t = small_template();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let code = common::random_code(&t, 1.0, &mut rng);
    code.save(dir.path().join("code.bin")).unwrap();
    assert_eq!(LatentCode::load(dir.path().join("code.bin")).unwrap(), code);

    t.save_dir(dir.path().join("template")).unwrap();
    let u = TemplateMesh::load_dir(dir.path().join("template")).unwrap();
    assert_eq!(u.decode(&code).unwrap(), t.decode(&code).unwrap());
    assert_eq!(u.sigma(), t.sigma());
}

#[test]
fn connectivity_mismatch_is_an_error() {
    let a = Mesh::subdivided_cube(2);
    let b = Mesh::subdivided_cube(3);
    assert!(fit_basis(&[a.clone(), a, b], 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn decode_is_affine(a in prop::collection::vec(-2.0f64..2.0, 8), b in prop::collection::vec(-2.0f64..2.0, 8)) {
        let t = small_template();
        let sum = LatentCode(a.iter().zip(&b).map(|(x, y)| x + y).collect());
        let d = |c: &LatentCode| t.decode(c).unwrap().vertices;
        let (ab, ma, mb, m0) = (d(&sum), d(&LatentCode(a)), d(&LatentCode(b)), d(&LatentCode::zeros(8)));
        for i in 0..ab.len() {
            let r = ab[i] - ma[i] - mb[i] + m0[i];
            prop_assert!(r.norm() < 1e-12, "vertex {} off by {}", i, r.norm());
        }
    }

    #[test]
    fn clamp_keeps_codes_in_the_box(raw in prop::collection::vec(-100.0f64..100.0, 8)) {
        let t = small_template();
        let mut code = LatentCode(raw);
        t.clamp(&mut code);
        for (v, b) in code.0.iter().zip(t.bounds()) {
            prop_assert!(v.abs() <= b + 1e-15);
        }
    }
}
