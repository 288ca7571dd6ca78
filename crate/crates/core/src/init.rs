//! Multi-start initialization of the latent code from a sketch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image::BinaryImage;
use crate::refine::Objective;
use crate::shape::{LatentCode, TemplateMesh};

/// Scored candidates of one initialization run.
#[derive(Clone, Debug, PartialEq)]
pub struct Initialization {
    pub code: LatentCode,
    pub index: usize,
    /// Contour Chamfer loss per candidate; `inf` where the candidate could
    /// not be scored (contour touching the border, nothing in view).
    pub losses: Vec<f64>,
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut c = 2u64;
    while primes.len() < n {
        if primes.iter().take_while(|&&p| p * p <= c).all(|&p| !c.is_multiple_of(p)) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * scale;
        i /= base;
        scale *= inv;
    }
    r
}

/// The zero code followed by `n - 1` scrambled Halton points pushed through
/// the per-mode normal prior `N(0, sigma_k^2)` and clamped to the box.
pub fn candidate_codes(template: &TemplateMesh, n: usize, seed: u64) -> Vec<LatentCode> {
    let k = template.k();
    let bounds = template.bounds();
    let sigma = template.sigma();
    let unit = Normal::standard();
    let primes = first_primes(k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    let mut out = Vec::with_capacity(n);
    if n > 0 {
        out.push(LatentCode::zeros(k));
    }
    for i in 1..n as u64 {
        let theta = (0..k)
            .map(|d| {
                let u = (radical_inverse(i, primes[d]) + shift[d]).fract();
                (sigma[d] * unit.inverse_cdf(u)).clamp(-bounds[d], bounds[d])
            })
            .collect();
        out.push(LatentCode(theta));
    }
    out
}

/// Candidate with the lowest contour Chamfer loss against the filtered
/// sketch; the lowest index wins ties.
pub fn initialize_code(
    sketch: &BinaryImage,
    camera: &Camera,
    template: &TemplateMesh,
    n_starts: usize,
    seed: u64,
) -> Result<LatentCode> {
    Ok(initialize_scored(sketch, camera, template, n_starts, seed)?.code)
}

pub fn initialize_scored(
    sketch: &BinaryImage,
    camera: &Camera,
    template: &TemplateMesh,
    n_starts: usize,
    seed: u64,
) -> Result<Initialization> {
    if n_starts == 0 {
        return Err(Error::InvalidConfig("n_starts must be at least 1".into()));
    }
    if sketch.stroke_count() == 0 {
        return Err(Error::EmptySketch);
    }
    let objective = Objective::chamfer_from_sketch(sketch)?;
    let candidates = candidate_codes(template, n_starts, seed);
    let mut losses = Vec::with_capacity(candidates.len());
    let mut first_error = None;
    for code in &candidates {
        match objective.evaluate(template, camera, code) {
            Ok(e) => losses.push(e.terms.total),
            Err(e @ (Error::ImageSize(_) | Error::DimensionMismatch { .. })) => return Err(e),
            Err(e) => {
                first_error.get_or_insert(e);
                losses.push(f64::INFINITY);
            }
        }
    }
    let mut index = 0;
    for (i, &l) in losses.iter().enumerate() {
        if l < losses[index] {
            index = i;
        }
    }
    if !losses[index].is_finite() {
        return Err(first_error.expect("an unscored candidate recorded its error"));
    }
    Ok(Initialization {
        code: candidates[index].clone(),
        index,
        losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base_two() {
        let v: Vec<f64> = (1..5).map(|i| radical_inverse(i, 2)).collect();
        assert_eq!(v, vec![0.5, 0.25, 0.75, 0.125]);
        assert_eq!(first_primes(6), vec![2, 3, 5, 7, 11, 13]);
    }

    #[test]
    fn candidates_start_at_zero_and_stay_in_the_box() {
        let t = TemplateMesh::builtin_with(crate::shape::BuiltinSpec {
            k: 6,
            ..Default::default()
        });
        let c = candidate_codes(&t, 20, 3);
        assert_eq!(c.len(), 20);
        assert_eq!(c[0], LatentCode::zeros(6));
        for code in &c {
            assert!(t.check_code(code).is_ok());
            for (th, b) in code.0.iter().zip(t.bounds()) {
                assert!(th.abs() <= b);
            }
        }
        assert_eq!(c, candidate_codes(&t, 20, 3));
        assert_ne!(c, candidate_codes(&t, 20, 4));
    }
}
