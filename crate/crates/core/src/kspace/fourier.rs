//! Channel-wise unitary 2D DFT.
//!
//! k-space is stored centered: the DC coefficient of an `h × w` plane sits
//! at `(h / 2, w / 2)`. The forward map is `shift ∘ DFT / √n` and the
//! inverse `IDFT ∘ shift⁻¹ / √n`, so `F* = F⁻¹` holds exactly.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::Result;
use crate::field::{ComplexField, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unitary DFT of every coil plane. Forward requires image-domain input and
/// inverse requires k-space input; the domain tag of the result is flipped.
pub fn unitary_dft(x: &ComplexField, direction: Direction) -> Result<ComplexField> {
    let expected = match direction {
        Direction::Forward => Domain::Image,
        Direction::Inverse => Domain::Kspace,
    };
    x.require_domain(expected)?;
    let mut out = x.clone().with_domain(expected.flipped());
    transform_in_place(&mut out, direction);
    Ok(out)
}

pub(crate) fn transform_in_place(x: &mut ComplexField, direction: Direction) {
    let (h, w) = (x.height(), x.width());
    let mut plane = vec![Complex64::new(0.0, 0.0); h * w];
    for q in 0..x.coils() {
        for (dst, src) in plane.iter_mut().zip(x.data().iter().skip(q).step_by(x.coils())) {
            *dst = *src;
        }
        transform_plane(&mut plane, h, w, direction);
        x.set_coil_plane(q, &plane);
    }
}

/// Transform one dense row-major `h × w` plane in place.
pub fn transform_plane(plane: &mut [Complex64], h: usize, w: usize, direction: Direction) {
    debug_assert_eq!(plane.len(), h * w);
    if direction == Direction::Inverse {
        let shifted = unshift(plane, h, w);
        plane.copy_from_slice(&shifted);
    }
    PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        let (row_fft, col_fft) = match direction {
            Direction::Forward => (planner.plan_fft_forward(w), planner.plan_fft_forward(h)),
            Direction::Inverse => (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h)),
        };
        row_fft.process(plane);
        let mut t = transpose(plane, h, w);
        col_fft.process(&mut t);
        let back = transpose(&t, w, h);
        plane.copy_from_slice(&back);
    });
    let scale = 1.0 / ((h * w) as f64).sqrt();
    for v in plane.iter_mut() {
        *v *= scale;
    }
    if direction == Direction::Forward {
        let shifted = shift(plane, h, w);
        plane.copy_from_slice(&shifted);
    }
}

fn transpose(a: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut t = vec![Complex64::new(0.0, 0.0); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = a[r * cols + c];
        }
    }
    t
}

/// Move index 0 to `n / 2` along both axes.
fn shift(a: &[Complex64], h: usize, w: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); h * w];
    for r in 0..h {
        let rr = (r + h / 2) % h;
        for c in 0..w {
            out[rr * w + (c + w / 2) % w] = a[r * w + c];
        }
    }
    out
}

fn unshift(a: &[Complex64], h: usize, w: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); h * w];
    for r in 0..h {
        let rr = (r + h / 2) % h;
        for c in 0..w {
            out[r * w + c] = a[rr * w + (c + w / 2) % w];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Domain;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(w: usize, h: usize, q: usize, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h * q)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        ComplexField::from_vec(w, h, q, Domain::Image, data).unwrap()
    }

    #[test]
    fn constant_image_concentrates_in_dc() {
        let c = 0.75;
        let x = ComplexField::from_vec(4, 4, 1, Domain::Image, vec![Complex64::new(c, 0.0); 16])
            .unwrap();
        let k = unitary_dft(&x, Direction::Forward).unwrap();
        assert_eq!(k.domain(), Domain::Kspace);
        for r in 0..4 {
            for col in 0..4 {
                let expected = if (r, col) == (2, 2) { 4.0 * c } else { 0.0 };
                assert!((k.get(r, col, 0) - Complex64::new(expected, 0.0)).norm() < 1e-12);
            }
        }
        let back = unitary_dft(&k, Direction::Inverse).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn single_point_is_identity() {
        let x = ComplexField::from_vec(1, 1, 1, Domain::Image, vec![Complex64::new(2.0, 0.0)])
            .unwrap();
        let k = unitary_dft(&x, Direction::Forward).unwrap();
        assert!((k.get(0, 0, 0) - Complex64::new(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn norm_preserved_and_round_trip() {
        for (w, h, q) in [(8, 8, 2), (5, 7, 1), (16, 6, 3)] {
            let x = random_field(w, h, q, (w * h * q) as u64);
            let k = unitary_dft(&x, Direction::Forward).unwrap();
            assert!((k.norm() - x.norm()).abs() < 1e-10);
            let back = unitary_dft(&k, Direction::Inverse).unwrap();
            assert!(back.max_abs_diff(&x) < 1e-10);
        }
    }

    #[test]
    fn domain_mismatch_rejected() {
        let x = random_field(4, 4, 1, 1);
        assert!(unitary_dft(&x, Direction::Inverse).is_err());
        let k = unitary_dft(&x, Direction::Forward).unwrap();
        assert!(unitary_dft(&k, Direction::Forward).is_err());
    }
}
