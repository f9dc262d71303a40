//! Forward model `z = M_R F y + ν`, its adjoint, and root-sum-of-squares.

mod fourier;
mod mask;
mod phantom;

pub use fourier::{transform_plane, unitary_dft, Direction};
pub use mask::{default_acs_fraction, SamplingMask};
pub use phantom::generate_phantom;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::field::{ComplexField, Domain, Image};

fn check_mask(x: &ComplexField, mask: &SamplingMask) -> Result<()> {
    if mask.lines() != x.height() {
        return Err(Error::shape(format!(
            "mask has {} lines but field has {} rows",
            mask.lines(),
            x.height()
        )));
    }
    Ok(())
}

/// Zero every non-acquired k-space row in place (`M_R* M_R`).
pub fn apply_mask(k: &mut ComplexField, mask: &SamplingMask) -> Result<()> {
    check_mask(k, mask)?;
    let row_len = k.width() * k.coils();
    for (row, chunk) in k.data_mut().chunks_exact_mut(row_len).enumerate() {
        if !mask.is_acquired(row) {
            chunk.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        }
    }
    Ok(())
}

/// Masked measurement of an image-domain field, zero-filled at full size.
pub fn apply_forward<R: Rng + ?Sized>(
    y: &ComplexField,
    mask: &SamplingMask,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<ComplexField> {
    y.require_domain(Domain::Image)?;
    check_mask(y, mask)?;
    if !(noise_sigma >= 0.0) {
        return Err(Error::invalid("noise_sigma must be nonnegative"));
    }
    let mut k = unitary_dft(y, Direction::Forward)?;
    apply_mask(&mut k, mask)?;
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("valid sigma");
        let row_len = k.width() * k.coils();
        for (row, chunk) in k.data_mut().chunks_exact_mut(row_len).enumerate() {
            if mask.is_acquired(row) {
                for c in chunk {
                    c.re += normal.sample(rng);
                    c.im += normal.sample(rng);
                }
            }
        }
    }
    Ok(k)
}

/// `x₀ = F⁻¹ M_R* z`
pub fn zero_fill_adjoint(z: &ComplexField, mask: &SamplingMask) -> Result<ComplexField> {
    z.require_domain(Domain::Kspace)?;
    let mut masked = z.clone();
    apply_mask(&mut masked, mask)?;
    unitary_dft(&masked, Direction::Inverse)
}

/// Root-sum-of-squares over coils.
pub fn rss(x: &ComplexField) -> Image {
    let q = x.coils();
    let data = x
        .data()
        .chunks_exact(q)
        .map(|px| px.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    Image::from_vec(x.width(), x.height(), data).expect("rss is finite and nonnegative")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, q: usize, rng: &mut ChaCha8Rng) -> ComplexField {
        let data = (0..w * h * q)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        ComplexField::from_vec(w, h, q, Domain::Image, data).unwrap()
    }

    #[test]
    fn full_sampling_noise_free_is_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = random_image(6, 8, 2, &mut rng);
        let z = apply_forward(&y, &SamplingMask::full(8), 0.0, &mut rng).unwrap();
        let k = unitary_dft(&y, Direction::Forward).unwrap();
        assert_eq!(z, k);
        let back = zero_fill_adjoint(&z, &SamplingMask::full(8)).unwrap();
        assert!(back.max_abs_diff(&y) < 1e-10);
    }

    #[test]
    fn non_acquired_rows_are_zero_even_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = random_image(8, 16, 1, &mut rng);
        let mask = SamplingMask::generate(16, 4, 0.125, &mut rng).unwrap();
        for sigma in [0.0, 0.1] {
            let z = apply_forward(&y, &mask, sigma, &mut rng).unwrap();
            for r in 0..16 {
                if !mask.is_acquired(r) {
                    assert!((0..8).all(|c| z.get(r, c, 0) == Complex64::new(0.0, 0.0)));
                }
            }
        }
    }

    #[test]
    fn masking_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = random_image(8, 8, 2, &mut rng);
        let mask = SamplingMask::generate(8, 2, 0.25, &mut rng).unwrap();
        let mut once = unitary_dft(&y, Direction::Forward).unwrap();
        apply_mask(&mut once, &mask).unwrap();
        let mut twice = once.clone();
        apply_mask(&mut twice, &mask).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn zero_fill_energy_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let y = random_image(8, 16, 2, &mut rng);
            let mask = SamplingMask::generate(16, 4, 0.125, &mut rng).unwrap();
            let z = apply_forward(&y, &mask, 0.0, &mut rng).unwrap();
            let x0 = zero_fill_adjoint(&z, &mask).unwrap();
            assert!(x0.norm() <= y.norm() + 1e-12);
        }
        let mask = SamplingMask::full(4);
        let z = ComplexField::zeros(4, 4, 1, Domain::Kspace);
        assert_eq!(zero_fill_adjoint(&z, &mask).unwrap().norm(), 0.0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = random_image(8, 8, 1, &mut rng);
        let mask = SamplingMask::full(16);
        assert!(apply_forward(&y, &mask, 0.0, &mut rng).is_err());
        let k = unitary_dft(&y, Direction::Forward).unwrap();
        assert!(zero_fill_adjoint(&k, &mask).is_err());
        assert!(zero_fill_adjoint(&y, &SamplingMask::full(8)).is_err());
    }

    #[test]
    fn rss_examples() {
        let x = ComplexField::from_vec(
            1,
            1,
            2,
            Domain::Image,
            vec![Complex64::new(3.0, 0.0), Complex64::new(0.0, 4.0)],
        )
        .unwrap();
        assert_eq!(rss(&x).data(), &[5.0]);
        let x = ComplexField::from_vec(1, 1, 1, Domain::Image, vec![Complex64::new(1.0, -2.0)])
            .unwrap();
        assert!((rss(&x).data()[0] - 5f64.sqrt()).abs() < 1e-15);
        let z = ComplexField::zeros(3, 3, 4, Domain::Image);
        assert!(rss(&z).data().iter().all(|&v| v == 0.0));
    }
}
