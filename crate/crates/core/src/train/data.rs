//! Training samples: random patches of ground-truth images, re-measured with
//! a freshly drawn mask and noise.

use rand::Rng;

use crate::error::{Error, Result};
use crate::field::{ComplexField, Domain, Image};
use crate::kspace::{apply_forward, rss, SamplingMask};

use super::config::TrainConfig;

#[derive(Debug, Clone)]
pub struct Sample {
    pub truth: ComplexField,
    pub target: Image,
    pub z: ComplexField,
    pub mask: SamplingMask,
}

/// Measure `truth` with a new mask of acceleration `r` and noise.
pub fn measure<R: Rng + ?Sized>(
    truth: ComplexField,
    acceleration: usize,
    acs_fraction: f64,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<Sample> {
    let mask = SamplingMask::generate(truth.height(), acceleration, acs_fraction, rng)?;
    let z = apply_forward(&truth, &mask, noise_sigma, rng)?;
    Ok(Sample {
        target: rss(&truth),
        truth,
        z,
        mask,
    })
}

/// Rectangle `[row0, row0 + height) × [col0, col0 + width)`.
pub fn extract_patch(y: &ComplexField, row0: usize, col0: usize, height: usize, width: usize) -> Result<ComplexField> {
    if height == 0 || row0 + height > y.height() {
        return Err(Error::shape(format!(
            "row crop [{row0}, {}) exceeds height {}",
            row0 + height,
            y.height()
        )));
    }
    let cols = y.crop_columns(col0, width)?;
    let q = y.coils();
    let row_len = width * q;
    let data = cols.data()[row0 * row_len..(row0 + height) * row_len].to_vec();
    ComplexField::from_vec(width, height, q, Domain::Image, data)
}

/// Draw an image index, a patch position and a measurement, in that order.
pub fn sample_patch<R: Rng + ?Sized>(images: &[ComplexField], cfg: &TrainConfig, rng: &mut R) -> Result<Sample> {
    if images.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let y = &images[rng.random_range(0..images.len())];
    let (ph, pw) = (cfg.patch_height.min(y.height()), cfg.patch_width.min(y.width()));
    let row0 = rng.random_range(0..=y.height() - ph);
    let col0 = rng.random_range(0..=y.width() - pw);
    let patch = extract_patch(y, row0, col0, ph, pw)?;
    measure(patch, cfg.acceleration, cfg.acs(), cfg.noise_sigma, rng)
}

pub fn sample_batch<R: Rng + ?Sized>(images: &[ComplexField], cfg: &TrainConfig, rng: &mut R) -> Result<Vec<Sample>> {
    (0..cfg.batch_size).map(|_| sample_patch(images, cfg, rng)).collect()
}
