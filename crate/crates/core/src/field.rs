//! Multi-coil complex arrays and real magnitude images.
//!
//! A [`ComplexField`] stores `height × width × coils` complex samples in
//! row-major `(row, col, coil)` order and carries a tag saying whether it
//! lives in image space or in k-space. The real inner product used
//! throughout the crate is `Re ⟨a, b⟩ = Σ Re(conj(a) b)`, i.e. the
//! Euclidean inner product of the identification `ℂ ≅ ℝ²`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Image,
    Kspace,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Image => "image",
            Domain::Kspace => "kspace",
        }
    }

    pub fn flipped(self) -> Domain {
        match self {
            Domain::Image => Domain::Kspace,
            Domain::Kspace => Domain::Image,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    width: usize,
    height: usize,
    coils: usize,
    domain: Domain,
    data: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(width: usize, height: usize, coils: usize, domain: Domain) -> Self {
        assert!(width > 0 && height > 0 && coils > 0, "empty field");
        ComplexField {
            width,
            height,
            coils,
            domain,
            data: vec![Complex64::new(0.0, 0.0); width * height * coils],
        }
    }

    pub fn from_vec(
        width: usize,
        height: usize,
        coils: usize,
        domain: Domain,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || coils == 0 {
            return Err(Error::shape("field dimensions must be positive"));
        }
        if data.len() != width * height * coils {
            return Err(Error::shape(format!(
                "expected {} samples for {}x{}x{}, got {}",
                width * height * coils,
                width,
                height,
                coils,
                data.len()
            )));
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Numerical("field contains non-finite values".into()));
        }
        Ok(ComplexField {
            width,
            height,
            coils,
            domain,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn coils(&self) -> usize {
        self.coils
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, coil: usize) -> usize {
        (row * self.width + col) * self.coils + coil
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, coil: usize) -> Complex64 {
        self.data[self.index(row, col, coil)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, coil: usize, value: Complex64) {
        let i = self.index(row, col, coil);
        self.data[i] = value;
    }

    pub(crate) fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn same_shape(&self, other: &ComplexField) -> bool {
        self.width == other.width && self.height == other.height && self.coils == other.coils
    }

    pub fn check_same_shape(&self, other: &ComplexField) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.coils, other.width, other.height, other.coils
            )))
        }
    }

    pub fn require_domain(&self, domain: Domain) -> Result<()> {
        if self.domain == domain {
            Ok(())
        } else {
            Err(Error::Domain {
                expected: domain.as_str(),
                found: self.domain.as_str(),
            })
        }
    }

    /// Euclidean norm over the real representation.
    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Real inner product `Σ Re(conj(a) b)`.
    pub fn dot(&self, other: &ComplexField) -> f64 {
        debug_assert!(self.same_shape(other));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    pub fn max_abs_diff(&self, other: &ComplexField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn scale(&mut self, factor: f64) {
        for c in &mut self.data {
            *c *= factor;
        }
    }

    pub fn scaled(&self, factor: f64) -> ComplexField {
        let mut out = self.clone();
        out.scale(factor);
        out
    }

    /// `self += factor * other`
    pub fn axpy(&mut self, factor: f64, other: &ComplexField) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * factor;
        }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> ComplexField {
        ComplexField {
            data: self.data.iter().map(|&c| f(c)).collect(),
            ..self.clone()
        }
    }

    /// Flatten to the real representation `[re₀, im₀, re₁, im₁, …]`.
    pub fn to_real_vec(&self) -> Vec<f64> {
        self.data.iter().flat_map(|c| [c.re, c.im]).collect()
    }

    pub fn from_real_slice(like: &ComplexField, values: &[f64]) -> Result<ComplexField> {
        if values.len() != 2 * like.len() {
            return Err(Error::shape("real vector length does not match field"));
        }
        let data = values
            .chunks_exact(2)
            .map(|p| Complex64::new(p[0], p[1]))
            .collect();
        ComplexField::from_vec(like.width, like.height, like.coils, like.domain, data)
    }

    /// Extract one coil as a dense `height × width` plane.
    pub fn coil_plane(&self, coil: usize) -> Vec<Complex64> {
        self.data
            .iter()
            .skip(coil)
            .step_by(self.coils)
            .copied()
            .collect()
    }

    pub fn set_coil_plane(&mut self, coil: usize, plane: &[Complex64]) {
        debug_assert_eq!(plane.len(), self.pixels());
        for (dst, src) in self.data.iter_mut().skip(coil).step_by(self.coils).zip(plane) {
            *dst = *src;
        }
    }

    /// Crop columns `[col0, col0 + width)`, keeping every row.
    pub fn crop_columns(&self, col0: usize, width: usize) -> Result<ComplexField> {
        if width == 0 || col0 + width > self.width {
            return Err(Error::shape(format!(
                "column crop [{col0}, {}) exceeds width {}",
                col0 + width,
                self.width
            )));
        }
        let mut out = ComplexField::zeros(width, self.height, self.coils, self.domain);
        for r in 0..self.height {
            for c in 0..width {
                for q in 0..self.coils {
                    out.set(r, c, q, self.get(r, col0 + c, q));
                }
            }
        }
        Ok(out)
    }
}

/// Nonnegative real image (magnitude or root-sum-of-squares).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::shape(format!(
                "expected {} pixels for {}x{}, got {}",
                width * height,
                width,
                height,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Numerical(
                "image entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    /// Real-valued map without the nonnegativity requirement (e.g. log-scale
    /// k-space statistics).
    pub fn from_vec_signed(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::shape("pixel count does not match dimensions"));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub fn scaled(&self, factor: f64) -> Image {
        Image {
            data: self.data.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}
