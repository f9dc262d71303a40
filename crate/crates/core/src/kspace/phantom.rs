//! Synthetic piecewise-smooth "anatomy" used in place of scanner data.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::field::{ComplexField, Domain};

struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    angle: f64,
    intensity: f64,
    ramp: (f64, f64),
    texture: Option<(f64, f64, f64)>,
}

impl Ellipse {
    fn random<R: Rng + ?Sized>(rng: &mut R, scale: f64, textured: bool) -> Self {
        let texture = textured.then(|| {
            (
                rng.random_range(0.18..0.32),
                rng.random_range(0.0..PI),
                rng.random_range(0.25..0.45),
            )
        });
        Ellipse {
            cx: rng.random_range(-0.45..0.45) * scale,
            cy: rng.random_range(-0.45..0.45) * scale,
            a: rng.random_range(0.12..0.35) * scale,
            b: rng.random_range(0.12..0.35) * scale,
            angle: rng.random_range(0.0..PI),
            intensity: rng.random_range(0.2..0.9),
            ramp: (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)),
            texture,
        }
    }

    fn contains(&self, u: f64, v: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let du = u - self.cx;
        let dv = v - self.cy;
        let p = (c * du + s * dv) / self.a;
        let q = (-s * du + c * dv) / self.b;
        p * p + q * q <= 1.0
    }

    /// Value at normalized coordinate `(u, v)`; `(col, row)` drive the texture
    /// so its frequency is in cycles per pixel.
    fn value(&self, u: f64, v: f64, col: f64, row: f64) -> f64 {
        let mut val = self.intensity * (1.0 + self.ramp.0 * (u - self.cx) + self.ramp.1 * (v - self.cy));
        if let Some((freq, dir, depth)) = self.texture {
            let phase = 2.0 * PI * freq * (col * dir.cos() + row * dir.sin());
            val *= 1.0 + depth * phase.sin();
        }
        val
    }
}

/// Random phantom of size `width × height` with `coils` smooth complex
/// sensitivity maps, scaled so the root-sum-of-squares image peaks at 1.
pub fn generate_phantom<R: Rng + ?Sized>(
    width: usize,
    height: usize,
    coils: usize,
    rng: &mut R,
) -> Result<ComplexField> {
    if width < 16 || height < 16 {
        return Err(Error::invalid("phantom dimensions must be at least 16"));
    }
    if coils == 0 {
        return Err(Error::invalid("need at least one coil"));
    }
    // Body outline plus inner structures, a couple of them textured.
    let body = Ellipse {
        cx: rng.random_range(-0.05..0.05),
        cy: rng.random_range(-0.05..0.05),
        a: rng.random_range(0.7..0.85),
        b: rng.random_range(0.7..0.85),
        angle: rng.random_range(0.0..PI),
        intensity: rng.random_range(0.3..0.5),
        ramp: (rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)),
        texture: None,
    };
    let n_inner = rng.random_range(3..6);
    let inner: Vec<Ellipse> = (0..n_inner)
        .map(|i| Ellipse::random(rng, 1.0, i < 2))
        .collect();

    let phase_coef = [
        rng.random_range(-0.6..0.6),
        rng.random_range(-0.6..0.6),
        rng.random_range(-0.4..0.4),
    ];
    let coil_centers: Vec<(f64, f64, f64)> = (0..coils)
        .map(|q| {
            let ang = 2.0 * PI * q as f64 / coils as f64 + rng.random_range(-0.2..0.2);
            (1.1 * ang.cos(), 1.1 * ang.sin(), rng.random_range(-PI..PI))
        })
        .collect();

    let mut field = ComplexField::zeros(width, height, coils, Domain::Image);
    for row in 0..height {
        let v = 2.0 * (row as f64 + 0.5) / height as f64 - 1.0;
        for col in 0..width {
            let u = 2.0 * (col as f64 + 0.5) / width as f64 - 1.0;
            let mut m = 0.0;
            if body.contains(u, v) {
                m = body.value(u, v, col as f64, row as f64);
                for e in &inner {
                    if e.contains(u, v) {
                        m = e.value(u, v, col as f64, row as f64);
                    }
                }
            }
            let m = m.max(0.0);
            let phase = phase_coef[0] * u + phase_coef[1] * v + phase_coef[2] * u * v;
            let base = Complex64::from_polar(m, phase);
            for (q, &(px, py, coil_phase)) in coil_centers.iter().enumerate() {
                let sens = if coils == 1 {
                    Complex64::new(1.0, 0.0)
                } else {
                    let d2 = (u - px).powi(2) + (v - py).powi(2);
                    let mag = 0.5 + 0.5 * (-d2 / 2.0).exp();
                    Complex64::from_polar(mag, coil_phase + 0.3 * (u * px + v * py))
                };
                field.set(row, col, q, base * sens);
            }
        }
    }
    let peak = super::rss(&field).max();
    if peak <= 0.0 {
        return Err(Error::Numerical("empty phantom".into()));
    }
    field.scale(1.0 / peak);
    Ok(field)
}
