//! Image quality metrics on magnitude images.
//!
//! SSIM uses a uniform 7×7 window over valid positions, `k1 = 0.01`,
//! `k2 = 0.03`, sample (co)variances with the `n/(n−1)` correction, and a
//! data range taken from the reference maximum.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::field::Image;

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// `‖x − y‖² / ‖y‖²`
pub fn nmse(x: &Image, y: &Image) -> Result<f64> {
    x.check_same_shape(y)?;
    let den: f64 = y.data().iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::invalid("NMSE reference is identically zero"));
    }
    let num: f64 = x.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(num / den)
}

/// Peak signal-to-noise ratio; identical images give [`Psnr::Exact`].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum Psnr {
    Finite(f64),
    Exact,
}

impl Psnr {
    /// `+∞` for [`Psnr::Exact`].
    pub fn value(self) -> f64 {
        match self {
            Psnr::Finite(v) => v,
            Psnr::Exact => f64::INFINITY,
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v}"),
            Psnr::Exact => f.write_str("inf"),
        }
    }
}

impl Serialize for Psnr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Psnr::Finite(v) => s.serialize_f64(*v),
            Psnr::Exact => s.serialize_str("inf"),
        }
    }
}

/// `10 log₁₀(max(y)² / mse(x, y))`
pub fn psnr(x: &Image, y: &Image) -> Result<Psnr> {
    x.check_same_shape(y)?;
    let mse = x.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64;
    if mse == 0.0 {
        return Ok(Psnr::Exact);
    }
    let peak = y.max();
    Ok(Psnr::Finite(10.0 * (peak * peak / mse).log10()))
}

/// Column-major 2-D prefix sums with a zero border.
struct Integral {
    w1: usize,
    s: Vec<f64>,
}

impl Integral {
    fn new(h: usize, w: usize, v: impl Fn(usize) -> f64) -> Self {
        let w1 = w + 1;
        let mut s = vec![0.0; (h + 1) * w1];
        for r in 0..h {
            let mut row = 0.0;
            for c in 0..w {
                row += v(r * w + c);
                s[(r + 1) * w1 + c + 1] = s[r * w1 + c + 1] + row;
            }
        }
        Integral { w1, s }
    }

    fn window(&self, r: usize, c: usize, n: usize) -> f64 {
        let w1 = self.w1;
        self.s[(r + n) * w1 + c + n] - self.s[r * w1 + c + n] - self.s[(r + n) * w1 + c] + self.s[r * w1 + c]
    }
}

struct SsimParts {
    value: f64,
    grad: Option<Vec<f64>>,
}

fn ssim_impl(x: &Image, y: &Image, data_range: f64, want_grad: bool) -> Result<SsimParts> {
    x.check_same_shape(y)?;
    let (h, w) = (x.height(), x.width());
    let n = SSIM_WINDOW;
    if h < n || w < n {
        return Err(Error::shape(format!("SSIM needs at least {n}x{n}, got {w}x{h}")));
    }
    if !(data_range > 0.0) {
        return Err(Error::invalid("SSIM data range must be positive"));
    }
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let np = (n * n) as f64;
    let cov = np / (np - 1.0);
    let (xd, yd) = (x.data(), y.data());
    let sx = Integral::new(h, w, |i| xd[i]);
    let sy = Integral::new(h, w, |i| yd[i]);
    let sxx = Integral::new(h, w, |i| xd[i] * xd[i]);
    let syy = Integral::new(h, w, |i| yd[i] * yd[i]);
    let sxy = Integral::new(h, w, |i| xd[i] * yd[i]);
    let (vh, vw) = (h - n + 1, w - n + 1);
    let count = (vh * vw) as f64;
    let mut total = 0.0;
    // Per-window partials w.r.t. (μx, E[x²], E[xy]).
    let mut da = if want_grad { vec![0.0; vh * vw] } else { Vec::new() };
    let mut db = da.clone();
    let mut dc = da.clone();
    for r in 0..vh {
        for c in 0..vw {
            let mx = sx.window(r, c, n) / np;
            let my = sy.window(r, c, n) / np;
            let exx = sxx.window(r, c, n) / np;
            let eyy = syy.window(r, c, n) / np;
            let exy = sxy.window(r, c, n) / np;
            let vx = cov * (exx - mx * mx);
            let vy = cov * (eyy - my * my);
            let vxy = cov * (exy - mx * my);
            let a1 = 2.0 * mx * my + c1;
            let a2 = 2.0 * vxy + c2;
            let b1 = mx * mx + my * my + c1;
            let b2 = vx + vy + c2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            if want_grad {
                let i = r * vw + c;
                da[i] = s * (2.0 * my / a1 - 2.0 * mx / b1 - 2.0 * cov * my / a2 + 2.0 * cov * mx / b2);
                db[i] = -s * cov / b2;
                dc[i] = s * 2.0 * cov / a2;
            }
        }
    }
    let grad = want_grad.then(|| {
        // Scatter the window partials back onto the pixels they cover.
        let ia = Integral::new(vh, vw, |i| da[i]);
        let ib = Integral::new(vh, vw, |i| db[i]);
        let ic = Integral::new(vh, vw, |i| dc[i]);
        let scale = 1.0 / (count * np);
        let mut g = vec![0.0; h * w];
        for r in 0..h {
            let r0 = r.saturating_sub(n - 1);
            let r1 = r.min(vh - 1);
            for c in 0..w {
                let c0 = c.saturating_sub(n - 1);
                let c1 = c.min(vw - 1);
                let rect = |s: &Integral| {
                    let w1 = s.w1;
                    s.s[(r1 + 1) * w1 + c1 + 1] - s.s[r0 * w1 + c1 + 1] - s.s[(r1 + 1) * w1 + c0] + s.s[r0 * w1 + c0]
                };
                let i = r * w + c;
                g[i] = scale * (rect(&ia) + 2.0 * xd[i] * rect(&ib) + yd[i] * rect(&ic));
            }
        }
        g
    });
    Ok(SsimParts {
        value: total / count,
        grad,
    })
}

/// SSIM with the data range taken from `max(y)`.
pub fn ssim(x: &Image, y: &Image) -> Result<f64> {
    ssim_with_range(x, y, y.max())
}

pub fn ssim_with_range(x: &Image, y: &Image, data_range: f64) -> Result<f64> {
    Ok(ssim_impl(x, y, data_range, false)?.value)
}

/// SSIM and its gradient with respect to `x` (data range `max(y)` held fixed).
pub fn ssim_grad(x: &Image, y: &Image) -> Result<(f64, Vec<f64>)> {
    let p = ssim_impl(x, y, y.max(), true)?;
    Ok((p.value, p.grad.expect("gradient requested")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub psnr: Psnr,
    pub nmse: f64,
    pub ssim: f64,
}

impl MetricReport {
    pub fn compute(x: &Image, reference: &Image) -> Result<Self> {
        Ok(MetricReport {
            psnr: psnr(x, reference)?,
            nmse: nmse(x, reference)?,
            ssim: ssim(x, reference)?,
        })
    }
}

/// Evaluation CSV: one row per image followed by a `mean` row over finite
/// entries.
pub fn report_csv(rows: &[(String, MetricReport)]) -> String {
    let mut out = String::from("name,psnr,nmse,ssim\n");
    for (name, r) in rows {
        out.push_str(&format!("{name},{},{},{}\n", r.psnr, r.nmse, r.ssim));
    }
    if !rows.is_empty() {
        let finite: Vec<f64> = rows.iter().filter_map(|(_, r)| match r.psnr {
            Psnr::Finite(v) => Some(v),
            Psnr::Exact => None,
        }).collect();
        let mean_psnr = if finite.len() == rows.len() {
            Psnr::Finite(finite.iter().sum::<f64>() / finite.len() as f64)
        } else {
            Psnr::Exact
        };
        let n = rows.len() as f64;
        let nm = rows.iter().map(|(_, r)| r.nmse).sum::<f64>() / n;
        let ss = rows.iter().map(|(_, r)| r.ssim).sum::<f64>() / n;
        out.push_str(&format!("mean,{mean_psnr},{nm},{ss}\n"));
    }
    out
}
