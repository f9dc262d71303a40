//! Planar feature maps and the convolution primitives of the network,
//! each with its adjoint and kernel gradient.
//!
//! Convolutions are cross-correlations on an explicitly padded input.
//! Every primitive is generic over [`Scalar`] so the same code runs on plain
//! values and on dual numbers.

use super::scalar::Scalar;

/// `channels × height × width`, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<S> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> FeatureMap<S> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        FeatureMap {
            channels,
            height,
            width,
            data: vec![S::default(); channels * height * width],
        }
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[S] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn plane_mut(&mut self, c: usize) -> &mut [S] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn add_assign(&mut self, other: &FeatureMap<S>) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> FeatureMap<S> {
        FeatureMap {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &FeatureMap<S>, f: impl Fn(S, S) -> S) -> FeatureMap<S> {
        debug_assert_eq!(self.data.len(), other.data.len());
        FeatureMap {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

/// Borrowed `out × in × size × size` kernel bank.
#[derive(Debug, Clone, Copy)]
pub struct Kernel<'a> {
    pub out_ch: usize,
    pub in_ch: usize,
    pub size: usize,
    pub w: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Zero,
    /// Mirror with the edge sample repeated; constants stay constant.
    Symmetric,
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i - 1
    } else if i >= n {
        2 * n - i - 1
    } else {
        i
    };
    r as usize
}

pub fn pad<S: Scalar>(x: &FeatureMap<S>, p: usize, mode: Padding) -> FeatureMap<S> {
    let (h, w) = (x.height, x.width);
    let (hp, wp) = (h + 2 * p, w + 2 * p);
    let mut out = FeatureMap::zeros(x.channels, hp, wp);
    for c in 0..x.channels {
        let src = x.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h {
            dst[(y + p) * wp + p..(y + p) * wp + p + w].copy_from_slice(&src[y * w..(y + 1) * w]);
        }
        if mode == Padding::Symmetric && p > 0 {
            for yp in 0..hp {
                let sy = reflect(yp as isize - p as isize, h);
                for xp in 0..wp {
                    let interior = yp >= p && yp < p + h && xp >= p && xp < p + w;
                    if !interior {
                        let sx = reflect(xp as isize - p as isize, w);
                        dst[yp * wp + xp] = src[sy * w + sx];
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`pad`]: folds the border back onto the interior.
pub fn pad_adjoint<S: Scalar>(
    g: &FeatureMap<S>,
    p: usize,
    mode: Padding,
    h: usize,
    w: usize,
) -> FeatureMap<S> {
    let wp = w + 2 * p;
    let mut out = FeatureMap::zeros(g.channels, h, w);
    for c in 0..g.channels {
        let src = g.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h {
            dst[y * w..(y + 1) * w].copy_from_slice(&src[(y + p) * wp + p..(y + p) * wp + p + w]);
        }
        if mode == Padding::Symmetric && p > 0 {
            for yp in 0..h + 2 * p {
                let sy = reflect(yp as isize - p as isize, h);
                for xp in 0..wp {
                    let interior = yp >= p && yp < p + h && xp >= p && xp < p + w;
                    if !interior {
                        let sx = reflect(xp as isize - p as isize, w);
                        dst[sy * w + sx] += src[yp * wp + xp];
                    }
                }
            }
        }
    }
    out
}

fn out_extent(n: usize, k: usize, stride: usize) -> usize {
    (n - k) / stride + 1
}

thread_local! {
    static SCRATCH: std::cell::RefCell<Vec<Vec<f64>>> = const { std::cell::RefCell::new(Vec::new()) };
}

/// Run `f` with `count` reusable scratch buffers of `len` elements each.
/// Contents are unspecified on entry.
fn with_scratch<R>(count: usize, len: usize, f: impl FnOnce(&mut [Vec<f64>]) -> R) -> R {
    let mut bufs = SCRATCH.with(|s| std::mem::take(&mut *s.borrow_mut()));
    if bufs.len() < count {
        bufs.resize_with(count, Vec::new);
    }
    for b in bufs.iter_mut().take(count) {
        if b.len() < len {
            b.resize(len, 0.0);
        }
    }
    let out = f(&mut bufs[..count]);
    SCRATCH.with(|s| *s.borrow_mut() = bufs);
    out
}

/// Unfold lane `lane` of a padded map into a `(in·k·k) × (ho·wo)` matrix.
#[allow(clippy::too_many_arguments)]
fn im2col(
    src: &[f64],
    lanes: usize,
    lane: usize,
    channels: usize,
    hp: usize,
    wp: usize,
    size: usize,
    stride: usize,
    ho: usize,
    wo: usize,
    col: &mut [f64],
) {
    let p = ho * wo;
    for c in 0..channels {
        for ky in 0..size {
            for kx in 0..size {
                let row = &mut col[((c * size + ky) * size + kx) * p..][..p];
                for y in 0..ho {
                    let base = (c * hp + y * stride + ky) * wp + kx;
                    let dst = &mut row[y * wo..(y + 1) * wo];
                    if lanes == 1 && stride == 1 {
                        dst.copy_from_slice(&src[base..base + wo]);
                    } else {
                        for (x, d) in dst.iter_mut().enumerate() {
                            *d = src[(base + x * stride) * lanes + lane];
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add the transpose of [`im2col`] into lane `lane` of `dst`.
#[allow(clippy::too_many_arguments)]
fn col2im_add(
    col: &[f64],
    dst: &mut [f64],
    lanes: usize,
    lane: usize,
    channels: usize,
    hp: usize,
    wp: usize,
    size: usize,
    stride: usize,
    ho: usize,
    wo: usize,
) {
    let p = ho * wo;
    for c in 0..channels {
        for ky in 0..size {
            for kx in 0..size {
                let row = &col[((c * size + ky) * size + kx) * p..][..p];
                for y in 0..ho {
                    let base = (c * hp + y * stride + ky) * wp + kx;
                    let src = &row[y * wo..(y + 1) * wo];
                    if lanes == 1 && stride == 1 {
                        for (d, v) in dst[base..base + wo].iter_mut().zip(src) {
                            *d += v;
                        }
                    } else {
                        for (x, v) in src.iter().enumerate() {
                            dst[(base + x * stride) * lanes + lane] += v;
                        }
                    }
                }
            }
        }
    }
}

/// `C = α A B + β C` on strided row/column layouts.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rs: usize, cs: usize, r: usize, q: usize| (r - 1) * rs + (q - 1) * cs;
    if k > 0 {
        assert!(last(rsa, csa, m, k) < a.len() && last(rsb, csb, k, n) < b.len());
    }
    assert!(last(rsc, csc, m, n) < c.len());
    // SAFETY: all accessed offsets were bounds-checked above and `c` does
    // not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Valid cross-correlation of an already padded input.
pub fn conv_valid<S: Scalar>(xp: &FeatureMap<S>, k: Kernel<'_>, stride: usize) -> FeatureMap<S> {
    debug_assert_eq!(xp.channels, k.in_ch);
    let ho = out_extent(xp.height, k.size, stride);
    let wo = out_extent(xp.width, k.size, stride);
    let (l, p, kk) = (S::LANES, ho * wo, k.in_ch * k.size * k.size);
    let mut out = FeatureMap::zeros(k.out_ch, ho, wo);
    let src = S::as_lanes(&xp.data);
    let dst = S::as_lanes_mut(&mut out.data);
    with_scratch(1, kk * p, |bufs| {
        let col = &mut bufs[0][..kk * p];
        for lane in 0..l {
            im2col(src, l, lane, xp.channels, xp.height, xp.width, k.size, stride, ho, wo, col);
            gemm(k.out_ch, kk, p, k.w, (kk, 1), col, (p, 1), 0.0, &mut dst[lane..], (p * l, l));
        }
    });
    out
}

/// Adjoint of [`conv_valid`] with respect to its input; `(hp, wp)` is the
/// padded input extent.
pub fn conv_valid_adjoint<S: Scalar>(
    g: &FeatureMap<S>,
    k: Kernel<'_>,
    stride: usize,
    hp: usize,
    wp: usize,
) -> FeatureMap<S> {
    debug_assert_eq!(g.channels, k.out_ch);
    let (ho, wo) = (g.height, g.width);
    let (l, p, kk) = (S::LANES, ho * wo, k.in_ch * k.size * k.size);
    let mut out = FeatureMap::zeros(k.in_ch, hp, wp);
    let src = S::as_lanes(&g.data);
    let dst = S::as_lanes_mut(&mut out.data);
    with_scratch(1, kk * p, |bufs| {
        let col = &mut bufs[0][..kk * p];
        for lane in 0..l {
            gemm(kk, k.out_ch, p, k.w, (1, kk), &src[lane..], (p * l, l), 0.0, col, (p, 1));
            col2im_add(col, dst, l, lane, k.in_ch, hp, wp, k.size, stride, ho, wo);
        }
    });
    out
}

/// Gradient of `⟨g, conv_valid(xp, K)⟩` with respect to `K`, accumulated
/// into `dw` (layout of [`Kernel`]).
pub fn conv_valid_kernel_grad<S: Scalar>(
    g: &FeatureMap<S>,
    xp: &FeatureMap<S>,
    size: usize,
    stride: usize,
    dw: &mut [S],
) {
    let (ho, wo) = (g.height, g.width);
    let (l, p, kk) = (S::LANES, ho * wo, xp.channels * size * size);
    debug_assert_eq!(dw.len(), g.channels * kk);
    let gs = S::as_lanes(&g.data);
    let xs = S::as_lanes(&xp.data);
    let dws = S::as_lanes_mut(dw);
    with_scratch(l, kk * p, |cols| {
        for (lane, col) in cols.iter_mut().enumerate() {
            im2col(xs, l, lane, xp.channels, xp.height, xp.width, size, stride, ho, wo, &mut col[..kk * p]);
        }
        // Product rule over the lanes: value·value, then tangent·value + value·tangent.
        for lane in 0..l {
            for (ga, xb) in [(0, 0), (1, 0), (0, 1)] {
                if ga + xb != lane {
                    continue;
                }
                gemm(g.channels, p, kk, &gs[ga..], (p * l, l), &cols[xb], (1, p), 1.0, &mut dws[lane..], (kk * l, l));
            }
        }
    });
}
