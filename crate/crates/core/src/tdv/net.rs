//! Forward pass with tape and the explicit adjoint (backward) pass.

use super::conv::{
    conv_valid, conv_valid_adjoint, pad, pad_adjoint, FeatureMap, Kernel,
    Padding,
};
use super::params::{project_zero_mean, SegmentKind, TdvParams};
use super::scalar::Scalar;

struct ResTape<S> {
    /// Zero-padded block input.
    input_p: FeatureMap<S>,
    /// Pre-activation `K1 a`.
    pre: FeatureMap<S>,
    /// Zero-padded `φ(K1 a)`.
    act_p: FeatureMap<S>,
}

struct MacroTape<S> {
    /// Residual tapes per U position.
    blocks: Vec<Vec<ResTape<S>>>,
    /// Zero-padded input of each down transition, indexed by target level.
    down_in: Vec<Option<FeatureMap<S>>>,
    /// Coarse input of each up transition, indexed by source level.
    up_in: Vec<Option<FeatureMap<S>>>,
    /// Extent per level.
    extents: Vec<(usize, usize)>,
}

pub(crate) struct Tape<S> {
    input_p: FeatureMap<S>,
    k0: Vec<f64>,
    macros: Vec<MacroTape<S>>,
    psi: FeatureMap<S>,
}

pub(crate) struct Backward<S> {
    pub grad_x: FeatureMap<S>,
    pub grad_theta: Vec<S>,
}

fn k0_padding(params: &TdvParams) -> usize {
    params.config().kernel_size / 2
}

/// Global block index of the residual blocks sitting at each U position.
fn block_ids(params: &TdvParams) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    params
        .config()
        .blocks_per_position()
        .into_iter()
        .map(|n| {
            let r = start..start + n;
            start += n;
            r
        })
        .collect()
}

fn res_forward<S: Scalar>(
    a: FeatureMap<S>,
    k1: Kernel<'_>,
    k2: Kernel<'_>,
) -> (FeatureMap<S>, ResTape<S>) {
    let p = k1.size / 2;
    let input_p = pad(&a, p, Padding::Zero);
    let pre = conv_valid(&input_p, k1, 1);
    let act_p = pad(&pre.map(S::act), p, Padding::Zero);
    let mut out = conv_valid(&act_p, k2, 1);
    out.add_assign(&a);
    (
        out,
        ResTape {
            input_p,
            pre,
            act_p,
        },
    )
}

/// Kernel gradient, skipped when only the input gradient is wanted.
fn kernel_grad<S: Scalar>(on: bool, g: &FeatureMap<S>, xp: &FeatureMap<S>, size: usize, stride: usize, dw: &mut [S]) {
    if on {
        super::conv::conv_valid_kernel_grad(g, xp, size, stride, dw);
    }
}

fn res_backward<S: Scalar>(
    with_theta: bool,
    g_out: FeatureMap<S>,
    tape: &ResTape<S>,
    k1: Kernel<'_>,
    k2: Kernel<'_>,
    dk1: &mut [S],
    dk2: &mut [S],
) -> FeatureMap<S> {
    let p = k1.size / 2;
    let (h, w) = (g_out.height, g_out.width);
    kernel_grad(with_theta, &g_out, &tape.act_p, k2.size, 1, dk2);
    let g_act = pad_adjoint(
        &conv_valid_adjoint(&g_out, k2, 1, h + 2 * p, w + 2 * p),
        p,
        Padding::Zero,
        h,
        w,
    );
    let g_pre = g_act.zip_map(&tape.pre, |g, t| g * t.act_d1());
    kernel_grad(with_theta, &g_pre, &tape.input_p, k1.size, 1, dk1);
    let mut g_in = pad_adjoint(
        &conv_valid_adjoint(&g_pre, k1, 1, h + 2 * p, w + 2 * p),
        p,
        Padding::Zero,
        h,
        w,
    );
    g_in.add_assign(&g_out);
    g_in
}

fn down_forward<S: Scalar>(e: &FeatureMap<S>, k: Kernel<'_>) -> (FeatureMap<S>, FeatureMap<S>) {
    let ep = pad(e, k.size / 2, Padding::Zero);
    (conv_valid(&ep, k, 2), ep)
}

fn up_forward<S: Scalar>(d: &FeatureMap<S>, k: Kernel<'_>, h: usize, w: usize) -> FeatureMap<S> {
    let p = k.size / 2;
    pad_adjoint(
        &conv_valid_adjoint(d, k, 2, h + 2 * p, w + 2 * p),
        p,
        Padding::Zero,
        h,
        w,
    )
}

impl TdvParams {
    fn k(&self, kind: SegmentKind) -> Kernel<'_> {
        self.kernel(kind)
    }

    /// Forward pass on `2Q`-channel input; returns the energy and the tape.
    pub(crate) fn forward<S: Scalar>(&self, x: &FeatureMap<S>) -> (S, Tape<S>) {
        let cfg = self.config();
        let scales = cfg.scales;
        let ids = block_ids(self);

        let mut k0 = self.values(SegmentKind::K0).to_vec();
        project_zero_mean(&mut k0, cfg.kernel_size);
        let k0_seg = self.layout().segment(SegmentKind::K0);
        let k0_kernel = Kernel {
            out_ch: k0_seg.out_ch,
            in_ch: k0_seg.in_ch,
            size: k0_seg.size,
            w: &k0,
        };
        let input_p = pad(x, k0_padding(self), Padding::Symmetric);
        let mut level0 = conv_valid(&input_p, k0_kernel, 1);

        let mut extents = vec![(x.height, x.width)];
        for l in 1..scales {
            let (h, w) = extents[l - 1];
            extents.push((h / 2, w / 2));
        }

        let mut macros = Vec::with_capacity(cfg.macroblocks);
        let mut prev: Vec<Option<FeatureMap<S>>> = vec![None; scales];
        for mb in 0..cfg.macroblocks {
            let mut blocks: Vec<Vec<ResTape<S>>> = (0..cfg.positions()).map(|_| Vec::new()).collect();
            let mut down_in = vec![None; scales];
            let mut up_in = vec![None; scales];

            let run_blocks = |pos: usize, mut a: FeatureMap<S>, tapes: &mut Vec<ResTape<S>>| {
                for b in ids[pos].clone() {
                    let (out, t) = res_forward(
                        a,
                        self.k(SegmentKind::K1 { macroblock: mb, block: b }),
                        self.k(SegmentKind::K2 { macroblock: mb, block: b }),
                    );
                    tapes.push(t);
                    a = out;
                }
                a
            };

            // Encoder.
            let mut enc: Vec<FeatureMap<S>> = Vec::with_capacity(scales);
            let e0 = run_blocks(0, level0, &mut blocks[0]);
            enc.push(e0);
            for l in 1..scales {
                let (mut a, ep) =
                    down_forward(&enc[l - 1], self.k(SegmentKind::Down { macroblock: mb, level: l }));
                down_in[l] = Some(ep);
                if let Some(p) = prev[l].take() {
                    a.add_assign(&p);
                }
                let e = run_blocks(l, a, &mut blocks[l]);
                enc.push(e);
            }

            // Decoder.
            let mut dec: Vec<Option<FeatureMap<S>>> = vec![None; scales];
            dec[scales - 1] = Some(enc[scales - 1].clone());
            for l in (0..scales - 1).rev() {
                let pos = 2 * scales - 2 - l;
                let coarse = dec[l + 1].as_ref().expect("coarser level decoded");
                let (h, w) = extents[l];
                let mut b =
                    up_forward(coarse, self.k(SegmentKind::Up { macroblock: mb, level: l + 1 }), h, w);
                up_in[l + 1] = Some(coarse.clone());
                b.add_assign(&enc[l]);
                dec[l] = Some(run_blocks(pos, b, &mut blocks[pos]));
            }

            let outputs: Vec<FeatureMap<S>> = dec.into_iter().map(|d| d.expect("decoded")).collect();
            level0 = outputs[0].clone();
            for (l, o) in outputs.into_iter().enumerate().skip(1) {
                prev[l] = Some(o);
            }
            macros.push(MacroTape {
                blocks,
                down_in,
                up_in,
                extents: extents.clone(),
            });
        }

        let psi = level0;
        let w = self.values(SegmentKind::Output);
        let mut energy = S::default();
        for (c, &wc) in w.iter().enumerate() {
            let mut acc = S::default();
            for &v in psi.plane(c) {
                acc += v;
            }
            energy += acc.scale(wc);
        }
        (
            energy,
            Tape {
                input_p,
                k0,
                macros,
                psi,
            },
        )
    }

    /// Reverse sweep of [`forward`]: gradient of the energy with respect to
    /// the input and to every flat parameter (the `T` slot stays zero).
    pub(crate) fn backward<S: Scalar>(
        &self,
        tape: Tape<S>,
        height: usize,
        width: usize,
        with_theta: bool,
    ) -> Backward<S> {
        let cfg = self.config();
        let scales = cfg.scales;
        let ids = block_ids(self);
        let layout = self.layout();
        let mut grad_theta = vec![S::default(); layout.len];

        let m = cfg.feature_channels;
        let w = self.values(SegmentKind::Output);
        let out_seg = layout.segment(SegmentKind::Output);
        let mut g_psi = FeatureMap::zeros(m, height, width);
        for c in 0..m {
            g_psi.plane_mut(c).iter_mut().for_each(|v| *v = S::from_f64(w[c]));
            let mut acc = S::default();
            for &v in tape.psi.plane(c) {
                acc += v;
            }
            grad_theta[out_seg.offset + c] = acc;
        }

        // Gradients arriving at the current macroblock's outputs per level.
        let mut g_out: Vec<Option<FeatureMap<S>>> = vec![None; scales];
        g_out[0] = Some(g_psi);

        for (mb, mt) in tape.macros.iter().enumerate().rev() {
            let run_blocks_back = |pos: usize, mut g: FeatureMap<S>, gt: &mut [S]| {
                for (t_idx, b) in ids[pos].clone().enumerate().rev() {
                    let k1s = layout.segment(SegmentKind::K1 { macroblock: mb, block: b });
                    let k2s = layout.segment(SegmentKind::K2 { macroblock: mb, block: b });
                    let mut dk1 = vec![S::default(); k1s.len()];
                    let mut dk2 = vec![S::default(); k2s.len()];
                    g = res_backward(
                        with_theta,
                        g,
                        &mt.blocks[pos][t_idx],
                        self.k(k1s.kind),
                        self.k(k2s.kind),
                        &mut dk1,
                        &mut dk2,
                    );
                    for (dst, src) in gt[k1s.range()].iter_mut().zip(dk1) {
                        *dst += src;
                    }
                    for (dst, src) in gt[k2s.range()].iter_mut().zip(dk2) {
                        *dst += src;
                    }
                }
                g
            };

            // Decoder, outermost level first.
            let mut g_dec: Vec<Option<FeatureMap<S>>> = std::mem::replace(&mut g_out, vec![None; scales]);
            let mut g_enc: Vec<Option<FeatureMap<S>>> = vec![None; scales];
            for l in 0..scales - 1 {
                let pos = 2 * scales - 2 - l;
                let Some(g) = g_dec[l].take() else { continue };
                let g_b = run_blocks_back(pos, g, &mut grad_theta);
                // b = up(d_{l+1}) + e_l
                let up_kind = SegmentKind::Up { macroblock: mb, level: l + 1 };
                let up_seg = layout.segment(up_kind);
                let k = self.k(up_kind);
                let p = k.size / 2;
                let g_bp = pad(&g_b, p, Padding::Zero);
                let coarse_in = mt.up_in[l + 1].as_ref().expect("up input taped");
                let mut dk = vec![S::default(); up_seg.len()];
                kernel_grad(with_theta, coarse_in, &g_bp, k.size, 2, &mut dk);
                for (dst, src) in grad_theta[up_seg.range()].iter_mut().zip(dk) {
                    *dst += src;
                }
                let g_coarse = conv_valid(&g_bp, k, 2);
                accumulate(&mut g_dec[l + 1], g_coarse);
                accumulate(&mut g_enc[l], g_b);
            }
            // Bottom: d_{s-1} = e_{s-1}.
            if let Some(g) = g_dec[scales - 1].take() {
                accumulate(&mut g_enc[scales - 1], g);
            }

            // Encoder, deepest level first.
            let mut g_in0 = None;
            for l in (0..scales).rev() {
                let Some(g) = g_enc[l].take() else { continue };
                let g_a = run_blocks_back(l, g, &mut grad_theta);
                if l == 0 {
                    g_in0 = Some(g_a);
                    break;
                }
                // a_l = down(e_{l-1}) + prev_l
                let down_kind = SegmentKind::Down { macroblock: mb, level: l };
                let down_seg = layout.segment(down_kind);
                let k = self.k(down_kind);
                let ep = mt.down_in[l].as_ref().expect("down input taped");
                let mut dk = vec![S::default(); down_seg.len()];
                kernel_grad(with_theta, &g_a, ep, k.size, 2, &mut dk);
                for (dst, src) in grad_theta[down_seg.range()].iter_mut().zip(dk) {
                    *dst += src;
                }
                let (h, w) = mt.extents[l - 1];
                let p = k.size / 2;
                let g_e = pad_adjoint(
                    &conv_valid_adjoint(&g_a, k, 2, h + 2 * p, w + 2 * p),
                    p,
                    Padding::Zero,
                    h,
                    w,
                );
                accumulate(&mut g_enc[l - 1], g_e);
                if mb > 0 {
                    g_out[l] = Some(g_a);
                }
            }
            g_out[0] = g_in0;
        }

        // K0 with symmetric padding; gradient of the raw kernel is the
        // projected gradient of the effective one.
        let g_u = g_out[0].take().unwrap_or_else(|| FeatureMap::zeros(m, height, width));
        let k0_seg = layout.segment(SegmentKind::K0);
        let k0 = Kernel {
            out_ch: k0_seg.out_ch,
            in_ch: k0_seg.in_ch,
            size: k0_seg.size,
            w: &tape.k0,
        };
        let mut dk0 = vec![S::default(); k0_seg.len()];
        kernel_grad(with_theta, &g_u, &tape.input_p, k0.size, 1, &mut dk0);
        let n = k0.size * k0.size;
        for slice in dk0.chunks_exact_mut(n) {
            let mut mean = S::default();
            for &v in slice.iter() {
                mean += v;
            }
            let mean = mean.scale(1.0 / n as f64);
            slice.iter_mut().for_each(|v| *v = *v - mean);
        }
        grad_theta[k0_seg.range()].copy_from_slice(&dk0);
        let p = k0_padding(self);
        let g_xp = conv_valid_adjoint(&g_u, k0, 1, height + 2 * p, width + 2 * p);
        let grad_x = pad_adjoint(&g_xp, p, Padding::Symmetric, height, width);
        Backward { grad_x, grad_theta }
    }
}

fn accumulate<S: Scalar>(slot: &mut Option<FeatureMap<S>>, g: FeatureMap<S>) {
    match slot {
        Some(existing) => existing.add_assign(&g),
        None => *slot = Some(g),
    }
}
