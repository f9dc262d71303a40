//! Architecture description, flat parameter layout and initialization.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::conv::Kernel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TdvConfig {
    /// Receiver coils `Q`; the network sees `2Q` real input channels.
    pub coils: usize,
    pub feature_channels: usize,
    pub macroblocks: usize,
    pub residual_blocks_per_macro: usize,
    pub scales: usize,
    pub kernel_size: usize,
}

impl TdvConfig {
    pub fn desk(coils: usize) -> Self {
        TdvConfig {
            coils,
            feature_channels: 8,
            macroblocks: 2,
            residual_blocks_per_macro: 2,
            scales: 2,
            kernel_size: 3,
        }
    }

    /// Three macroblocks of seven residual blocks on a four-level U.
    pub fn full(coils: usize) -> Self {
        TdvConfig {
            coils,
            feature_channels: 32,
            macroblocks: 3,
            residual_blocks_per_macro: 7,
            scales: 4,
            kernel_size: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.coils == 0
            || self.feature_channels == 0
            || self.macroblocks == 0
            || self.residual_blocks_per_macro == 0
            || self.scales == 0
        {
            return Err(Error::Config("all TDV sizes must be positive".into()));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config("kernel_size must be odd".into()));
        }
        Ok(())
    }

    /// Image extents must be divisible by this.
    pub fn size_multiple(&self) -> usize {
        1 << (self.scales - 1)
    }

    pub fn check_extent(&self, height: usize, width: usize, coils: usize) -> Result<()> {
        let m = self.size_multiple();
        if height % m != 0 || width % m != 0 {
            return Err(Error::shape(format!(
                "{width}x{height} not divisible by {m} ({} scales)",
                self.scales
            )));
        }
        if coils != self.coils {
            return Err(Error::shape(format!(
                "network expects {} coils, field has {coils}",
                self.coils
            )));
        }
        Ok(())
    }

    /// Number of U positions: encoder levels `0..scales` then decoder levels
    /// `scales-2 ..= 0`.
    pub fn positions(&self) -> usize {
        2 * self.scales - 1
    }

    /// U level of a position.
    pub fn position_level(&self, pos: usize) -> usize {
        if pos < self.scales {
            pos
        } else {
            2 * self.scales - 2 - pos
        }
    }

    /// Residual blocks at each U position; blocks are spread evenly with the
    /// remainder going to the earliest positions.
    pub fn blocks_per_position(&self) -> Vec<usize> {
        let n = self.positions();
        let base = self.residual_blocks_per_macro / n;
        let extra = self.residual_blocks_per_macro % n;
        (0..n).map(|p| base + usize::from(p < extra)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentKind {
    Scale,
    K0,
    K1 { macroblock: usize, block: usize },
    K2 { macroblock: usize, block: usize },
    Down { macroblock: usize, level: usize },
    Up { macroblock: usize, level: usize },
    Output,
}

impl SegmentKind {
    pub fn is_stochastic(&self) -> bool {
        matches!(self, SegmentKind::K1 { .. } | SegmentKind::K2 { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    #[serde(flatten)]
    pub kind: SegmentKind,
    pub offset: usize,
    pub out_ch: usize,
    pub in_ch: usize,
    pub size: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.out_ch * self.in_ch * self.size * self.size
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    /// Number of `size × size` slices.
    pub fn slices(&self) -> usize {
        self.out_ch * self.in_ch
    }
}

/// Flat coordinate map of every learnable quantity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub segments: Vec<Segment>,
    pub len: usize,
}

impl Layout {
    pub fn new(config: &TdvConfig) -> Self {
        let m = config.feature_channels;
        let k = config.kernel_size;
        let mut segments = Vec::new();
        let mut offset = 0;
        let mut push = |kind, out_ch, in_ch, size| {
            let s = Segment {
                kind,
                offset,
                out_ch,
                in_ch,
                size,
            };
            offset += s.len();
            segments.push(s);
        };
        push(SegmentKind::Scale, 1, 1, 1);
        push(SegmentKind::K0, m, 2 * config.coils, k);
        for mb in 0..config.macroblocks {
            for block in 0..config.residual_blocks_per_macro {
                push(SegmentKind::K1 { macroblock: mb, block }, m, m, k);
                push(SegmentKind::K2 { macroblock: mb, block }, m, m, k);
            }
            for level in 1..config.scales {
                push(SegmentKind::Down { macroblock: mb, level }, m, m, k);
                push(SegmentKind::Up { macroblock: mb, level }, m, m, k);
            }
        }
        push(SegmentKind::Output, 1, m, 1);
        Layout {
            segments,
            len: offset,
        }
    }

    pub fn find(&self, kind: SegmentKind) -> Option<&Segment> {
        self.segments.iter().find(|s| s.kind == kind)
    }

    pub fn segment(&self, kind: SegmentKind) -> &Segment {
        self.find(kind).expect("segment present in layout")
    }

    /// Flat indices of every stochastic coordinate, in layout order.
    pub fn stochastic_indices(&self) -> Vec<usize> {
        self.segments
            .iter()
            .filter(|s| s.kind.is_stochastic())
            .flat_map(|s| s.range())
            .collect()
    }

    /// Offsets of the stochastic `size × size` kernel slices.
    pub fn stochastic_slices(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        for s in self.segments.iter().filter(|s| s.kind.is_stochastic()) {
            let n = s.size * s.size;
            for j in 0..s.slices() {
                let start = s.offset + j * n;
                out.push(start..start + n);
            }
        }
        out
    }
}

/// Learned quantities: the step scale `T` at flat index 0 followed by every
/// kernel bank.
#[derive(Debug, Clone, PartialEq)]
pub struct TdvParams {
    config: TdvConfig,
    layout: Layout,
    flat: Vec<f64>,
}

pub const SCALE_INDEX: usize = 0;

impl TdvParams {
    pub fn from_flat(config: TdvConfig, flat: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if flat.len() != layout.len {
            return Err(Error::shape(format!(
                "flat vector has {} entries, layout needs {}",
                flat.len(),
                layout.len
            )));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite parameter".into()));
        }
        Ok(TdvParams {
            config,
            layout,
            flat,
        })
    }

    pub fn zeros(config: TdvConfig) -> Result<Self> {
        let len = Layout::new(&config).len;
        Self::from_flat(config, vec![0.0; len])
    }

    pub fn config(&self) -> &TdvConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.flat.clone()
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn scale(&self) -> f64 {
        self.flat[SCALE_INDEX]
    }

    pub fn set_scale(&mut self, t: f64) {
        self.flat[SCALE_INDEX] = t;
    }

    pub fn values(&self, kind: SegmentKind) -> &[f64] {
        &self.flat[self.layout.segment(kind).range()]
    }

    pub fn values_mut(&mut self, kind: SegmentKind) -> &mut [f64] {
        let r = self.layout.segment(kind).range();
        &mut self.flat[r]
    }

    pub fn kernel(&self, kind: SegmentKind) -> Kernel<'_> {
        let s = self.layout.segment(kind);
        Kernel {
            out_ch: s.out_ch,
            in_ch: s.in_ch,
            size: s.size,
            w: &self.flat[s.range()],
        }
    }

    /// Re-project `K0` onto zero-mean slices.
    pub fn project(&mut self) {
        let k = self.config.kernel_size;
        project_zero_mean(self.values_mut(SegmentKind::K0), k);
    }
}

/// Subtract the mean of every `size × size` slice.
pub fn project_zero_mean(bank: &mut [f64], size: usize) {
    let n = size * size;
    for slice in bank.chunks_exact_mut(n) {
        let mean = slice.iter().sum::<f64>() / n as f64;
        slice.iter_mut().for_each(|v| *v -= mean);
    }
}

/// Gaussian kernels with std `1/√fan_in`, zero-mean `K0`, `T = 1`.
pub fn init_params<R: Rng + ?Sized>(config: &TdvConfig, rng: &mut R) -> Result<TdvParams> {
    let mut params = TdvParams::zeros(config.clone())?;
    let segments = params.layout.segments.clone();
    for s in &segments {
        if s.kind == SegmentKind::Scale {
            params.flat[s.offset] = 1.0;
            continue;
        }
        let fan_in = (s.in_ch * s.size * s.size) as f64;
        let normal = Normal::new(0.0, 1.0 / fan_in.sqrt()).expect("positive std");
        for v in &mut params.flat[s.range()] {
            *v = normal.sample(rng);
        }
    }
    params.project();
    Ok(params)
}
