//! Cartesian line masks with a fully sampled calibration block.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Acquired/skipped flag per k-space row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingMask {
    acceleration: usize,
    acs_lines: usize,
    acquired: Vec<bool>,
}

/// Default calibration fractions for the usual acceleration factors.
pub fn default_acs_fraction(acceleration: usize) -> f64 {
    match acceleration {
        0..=4 => 0.08,
        _ => 0.04,
    }
}

fn acs_count(lines: usize, acs_fraction: f64) -> usize {
    (lines as f64 * acs_fraction + 1e-9).floor() as usize
}

fn acs_start(lines: usize, acs_lines: usize) -> usize {
    lines / 2 - acs_lines / 2
}

impl SamplingMask {
    /// Fully sampled mask.
    pub fn full(lines: usize) -> Self {
        SamplingMask {
            acceleration: 1,
            acs_lines: lines,
            acquired: vec![true; lines],
        }
    }

    /// Draw a mask keeping `⌊lines / R⌋` rows: the centered calibration block
    /// plus uniformly chosen rows outside it.
    pub fn generate<R: Rng + ?Sized>(
        lines: usize,
        acceleration: usize,
        acs_fraction: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if acceleration == 0 || lines < acceleration {
            return Err(Error::invalid(format!(
                "need lines >= R >= 1 (lines {lines}, R {acceleration})"
            )));
        }
        if !(0.0..=1.0).contains(&acs_fraction) {
            return Err(Error::invalid("acs_fraction must lie in [0, 1]"));
        }
        let budget = lines / acceleration;
        let acs = acs_count(lines, acs_fraction);
        if acs > budget {
            return Err(Error::invalid(format!(
                "calibration block of {acs} lines exceeds the budget of {budget} lines"
            )));
        }
        let mut acquired = vec![false; lines];
        let start = acs_start(lines, acs);
        acquired[start..start + acs].iter_mut().for_each(|a| *a = true);
        let outside: Vec<usize> = (0..lines).filter(|&i| !acquired[i]).collect();
        for k in sample(rng, outside.len(), budget - acs) {
            acquired[outside[k]] = true;
        }
        Ok(SamplingMask {
            acceleration,
            acs_lines: acs,
            acquired,
        })
    }

    pub fn from_parts(acceleration: usize, acs_lines: usize, acquired: Vec<bool>) -> Result<Self> {
        let lines = acquired.len();
        if acceleration == 0 || lines < acceleration {
            return Err(Error::invalid("need lines >= R >= 1"));
        }
        let count = acquired.iter().filter(|&&a| a).count();
        if count != lines / acceleration {
            return Err(Error::invalid(format!(
                "{count} acquired lines, expected {}",
                lines / acceleration
            )));
        }
        if acs_lines > count {
            return Err(Error::invalid("calibration block larger than budget"));
        }
        let start = acs_start(lines, acs_lines);
        if !acquired[start..start + acs_lines].iter().all(|&a| a) {
            return Err(Error::invalid("calibration lines must all be acquired"));
        }
        Ok(SamplingMask {
            acceleration,
            acs_lines,
            acquired,
        })
    }

    pub fn lines(&self) -> usize {
        self.acquired.len()
    }

    pub fn acceleration(&self) -> usize {
        self.acceleration
    }

    pub fn acs_lines(&self) -> usize {
        self.acs_lines
    }

    pub fn acquired(&self) -> &[bool] {
        &self.acquired
    }

    #[inline]
    pub fn is_acquired(&self, line: usize) -> bool {
        self.acquired[line]
    }

    pub fn acquired_count(&self) -> usize {
        self.acquired.iter().filter(|&&a| a).count()
    }

    /// Index range of the calibration block.
    pub fn acs_range(&self) -> std::ops::Range<usize> {
        let start = acs_start(self.lines(), self.acs_lines);
        start..start + self.acs_lines
    }
}

#[derive(Serialize, Deserialize)]
struct MaskJson {
    lines: usize,
    #[serde(rename = "R")]
    acceleration: usize,
    acs_lines: usize,
    acquired: Vec<u8>,
}

impl Serialize for SamplingMask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MaskJson {
            lines: self.lines(),
            acceleration: self.acceleration,
            acs_lines: self.acs_lines,
            acquired: self.acquired.iter().map(|&a| a as u8).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SamplingMask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = MaskJson::deserialize(d)?;
        if raw.acquired.len() != raw.lines {
            return Err(D::Error::custom("acquired length differs from lines"));
        }
        if raw.acquired.iter().any(|&v| v > 1) {
            return Err(D::Error::custom("acquired entries must be 0 or 1"));
        }
        let acquired = raw.acquired.iter().map(|&v| v == 1).collect();
        SamplingMask::from_parts(raw.acceleration, raw.acs_lines, acquired)
            .map_err(D::Error::custom)
    }
}
