//! On-disk formats.
//!
//! Every binary container is `magic (8 bytes) | u32 LE header length |
//! JSON header | little-endian payload`. Fields (`CFLD`) store `(re, im)`
//! pairs as 32-bit floats in `(row, col, coil)` order, real images (`RFLD`)
//! one 32-bit float per pixel. Parameter files (`TDVP`) and distributions
//! (`TDVD`) use 32-bit floats; checkpoints store 64-bit floats so that
//! resumed training is bit-identical.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, Domain, Image};
use crate::gaussian::{TriBlock, WeightDistribution};
use crate::kspace::SamplingMask;
use crate::tdv::{Layout, TdvConfig, TdvParams};

pub const FIELD_MAGIC: &[u8; 8] = b"CFLD0001";
pub const IMAGE_MAGIC: &[u8; 8] = b"RFLD0001";
pub const PARAMS_MAGIC: &[u8; 8] = b"TDVP0001";
pub const DIST_MAGIC: &[u8; 8] = b"TDVD0001";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TDVC0001";

/// Write to a sibling temporary file, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn encode_container<H: Serialize>(magic: &[u8; 8], header: &H, payload: &[u8]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let len = u32::try_from(json.len()).map_err(|_| Error::Format("header too large".into()))?;
    let mut out = Vec::with_capacity(12 + json.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(payload);
    Ok(out)
}

pub fn decode_container<H: DeserializeOwned>(magic: &[u8; 8], bytes: &[u8]) -> Result<(H, Vec<u8>)> {
    if bytes.len() < 12 || &bytes[..8] != magic {
        return Err(Error::Format(format!("expected {} container", String::from_utf8_lossy(&magic[..4]))));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let end = 12usize
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Format("truncated header".into()))?;
    let header = serde_json::from_slice(&bytes[12..end]).map_err(|e| Error::Format(format!("header: {e}")))?;
    Ok((header, bytes[end..].to_vec()))
}

fn read_container<H: DeserializeOwned>(magic: &[u8; 8], path: &Path) -> Result<(H, Vec<u8>)> {
    decode_container(magic, &fs::read(path)?)
}

pub fn f32_bytes(values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    values.into_iter().flat_map(|v| (v as f32).to_le_bytes()).collect()
}

pub fn f64_bytes(values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    values.into_iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn parse_f32(bytes: &[u8], expected: usize) -> Result<Vec<f64>> {
    if bytes.len() != 4 * expected {
        return Err(Error::Format(format!("expected {expected} f32 values, found {} bytes", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect())
}

pub fn parse_f64(bytes: &[u8], expected: usize) -> Result<Vec<f64>> {
    if bytes.len() != 8 * expected {
        return Err(Error::Format(format!("expected {expected} f64 values, found {} bytes", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldHeader {
    width: usize,
    height: usize,
    coils: usize,
    domain: Domain,
    dtype: String,
}

pub fn encode_field(x: &ComplexField) -> Result<Vec<u8>> {
    let header = FieldHeader {
        width: x.width(),
        height: x.height(),
        coils: x.coils(),
        domain: x.domain(),
        dtype: "c64le".into(),
    };
    encode_container(FIELD_MAGIC, &header, &f32_bytes(x.data().iter().flat_map(|c| [c.re, c.im])))
}

pub fn decode_field(bytes: &[u8]) -> Result<ComplexField> {
    let (h, payload): (FieldHeader, _) = decode_container(FIELD_MAGIC, bytes)?;
    if h.dtype != "c64le" {
        return Err(Error::Format(format!("unsupported field dtype {}", h.dtype)));
    }
    let n = h.width * h.height * h.coils;
    let v = parse_f32(&payload, 2 * n)?;
    let data = v.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
    ComplexField::from_vec(h.width, h.height, h.coils, h.domain, data)
}

pub fn write_field(path: &Path, x: &ComplexField) -> Result<()> {
    write_atomic(path, &encode_field(x)?)
}

pub fn read_field(path: &Path) -> Result<ComplexField> {
    decode_field(&fs::read(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImageHeader {
    width: usize,
    height: usize,
    dtype: String,
}

pub fn write_image(path: &Path, x: &Image) -> Result<()> {
    let header = ImageHeader {
        width: x.width(),
        height: x.height(),
        dtype: "f32le".into(),
    };
    write_atomic(path, &encode_container(IMAGE_MAGIC, &header, &f32_bytes(x.data().iter().copied()))?)
}

/// Reads real images; values may be negative (e.g. log-scale maps).
pub fn read_image(path: &Path) -> Result<Image> {
    let (h, payload): (ImageHeader, _) = read_container(IMAGE_MAGIC, path)?;
    if h.dtype != "f32le" {
        return Err(Error::Format(format!("unsupported image dtype {}", h.dtype)));
    }
    let v = parse_f32(&payload, h.width * h.height)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Format("image contains non-finite values".into()));
    }
    Image::from_vec_signed(h.width, h.height, v)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsHeader {
    config: TdvConfig,
    len: usize,
    dtype: String,
}

pub fn write_params(path: &Path, p: &TdvParams) -> Result<()> {
    let header = ParamsHeader {
        config: p.config().clone(),
        len: p.len(),
        dtype: "f32le".into(),
    };
    write_atomic(path, &encode_container(PARAMS_MAGIC, &header, &f32_bytes(p.flat().iter().copied()))?)
}

pub fn read_params(path: &Path) -> Result<TdvParams> {
    let (h, payload): (ParamsHeader, _) = read_container(PARAMS_MAGIC, path)?;
    h.config.validate()?;
    let flat = parse_f32(&payload, h.len)?;
    TdvParams::from_flat(h.config, flat)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DistHeader {
    config: TdvConfig,
    layout: Layout,
    alpha: f64,
    block_map: Vec<[usize; 2]>,
    dtype: String,
}

pub fn write_distribution(path: &Path, d: &WeightDistribution) -> Result<()> {
    let header = DistHeader {
        config: d.mu().config().clone(),
        layout: d.mu().layout().clone(),
        alpha: d.alpha(),
        block_map: d.block_map().iter().map(|r| [r.start, r.end]).collect(),
        dtype: "f32le".into(),
    };
    let values = d
        .mu()
        .flat()
        .iter()
        .copied()
        .chain(d.blocks().iter().flat_map(|b| b.packed().iter().copied()));
    write_atomic(path, &encode_container(DIST_MAGIC, &header, &f32_bytes(values))?)
}

pub fn read_distribution(path: &Path) -> Result<WeightDistribution> {
    let (h, payload): (DistHeader, _) = read_container(DIST_MAGIC, path)?;
    h.config.validate()?;
    if h.layout != Layout::new(&h.config) {
        return Err(Error::Format("layout does not match configuration".into()));
    }
    let slices = h.layout.stochastic_slices();
    let map: Vec<[usize; 2]> = slices.iter().map(|r| [r.start, r.end]).collect();
    if map != h.block_map {
        return Err(Error::Format("block map does not match layout".into()));
    }
    let tri: usize = slices.iter().map(|r| r.len() * (r.len() + 1) / 2).sum();
    let v = parse_f32(&payload, h.layout.len + tri)?;
    let mu = TdvParams::from_flat(h.config, v[..h.layout.len].to_vec())?;
    let mut off = h.layout.len;
    let mut blocks = Vec::with_capacity(slices.len());
    for r in &slices {
        let n = r.len() * (r.len() + 1) / 2;
        blocks.push(TriBlock::from_packed(r.len(), v[off..off + n].to_vec())?);
        off += n;
    }
    WeightDistribution::new(mu, blocks, h.alpha)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

pub fn write_mask(path: &Path, m: &SamplingMask) -> Result<()> {
    write_json(path, m)
}

pub fn read_mask(path: &Path) -> Result<SamplingMask> {
    read_json(path)
}

/// 16-bit binary PGM with the fixed window `[lo, hi]` mapped to `[0, 65535]`.
pub fn encode_pgm16(x: &Image, lo: f64, hi: f64) -> Result<Vec<u8>> {
    if !(hi > lo) {
        return Err(Error::invalid("PGM window must satisfy hi > lo"));
    }
    let mut out = format!("P5\n{} {}\n65535\n", x.width(), x.height()).into_bytes();
    for &v in x.data() {
        let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
        out.extend_from_slice(&((t * 65535.0).round() as u16).to_be_bytes());
    }
    Ok(out)
}

pub fn write_pgm16(path: &Path, x: &Image, lo: f64, hi: f64) -> Result<()> {
    write_atomic(path, &encode_pgm16(x, lo, hi)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tdv::init_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn field_round_trip_in_f32() {
        let data = (0..12).map(|i| Complex64::new(i as f64 * 0.5, -(i as f64))).collect();
        let x = ComplexField::from_vec(3, 2, 2, Domain::Kspace, data).unwrap();
        let bytes = encode_field(&x).unwrap();
        assert_eq!(&bytes[..8], b"CFLD0001");
        assert_eq!(decode_field(&bytes).unwrap(), x);
        assert!(decode_field(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_field(&bad).is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = init_params(&TdvConfig::desk(1), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let path = dir.path().join("m.tdvp");
        write_params(&path, &p).unwrap();
        let q = read_params(&path).unwrap();
        for (a, b) in p.flat().iter().zip(q.flat()) {
            assert_eq!(*a as f32 as f64, *b);
        }
        let d = WeightDistribution::from_mean(q.clone(), 0.03, 10.0).unwrap();
        let dpath = dir.path().join("m.tdvd");
        write_distribution(&dpath, &d).unwrap();
        let e = read_distribution(&dpath).unwrap();
        assert_eq!(e.mu(), d.mu());
        assert_eq!(e.blocks().len(), d.blocks().len());
        assert!(read_params(&dpath).is_err());
    }

    #[test]
    fn pgm_window() {
        let x = Image::from_vec(3, 1, vec![0.0, 0.01, 0.5]).unwrap();
        let b = encode_pgm16(&x, 0.0, 0.02).unwrap();
        let header = b"P5\n3 1\n65535\n";
        assert_eq!(&b[..header.len()], header);
        let px: Vec<u16> = b[header.len()..].chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
        assert_eq!(px, [0, 32768, 65535]);
    }
}
