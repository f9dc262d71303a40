//! Resumable training state stored as a `TDVC` container with 64-bit
//! payload: parameters, covariance blocks, and both ADAM moment pairs.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::TriBlock;
use crate::io::{decode_container, encode_container, f64_bytes, parse_f64, write_atomic, CHECKPOINT_MAGIC};
use crate::tdv::{TdvConfig, TdvParams};

use super::adam::Adam;
use super::config::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    Deterministic,
    Stochastic,
}

/// Exact position of a ChaCha stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// Decimal `u128` word position.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::from_seed(self.seed);
        r.set_stream(self.stream);
        r.set_word_pos(self.word_pos.parse().expect("validated word position"));
        r
    }

    fn validate(&self) -> Result<()> {
        self.word_pos
            .parse::<u128>()
            .map(|_| ())
            .map_err(|_| Error::Format("bad rng word position".into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub iteration: usize,
    pub config: TrainConfig,
    /// Parameters (deterministic) or the mean `μ` (stochastic).
    pub params: TdvParams,
    pub blocks: Vec<TriBlock>,
    pub alpha: Option<f64>,
    pub adam_params: Adam,
    pub adam_blocks: Option<Adam>,
    pub data_rng: RngState,
    pub draw_rng: Option<RngState>,
}

#[derive(Serialize, Deserialize)]
struct AdamHeader {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    len: usize,
}

impl AdamHeader {
    fn of(a: &Adam) -> Self {
        AdamHeader {
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            t: a.t,
            len: a.len(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    kind: CheckpointKind,
    iteration: usize,
    config: TrainConfig,
    tdv: TdvConfig,
    alpha: Option<f64>,
    block_dims: Vec<usize>,
    adam_params: AdamHeader,
    adam_blocks: Option<AdamHeader>,
    data_rng: RngState,
    draw_rng: Option<RngState>,
    dtype: String,
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: self.kind,
            iteration: self.iteration,
            config: self.config.clone(),
            tdv: self.params.config().clone(),
            alpha: self.alpha,
            block_dims: self.blocks.iter().map(|b| b.dim()).collect(),
            adam_params: AdamHeader::of(&self.adam_params),
            adam_blocks: self.adam_blocks.as_ref().map(AdamHeader::of),
            data_rng: self.data_rng.clone(),
            draw_rng: self.draw_rng.clone(),
            dtype: "f64le".into(),
        };
        let mut values: Vec<f64> = self.params.flat().to_vec();
        for b in &self.blocks {
            values.extend_from_slice(b.packed());
        }
        values.extend_from_slice(&self.adam_params.m);
        values.extend_from_slice(&self.adam_params.v);
        if let Some(a) = &self.adam_blocks {
            values.extend_from_slice(&a.m);
            values.extend_from_slice(&a.v);
        }
        encode_container(CHECKPOINT_MAGIC, &header, &f64_bytes(values))
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (h, payload): (Header, _) = decode_container(CHECKPOINT_MAGIC, bytes)?;
        if h.dtype != "f64le" {
            return Err(Error::Format(format!("unsupported checkpoint dtype {}", h.dtype)));
        }
        h.tdv.validate()?;
        h.config.validate()?;
        h.data_rng.validate()?;
        if let Some(d) = &h.draw_rng {
            d.validate()?;
        }
        let p_len = crate::tdv::Layout::new(&h.tdv).len;
        let tri: usize = h.block_dims.iter().map(|d| d * (d + 1) / 2).sum();
        let ab_len = h.adam_blocks.as_ref().map_or(0, |a| a.len);
        if h.adam_params.len != p_len {
            return Err(Error::Format("optimizer state does not match the layout".into()));
        }
        let v = parse_f64(&payload, p_len + tri + 2 * p_len + 2 * ab_len)?;
        let mut off = 0;
        let mut take = |n: usize| {
            let s = v[off..off + n].to_vec();
            off += n;
            s
        };
        let params = TdvParams::from_flat(h.tdv, take(p_len))?;
        let mut blocks = Vec::with_capacity(h.block_dims.len());
        for &d in &h.block_dims {
            blocks.push(TriBlock::from_packed(d, take(d * (d + 1) / 2))?);
        }
        let adam = |hdr: &AdamHeader, m: Vec<f64>, v: Vec<f64>| Adam {
            beta1: hdr.beta1,
            beta2: hdr.beta2,
            eps: hdr.eps,
            m,
            v,
            t: hdr.t,
        };
        let adam_params = adam(&h.adam_params, take(p_len), take(p_len));
        let adam_blocks = h.adam_blocks.as_ref().map(|a| adam(a, take(ab_len), take(ab_len)));
        Ok(Checkpoint {
            kind: h.kind,
            iteration: h.iteration,
            config: h.config,
            params,
            blocks,
            alpha: h.alpha,
            adam_params,
            adam_blocks,
            data_rng: h.data_rng,
            draw_rng: h.draw_rng,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Checkpoint::decode(&std::fs::read(path)?)
    }
}
