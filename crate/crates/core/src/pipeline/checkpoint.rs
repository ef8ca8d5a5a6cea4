//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "ADCPCKPT" | version u32
//! config: c, c3d, c_dop, n, d_max, dic_width (u32 each), offsets u8, stage2 u8
//! iteration u64
//! rng: seed [u8; 32], stream u64, word_pos u128
//! params: count u32, then per tensor: name (u32 len + utf-8), rank u32,
//!         dims u32 * rank, f32 * numel
//! optimizer: present u8; if 1: step u64, then m and v payloads (f32) in
//!            parameter order
//! crc32 of everything above, u32
//! ```

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use super::model::{Model, ModelConfig, OffsetMode, Stage2Mode, Variant};
use super::optim::AdamState;
use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"ADCPCKPT";
pub const VERSION: u32 = 1;

/// Position of a ChaCha8 stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamStore<f32>,
    pub optimizer: Option<AdamState>,
    pub iteration: u64,
    pub rng: RngState,
}

impl Checkpoint {
    /// Inference-only checkpoint of `model`.
    pub fn of_model(model: &Model) -> Self {
        use rand::SeedableRng;
        Checkpoint {
            config: model.config.clone(),
            params: model.params.clone(),
            optimizer: None,
            iteration: 0,
            rng: RngState::capture(&ChaCha8Rng::seed_from_u64(0)),
        }
    }

    /// Rebuilds the model; names and shapes must match the configured layout.
    pub fn model(&self) -> Result<Model> {
        let mut model = Model::new(self.config.clone(), 0)?;
        let named = self.params.iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
        model.params.assign(named).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        let c = &self.config;
        for v in [c.c, c.c3d, c.c_dop, c.n, c.d_max, c.dic_width] {
            put_u32(&mut out, v as u32);
        }
        out.push(match c.variant.offsets {
            OffsetMode::Constant => 0,
            OffsetMode::Dop => 1,
        });
        out.push(match c.variant.stage2 {
            Stage2Mode::Conv3d => 0,
            Stage2Mode::Dic => 1,
        });
        out.extend_from_slice(&self.iteration.to_le_bytes());
        out.extend_from_slice(&self.rng.seed);
        out.extend_from_slice(&self.rng.stream.to_le_bytes());
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        put_u32(&mut out, self.params.len() as u32);
        for (name, t) in self.params.iter() {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.rank() as u32);
            for &d in t.shape() {
                put_u32(&mut out, d as u32);
            }
            put_f32s(&mut out, t.data());
        }
        match &self.optimizer {
            None => out.push(0),
            Some(s) => {
                out.push(1);
                out.extend_from_slice(&s.step.to_le_bytes());
                for t in s.m.iter().chain(&s.v) {
                    put_f32s(&mut out, t.data());
                }
            }
        }
        let crc = crc32fast::hash(&out);
        put_u32(&mut out, crc);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(Error::Checkpoint("checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {VERSION})"
            )));
        }
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let offsets = match r.u8()? {
            0 => OffsetMode::Constant,
            1 => OffsetMode::Dop,
            v => return Err(Error::Checkpoint(format!("bad offset mode {v}"))),
        };
        let stage2 = match r.u8()? {
            0 => Stage2Mode::Conv3d,
            1 => Stage2Mode::Dic,
            v => return Err(Error::Checkpoint(format!("bad stage-2 mode {v}"))),
        };
        let config = ModelConfig {
            c: dims[0],
            c3d: dims[1],
            c_dop: dims[2],
            n: dims[3],
            d_max: dims[4],
            dic_width: dims[5],
            variant: Variant::new(offsets, stage2),
        };
        config.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        let iteration = r.u64()?;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
        let count = r.u32()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Checkpoint("parameter name is not utf-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let t = r.tensor(&shape)?;
            params.add(name, t);
        }
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let step = r.u64()?;
                let shapes: Vec<Vec<usize>> = params.tensors().iter().map(|t| t.shape().to_vec()).collect();
                let m = shapes.iter().map(|s| r.tensor(s)).collect::<Result<Vec<_>>>()?;
                let v = shapes.iter().map(|s| r.tensor(s)).collect::<Result<Vec<_>>>()?;
                Some(AdamState { step, m, v })
            }
            v => return Err(Error::Checkpoint(format!("bad optimizer flag {v}"))),
        };
        if r.pos != body.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", body.len() - r.pos)));
        }
        Ok(Checkpoint {
            config,
            params,
            optimizer,
            iteration,
            rng: RngState { seed, stream, word_pos },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, data: &[f32]) {
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn tensor(&mut self, shape: &[usize]) -> Result<Tensor<f32>> {
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| Error::Checkpoint("tensor too large".into()))?;
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Tensor::new(shape, data).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let config = ModelConfig {
            c: 1,
            c3d: 2,
            c_dop: 2,
            n: 3,
            d_max: 32,
            dic_width: 4,
            variant: Variant::ALL[3],
        };
        let model = Model::new(config, 3).unwrap();
        let mut ck = Checkpoint::of_model(&model);
        let mut st = AdamState::zeros_like(&model.params);
        st.step = 17;
        st.m[0].data_mut()[0] = 0.25;
        ck.optimizer = Some(st);
        ck.iteration = 17;
        ck
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), ck.to_bytes());
    }

    #[test]
    fn corruption_and_version_skew_are_detected() {
        let bytes = sample().to_bytes();
        let mut bad = bytes.clone();
        bad[200] ^= 1;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Checkpoint(m)) if m.contains("checksum")));

        let mut skew = bytes.clone();
        skew[8] = 2;
        let n = skew.len() - 4;
        let crc = crc32fast::hash(&skew[..n]);
        skew[n..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(Checkpoint::from_bytes(&skew), Err(Error::Checkpoint(m)) if m.contains("version")));

        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 9]).is_err());
        assert!(Checkpoint::from_bytes(b"nope").is_err());
    }

    #[test]
    fn rng_state_resumes_the_stream() {
        use rand::{Rng, SeedableRng};
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let _: [u64; 5] = a.gen();
        let mut b = RngState::capture(&a).restore();
        assert_eq!(a.gen::<u64>(), b.gen::<u64>());
    }
}
