//! Binary checkpoint format, little-endian:
//!
//! ```text
//! "LCNN1" | version u32 | head u8 | dim count u8 | dims u32[] | params f32[] (row-major weights
//! then bias, per layer) | adam flag u8 [step u64 | lr β1 β2 ε f32 | m f32[] | v f32[]] |
//! metadata length u32 | metadata UTF-8 (JSON)
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, DenseNet, Head, LearnError};
use crate::dataset::PreprocStats;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"LCNN1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub experiment: String,
    pub iteration: u64,
    pub eval_score: Option<f64>,
    /// Input transform the network was trained with.
    #[serde(default)]
    pub preproc: PreprocStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub head: Head,
    pub dims: Vec<usize>,
    pub params: Vec<f32>,
    pub adam: Option<AdamState<f32>>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn from_net(net: &DenseNet<f32>, adam: Option<&AdamState<f32>>, meta: CheckpointMeta) -> Self {
        Checkpoint {
            head: net.head,
            dims: net.dims.clone(),
            params: net.to_flat(),
            adam: adam.cloned(),
            meta,
        }
    }

    pub fn net(&self) -> Result<DenseNet<f32>, LearnError> {
        DenseNet::from_flat(&self.dims, self.head, &self.params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 4 * self.params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(match self.head {
            Head::Policy => 0,
            Head::Value => 1,
        });
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        put_f32s(&mut out, &self.params);
        match &self.adam {
            None => out.push(0),
            Some(a) => {
                out.push(1);
                out.extend_from_slice(&a.step.to_le_bytes());
                put_f32s(&mut out, &[a.lr, a.beta1, a.beta2, a.eps]);
                put_f32s(&mut out, &a.m);
                put_f32s(&mut out, &a.v);
            }
        }
        let meta = serde_json::to_string(&self.meta).expect("metadata serializes");
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, LearnError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(5)? != CHECKPOINT_MAGIC {
            return Err(LearnError::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(LearnError::Format(format!("unsupported version {version}")));
        }
        let head = match r.u8()? {
            0 => Head::Policy,
            1 => Head::Value,
            h => return Err(LearnError::Format(format!("unknown head kind {h}"))),
        };
        let count = r.u8()? as usize;
        let dims = (0..count).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if dims.len() < 2 || dims.contains(&0) {
            return Err(LearnError::Format(format!("invalid dims {dims:?}")));
        }
        let n: usize = dims.windows(2).map(|d| d[0] * d[1] + d[1]).sum();
        let params = r.f32s(n)?;
        let adam = match r.u8()? {
            0 => None,
            1 => {
                let step = r.u64()?;
                let h = r.f32s(4)?;
                Some(AdamState { lr: h[0], beta1: h[1], beta2: h[2], eps: h[3], step, m: r.f32s(n)?, v: r.f32s(n)? })
            }
            f => return Err(LearnError::Format(format!("bad adam flag {f}"))),
        };
        let len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(len)?).map_err(|e| LearnError::Format(e.to_string()))?;
        let meta = serde_json::from_str(text).map_err(|e| LearnError::Format(format!("metadata: {e}")))?;
        if r.pos != bytes.len() {
            return Err(LearnError::Format("trailing bytes".into()));
        }
        Ok(Checkpoint { head, dims, params, adam, meta })
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, LearnError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LearnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| LearnError::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, LearnError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, LearnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, LearnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, LearnError> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| LearnError::Format("size overflow".into()))?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = DenseNet::<f32>::new(&[244, 8, 145], Head::Policy, &mut rng);
        let mut adam = AdamState::for_net(&net, 0.001);
        adam.step = 7;
        adam.m.iter_mut().enumerate().for_each(|(i, m)| *m = i as f32 * 1e-3);
        let meta = CheckpointMeta { experiment: "MD-F-NP".into(), iteration: 64, eval_score: Some(0.424), ..Default::default() };
        Checkpoint::from_net(&net, Some(&adam), meta)
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.meta.experiment, "MD-F-NP");
        let a: Vec<u32> = ck.params.iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = back.params.iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncation_and_magic_are_detected() {
        let bytes = sample().to_bytes();
        for cut in [0, 4, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(LearnError::Format(_))), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(LearnError::Format(_))));
        let mut bad = bytes.clone();
        bad[5] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(LearnError::Format(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
