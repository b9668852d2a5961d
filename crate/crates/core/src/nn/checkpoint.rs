//! Versioned binary container of named tensors plus optional Adam state.
//!
//! Layout (little-endian): magic `MIEVCKPT`, `u32` version, `u8` dtype,
//! `u32` metadata length + UTF-8 metadata, `u32` tensor count, then per
//! tensor `u32` name length + name, `u32` rank, `u64` dims, raw values;
//! finally `u8` optimizer flag and, when set, `f64` lr/beta1/beta2/eps,
//! `u64` step, `u32` slot count and per slot the first then second moments.

use crate::error::{Error, Result};
use crate::nn::adam::{AdamConfig, AdamState};
use crate::nn::real::Real;
use crate::nn::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"MIEVCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub metadata: String,
    pub tensors: Vec<(String, Tensor<T>)>,
    pub optimizer: Option<AdamState<T>>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'b> {
    bytes: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut a = [0u8; 8];
        a.copy_from_slice(self.take(8)?);
        Ok(u64::from_le_bytes(a))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    fn values<T: Real>(&mut self, n: usize) -> Result<Vec<T>> {
        let raw = self.take(n * T::BYTES)?;
        Ok(raw.chunks_exact(T::BYTES).map(T::read_le).collect())
    }
}

impl<T: Real> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        out.push(T::DTYPE as u8);
        put_u32(&mut out, self.metadata.len() as u32);
        out.extend_from_slice(self.metadata.as_bytes());
        put_u32(&mut out, self.tensors.len() as u32);
        for (name, t) in &self.tensors {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.shape().len() as u32);
            for &d in t.shape() {
                put_u64(&mut out, d as u64);
            }
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
        match &self.optimizer {
            None => out.push(0),
            Some(st) => {
                out.push(1);
                for v in [st.config.lr, st.config.beta1, st.config.beta2, st.config.eps] {
                    put_u64(&mut out, v.to_bits());
                }
                put_u64(&mut out, st.t);
                put_u32(&mut out, st.m.len() as u32);
                for (m, v) in st.m.iter().zip(&st.v) {
                    put_u64(&mut out, m.len() as u64);
                    m.iter().chain(v).for_each(|&x| x.write_le(&mut out));
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let dtype = r.u8()?;
        if dtype != T::DTYPE as u8 {
            return Err(Error::Checkpoint(format!(
                "stored dtype tag {dtype} does not match requested {:?}",
                T::DTYPE
            )));
        }
        let metadata = r.string()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = r.values(n)?;
            tensors.push((name, Tensor::new(shape, data)?));
        }
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let config = AdamConfig {
                    lr: r.f64()?,
                    beta1: r.f64()?,
                    beta2: r.f64()?,
                    eps: r.f64()?,
                };
                let t = r.u64()?;
                let slots = r.u32()? as usize;
                let (mut m, mut v) = (Vec::with_capacity(slots), Vec::with_capacity(slots));
                for _ in 0..slots {
                    let n = r.u64()? as usize;
                    m.push(r.values(n)?);
                    v.push(r.values(n)?);
                }
                Some(AdamState { config, t, m, v })
            }
            other => return Err(Error::Checkpoint(format!("bad optimizer flag {other}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint {
            metadata,
            tensors,
            optimizer,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_exact() {
        let ck = Checkpoint::<f32> {
            metadata: "{\"role\":\"anatomical\"}".into(),
            tensors: vec![
                ("a.weight".into(), Tensor::new(vec![2, 3], vec![0.1, -2.5, 3.0e-9, 7.0, f32::MIN_POSITIVE, 1e30]).unwrap()),
                ("a.bias".into(), Tensor::new(vec![2], vec![0.0, -0.0]).unwrap()),
            ],
            optimizer: Some(AdamState {
                config: AdamConfig::default(),
                t: 17,
                m: vec![vec![0.5; 6], vec![1.0, 2.0]],
                v: vec![vec![0.25; 6], vec![3.0, 4.0]],
            }),
        };
        let bytes = ck.to_bytes();
        let back = Checkpoint::<f32>::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
        assert!(Checkpoint::<f64>::from_bytes(&bytes).is_err());
        assert!(Checkpoint::<f32>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
