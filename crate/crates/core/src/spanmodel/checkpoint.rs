//! Binary checkpoint layout, all integers and floats little-endian:
//!
//! ```text
//! magic   8 bytes  "TTLQA-CK"
//! version u32      1
//! d, V, P_max      u32 each
//! seed    u64
//! vocab   V × (u32 byte length, UTF-8 bytes)
//! params  E, P, W_start, W_stop, b_start, b_stop as f64
//! optim   u8 flag; if 1: step u64, lr, β1, β2, ε f64, then the first and
//!         second moments in parameter order
//! ```

use std::fs;
use std::path::Path;

use super::{Adam, ModelConfig, Params, SpanModel, Vocabulary};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"TTLQA-CK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: SpanModel,
    pub optim: Option<Adam>,
}

impl Checkpoint {
    pub fn check_config(&self, cfg: ModelConfig) -> Result<()> {
        let have = self.model.config();
        if have != cfg {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint has d = {}, P_max = {}; configuration asks for d = {}, P_max = {}",
                have.d, have.pmax, cfg.d, cfg.pmax
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.model;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for n in [m.d, m.vocab.len(), m.pmax] {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        out.extend_from_slice(&m.seed.to_le_bytes());
        for w in m.vocab.words() {
            out.extend_from_slice(&(w.len() as u32).to_le_bytes());
            out.extend_from_slice(w.as_bytes());
        }
        put_params(&mut out, &m.params);
        match &self.optim {
            None => out.push(0),
            Some(opt) => {
                out.push(1);
                out.extend_from_slice(&opt.step.to_le_bytes());
                for x in [opt.lr, opt.beta1, opt.beta2, opt.eps] {
                    out.extend_from_slice(&x.to_le_bytes());
                }
                put_params(&mut out, &opt.m);
                put_params(&mut out, &opt.v);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::BadCheckpoint("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::BadCheckpoint(format!("unsupported version {version}")));
        }
        let d = r.u32()? as usize;
        let v = r.u32()? as usize;
        let pmax = r.u32()? as usize;
        let seed = r.u64()?;
        let mut words = Vec::with_capacity(v);
        for _ in 0..v {
            let len = r.u32()? as usize;
            let raw = r.take(len)?;
            let w =
                std::str::from_utf8(raw).map_err(|_| Error::BadCheckpoint("vocabulary entry is not UTF-8".into()))?;
            words.push(w.to_string());
        }
        let vocab = Vocabulary::from_words(words)?;
        let shape = Params::zeros(v, d, pmax);
        let params = r.params(&shape)?;
        let optim = match r.take(1)?[0] {
            0 => None,
            1 => {
                let step = r.u64()?;
                let [lr, beta1, beta2, eps] = [r.f64()?, r.f64()?, r.f64()?, r.f64()?];
                let m = r.params(&shape)?;
                let v = r.params(&shape)?;
                Some(Adam {
                    lr,
                    beta1,
                    beta2,
                    eps,
                    step,
                    m,
                    v,
                })
            }
            f => return Err(Error::BadCheckpoint(format!("bad optimizer flag {f}"))),
        };
        if r.at != bytes.len() {
            return Err(Error::BadCheckpoint(format!("{} trailing bytes", bytes.len() - r.at)));
        }
        Ok(Checkpoint {
            model: SpanModel {
                vocab,
                d,
                pmax,
                seed,
                params,
            },
            optim,
        })
    }
}

fn put_params(out: &mut Vec<u8>, p: &Params) {
    for t in p.tensors() {
        for x in t {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::BadCheckpoint("truncated file".into()));
        };
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn params(&mut self, shape: &Params) -> Result<Params> {
        let mut p = shape.zeros_like();
        for t in p.tensors_mut() {
            for x in t.iter_mut() {
                *x = self.f64()?;
            }
        }
        Ok(p)
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &SpanModel, optim: Option<&Adam>) -> Result<()> {
    let path = path.as_ref();
    let ck = Checkpoint {
        model: model.clone(),
        optim: optim.cloned(),
    };
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, ck.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes).map_err(|e| match e {
        Error::BadCheckpoint(msg) => Error::BadCheckpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}
