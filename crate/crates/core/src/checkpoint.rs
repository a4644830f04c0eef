//! Binary checkpoints: magic `CRND1`, a little-endian version word, the
//! config snapshot, the epoch counter, named f64 tensors and AdamW state.

use std::path::Path;

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::numerics::{AdamW, ParamStore, Tensor};

pub const MAGIC: &[u8; 5] = b"CRND1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    /// Number of completed epochs.
    pub epoch: u32,
    pub params: ParamStore,
    pub optimizer: AdamW,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.0.extend_from_slice(b);
    }

    fn tensor(&mut self, t: &Tensor) {
        self.u32(t.ndim() as u32);
        for &d in t.shape() {
            self.u64(d as u64);
        }
        for &v in t.data() {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated(what.to_string()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::invalid(format!("{what} is not UTF-8")))
    }

    fn tensor(&mut self, what: &str) -> Result<Tensor> {
        let ndim = self.u32(what)? as usize;
        if ndim > 8 {
            return Err(Error::invalid(format!("{what}: implausible rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(self.u64(what)? as usize);
        }
        let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let len = match len {
            Some(l) if l.checked_mul(8).is_some_and(|b| b <= self.buf.len() - self.pos) => l,
            _ => return Err(Error::Truncated(what.to_string())),
        };
        let data = self.take(len * 8, what)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Tensor::from_vec(&shape, data)
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.bytes(self.config.to_text().as_bytes());
        w.u32(self.epoch);
        w.u32(self.params.len() as u32);
        for (name, p) in self.params.iter() {
            w.bytes(name.as_bytes());
            w.tensor(&p.value);
        }
        let o = &self.optimizer;
        w.u64(o.step);
        for v in [o.lr, o.beta1, o.beta2, o.eps, o.weight_decay] {
            w.f64(v);
        }
        for t in o.first_moments.iter().chain(&o.second_moments) {
            w.tensor(t);
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::BadMagic);
        }
        let mut r = Reader {
            buf: bytes,
            pos: MAGIC.len(),
        };
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let config = TrainConfig::from_text(&r.string("config")?)?;
        let epoch = r.u32("epoch")?;
        let count = r.u32("parameter count")? as usize;
        let mut params = ParamStore::new();
        for i in 0..count {
            let name = r.string(&format!("parameter {i} name"))?;
            let value = r.tensor(&name)?;
            params.insert(&name, value)?;
        }
        let step = r.u64("optimizer step")?;
        let mut hyper = [0.0; 5];
        for h in hyper.iter_mut() {
            *h = r.f64("optimizer hyperparameters")?;
        }
        let [lr, beta1, beta2, eps, weight_decay] = hyper;
        let mut moments = Vec::with_capacity(2 * count);
        for i in 0..2 * count {
            let t = r.tensor("optimizer moments")?;
            let (_, p) = params.iter().nth(i % count).expect("index below count");
            t.expect_shape("optimizer moment", p.value.shape())?;
            moments.push(t);
        }
        if r.pos != bytes.len() {
            return Err(Error::invalid(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
        }
        let second_moments = moments.split_off(count);
        Ok(Self {
            config,
            epoch,
            params,
            optimizer: AdamW {
                lr,
                beta1,
                beta2,
                eps,
                weight_decay,
                step,
                first_moments: moments,
                second_moments,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
