//! Versioned binary checkpoints: the full training config (text), every
//! parameter tensor by name, the actnorm initialization flags, and an
//! optional training state (iteration plus optimizer moments). All integers
//! and floats are little-endian.

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::pipeline::Pipeline;
use crate::tensor::Tensor;
use std::fs;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"VFCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct TrainState {
    pub iteration: u64,
    pub adam_step: u64,
    pub adam_m: Vec<Tensor>,
    pub adam_v: Vec<Tensor>,
}

impl TrainState {
    pub fn from_adam(iteration: u64, adam: &Adam) -> Self {
        TrainState {
            iteration,
            adam_step: adam.step,
            adam_m: adam.m.clone(),
            adam_v: adam.v.clone(),
        }
    }

    pub fn into_adam(self) -> (u64, Adam) {
        (
            self.iteration,
            Adam::from_state(self.adam_step, self.adam_m, self.adam_v),
        )
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    fn tensor(&mut self, t: &Tensor) {
        self.u32(t.shape().len() as u32);
        for &d in t.shape() {
            self.u64(d as u64);
        }
        self.f64s(t.data());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format("checkpoint truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn tensor(&mut self) -> Result<Tensor> {
        let ndim = self.u32()? as usize;
        if ndim > 8 {
            return Err(Error::format(format!("implausible tensor rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(self.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        if numel > (1 << 30) {
            return Err(Error::format("implausible tensor size"));
        }
        Ok(Tensor::from_vec(&shape, self.f64s(numel)?))
    }
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    cfg: &TrainConfig,
    pipeline: &Pipeline,
    state: Option<&TrainState>,
) -> Result<()> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    let cfg_text = cfg.to_text();
    w.u64(cfg_text.len() as u64);
    w.bytes(cfg_text.as_bytes());
    w.u64(pipeline.store.len() as u64);
    for e in pipeline.store.entries() {
        w.u32(e.name.len() as u32);
        w.bytes(e.name.as_bytes());
        w.u8(e.trainable as u8);
        w.tensor(&e.value);
    }
    let flags = &pipeline.generator.actnorm_initialized;
    w.u64(flags.len() as u64);
    for &f in flags {
        w.u8(f as u8);
    }
    match state {
        Some(s) => {
            w.u8(1);
            w.u64(s.iteration);
            w.u64(s.adam_step);
            for t in &s.adam_m {
                w.tensor(t);
            }
            for t in &s.adam_v {
                w.tensor(t);
            }
        }
        None => w.u8(0),
    }
    fs::write(path, w.buf)?;
    Ok(())
}

pub fn load_checkpoint(
    path: impl AsRef<Path>,
) -> Result<(TrainConfig, Pipeline, Option<TrainState>)> {
    let bytes = fs::read(path.as_ref()).map_err(|e| {
        Error::format(format!(
            "cannot read checkpoint {}: {e}",
            path.as_ref().display()
        ))
    })?;
    let mut r = Reader::new(&bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::format("not a checkpoint file (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(format!(
            "unsupported checkpoint version {version}, expected {VERSION}"
        )));
    }
    let cfg_len = r.u64()? as usize;
    let cfg_text = std::str::from_utf8(r.take(cfg_len)?)
        .map_err(|_| Error::format("checkpoint config is not utf-8"))?;
    let cfg = TrainConfig::from_text(cfg_text)?;
    let mut pipeline = Pipeline::new(cfg.model.clone(), cfg.seed)?;
    let n_params = r.u64()? as usize;
    if n_params != pipeline.store.len() {
        return Err(Error::format(format!(
            "checkpoint has {n_params} parameters, model defines {}",
            pipeline.store.len()
        )));
    }
    for idx in 0..n_params {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::format("parameter name is not utf-8"))?
            .to_string();
        let trainable = r.u8()? != 0;
        let value = r.tensor()?;
        let entry = pipeline.store.entry(idx);
        if entry.name != name {
            return Err(Error::format(format!(
                "parameter order mismatch: file has `{name}`, model expects `{}`",
                entry.name
            )));
        }
        if entry.value.shape() != value.shape() {
            return Err(Error::format(format!(
                "parameter `{name}` has shape {:?} in file, {:?} in model",
                value.shape(),
                entry.value.shape()
            )));
        }
        if entry.trainable != trainable {
            return Err(Error::format(format!(
                "parameter `{name}` trainable flag mismatch"
            )));
        }
        pipeline.store.entry_mut(idx).value = value;
    }
    let n_flags = r.u64()? as usize;
    if n_flags != pipeline.generator.actnorm_initialized.len() {
        return Err(Error::format("actnorm flag count mismatch"));
    }
    for i in 0..n_flags {
        pipeline.generator.actnorm_initialized[i] = r.u8()? != 0;
    }
    let state = if r.u8()? == 1 {
        let iteration = r.u64()?;
        let adam_step = r.u64()?;
        let mut adam_m = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            adam_m.push(r.tensor()?);
        }
        let mut adam_v = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            adam_v.push(r.tensor()?);
        }
        Some(TrainState {
            iteration,
            adam_step,
            adam_m,
            adam_v,
        })
    } else {
        None
    };
    Ok((cfg, pipeline, state))
}
