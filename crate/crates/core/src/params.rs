//! Named parameter storage shared by every learnable module.
//!
//! Registration order is deterministic, which fixes checkpoint layout and
//! optimizer state alignment.

use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(&self) -> usize {
        self.0
    }

    pub fn from_index(i: usize) -> Self {
        ParamId(i)
    }
}

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    /// Frozen entries (e.g. the perceptual feature net) are stored and
    /// checkpointed but skipped by the optimizer.
    pub trainable: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> ParamId {
        self.entries.push(ParamEntry {
            name: name.into(),
            value,
            trainable,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn set(&mut self, id: ParamId, value: Tensor) {
        assert_eq!(
            self.entries[id.0].value.shape(),
            value.shape(),
            "parameter {} shape change",
            self.entries[id.0].name
        );
        self.entries[id.0].value = value;
    }

    pub fn entry(&self, index: usize) -> &ParamEntry {
        &self.entries[index]
    }

    pub fn entry_mut(&mut self, index: usize) -> &mut ParamEntry {
        &mut self.entries[index]
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries
            .iter()
            .position(|e| e.name == name)
            .map(ParamId)
    }

    /// Fan-in scaled uniform init for conv weights `[kh, kw, ci, co]`.
    pub fn conv_weight(
        &mut self,
        name: impl Into<String>,
        kh: usize,
        kw: usize,
        ci: usize,
        co: usize,
        rng: &mut Rng,
    ) -> ParamId {
        let a = 1.0 / ((kh * kw * ci) as f64).sqrt();
        let w = Tensor::uniform(&[kh, kw, ci, co], -a, a, rng);
        self.register(name, w, true)
    }

    /// Zero-initialized conv weight (residual-style heads).
    pub fn conv_weight_zero(
        &mut self,
        name: impl Into<String>,
        kh: usize,
        kw: usize,
        ci: usize,
        co: usize,
    ) -> ParamId {
        self.register(name, Tensor::zeros(&[kh, kw, ci, co]), true)
    }

    pub fn bias(&mut self, name: impl Into<String>, c: usize) -> ParamId {
        self.register(name, Tensor::zeros(&[c]), true)
    }

    /// Fan-in scaled matrix `[co, ci]` for fully-connected channel mixing.
    pub fn matrix(
        &mut self,
        name: impl Into<String>,
        co: usize,
        ci: usize,
        rng: &mut Rng,
    ) -> ParamId {
        let a = 1.0 / (ci as f64).sqrt();
        let m = Tensor::uniform(&[co, ci], -a, a, rng);
        self.register(name, m, true)
    }
}
