use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Ordered, named parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) {
        self.entries.push((name.into(), value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    pub fn numel(&self) -> usize {
        self.tensors().map(Tensor::numel).sum()
    }

    /// True when names and shapes agree entry by entry.
    pub fn same_structure(&self, other: &ParamSet) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((na, ta), (nb, tb))| na == nb && ta.shape() == tb.shape())
    }

    pub fn ensure_same_structure(&self, other: &ParamSet) -> Result<()> {
        if self.same_structure(other) {
            Ok(())
        } else {
            Err(Error::contract("parameter sets differ in structure"))
        }
    }

    /// Registers every tensor on `tape`, returning handles in order.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> Result<Vec<Var>> {
        self.tensors().map(|t| tape.input(t.clone(), requires_grad)).collect()
    }

    /// Collects gradients for bound handles, zero where none reached.
    pub fn grads_from(&self, tape: &Tape, vars: &[Var]) -> Vec<Tensor> {
        self.tensors()
            .zip(vars)
            .map(|(t, v)| tape.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect()
    }

    /// Copy with every name prefixed by `prefix.`.
    pub fn prefixed(&self, prefix: &str) -> ParamSet {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (format!("{prefix}.{n}"), t.clone()))
                .collect(),
        }
    }

    /// Entries whose names start with `prefix.`, with the prefix removed.
    pub fn strip_prefix(&self, prefix: &str) -> ParamSet {
        let p = format!("{prefix}.");
        ParamSet {
            entries: self
                .entries
                .iter()
                .filter_map(|(n, t)| n.strip_prefix(&p).map(|s| (s.to_string(), t.clone())))
                .collect(),
        }
    }

    pub fn into_entries(self) -> Vec<(String, Tensor)> {
        self.entries
    }

    pub fn from_entries(entries: Vec<(String, Tensor)>) -> Self {
        Self { entries }
    }

    /// Little-endian bytes of every value, for exact comparisons.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.tensors()
            .flat_map(|t| t.data().iter().flat_map(|v| v.to_le_bytes()))
            .collect()
    }
}

/// Element-wise sum of gradient lists, accumulated in slice order.
pub fn accumulate(acc: &mut [Tensor], add: &[Tensor]) {
    for (a, b) in acc.iter_mut().zip(add) {
        for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
            *x += y;
        }
    }
}
