use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Tolerance on ‖v‖₂ − 1 accepted by [`MemoryQueue::push`].
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Fixed-capacity FIFO of unit-norm key latents.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryQueue {
    capacity: usize,
    dim: usize,
    slots: Vec<f64>,
    len: usize,
    /// Next slot to overwrite.
    cursor: usize,
    total_pushed: u64,
}

impl MemoryQueue {
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 || dim == 0 {
            return Err(Error::contract("queue capacity and dimension must be positive"));
        }
        Ok(Self {
            capacity,
            dim,
            slots: vec![0.0; capacity * dim],
            len: 0,
            cursor: 0,
            total_pushed: 0,
        })
    }

    /// A full queue of random unit vectors; not counted in [`Self::total_pushed`].
    pub fn random<R: Rng + ?Sized>(capacity: usize, dim: usize, rng: &mut R) -> Result<Self> {
        let mut q = Self::new(capacity, dim)?;
        for slot in q.slots.chunks_mut(dim) {
            loop {
                for v in slot.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let norm = slot.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    slot.iter_mut().for_each(|v| *v /= norm);
                    break;
                }
            }
        }
        q.len = capacity;
        Ok(q)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn total_pushed(&self) -> u64 {
        self.total_pushed
    }

    /// Appends in batch order, evicting the oldest entries beyond capacity.
    pub fn push(&mut self, batch: &[Vec<f64>]) -> Result<()> {
        for (i, v) in batch.iter().enumerate() {
            if v.len() != self.dim {
                return Err(Error::dim(format!("queue entry {i} has {} values, expected {}", v.len(), self.dim)));
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::contract(format!("queue entry {i} has norm {norm}, expected 1")));
            }
        }
        for v in batch {
            self.slots[self.cursor * self.dim..(self.cursor + 1) * self.dim].copy_from_slice(v);
            self.cursor = (self.cursor + 1) % self.capacity;
            self.len = (self.len + 1).min(self.capacity);
            self.total_pushed += 1;
        }
        Ok(())
    }

    /// Entries oldest first.
    pub fn entries(&self) -> Vec<Vec<f64>> {
        let start = (self.cursor + self.capacity - self.len) % self.capacity;
        (0..self.len)
            .map(|i| {
                let s = (start + i) % self.capacity;
                self.slots[s * self.dim..(s + 1) * self.dim].to_vec()
            })
            .collect()
    }

    /// `[len, d]` matrix of entries oldest first, or `None` when empty.
    pub fn negatives(&self) -> Option<Tensor> {
        if self.len == 0 {
            return None;
        }
        let data = self.entries().concat();
        Some(Tensor::matrix(self.len, self.dim, data).expect("non-empty"))
    }

    /// Raw slot storage plus `[len, cursor, total_pushed]` for checkpoints.
    pub fn to_tensors(&self) -> (Tensor, Tensor) {
        let slots = Tensor::matrix(self.capacity, self.dim, self.slots.clone()).expect("positive");
        let meta = Tensor::vector(vec![self.len as f64, self.cursor as f64, self.total_pushed as f64]);
        (slots, meta)
    }

    pub fn from_tensors(slots: &Tensor, meta: &Tensor) -> Result<Self> {
        if slots.rank() != 2 || meta.numel() != 3 {
            return Err(Error::dim("queue tensors have the wrong shape"));
        }
        let (capacity, dim) = (slots.rows(), slots.cols());
        let m = meta.data();
        let (len, cursor) = (m[0] as usize, m[1] as usize);
        if len > capacity || cursor >= capacity {
            return Err(Error::contract("queue metadata out of range"));
        }
        Ok(Self {
            capacity,
            dim,
            slots: slots.data().to_vec(),
            len,
            cursor,
            total_pushed: m[2] as u64,
        })
    }
}
