use crate::encoder::ParamSet;
use crate::error::{Error, Result};

/// `θ_k ← ε θ_k + (1 − ε) θ_q`, element by element.
pub fn momentum_update(key: &mut ParamSet, query: &ParamSet, momentum: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&momentum) {
        return Err(Error::contract(format!("momentum {momentum} outside [0, 1]")));
    }
    key.ensure_same_structure(query)?;
    let keep = 1.0 - momentum;
    for (k, q) in key.tensors_mut().zip(query.tensors()) {
        for (kv, qv) in k.data_mut().iter_mut().zip(q.data()) {
            *kv = momentum * *kv + keep * qv;
        }
    }
    Ok(())
}

/// Query/key parameter twins. The key copy only ever moves by EMA.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderPair {
    pub query: ParamSet,
    pub key: ParamSet,
    pub momentum: f64,
}

impl EncoderPair {
    /// Key starts as an exact copy of the query.
    pub fn new(query: ParamSet, momentum: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&momentum) {
            return Err(Error::contract(format!("momentum {momentum} outside [0, 1]")));
        }
        Ok(Self {
            key: query.clone(),
            query,
            momentum,
        })
    }

    pub fn momentum_update(&mut self) -> Result<()> {
        momentum_update(&mut self.key, &self.query, self.momentum)
    }
}
