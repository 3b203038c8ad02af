use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// `−log softmax([z_q·z_k, z_q·n₁, …] / τ)[0]` with both latents
/// ℓ2-normalized first. `negatives` rows are treated as constants.
pub fn infonce_loss(tape: &mut Tape, zq: Var, zk: Var, negatives: Option<&Tensor>, tau: f64) -> Result<Var> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::contract(format!("temperature must be positive, got {tau}")));
    }
    let d = tape.value(zq).numel();
    if tape.value(zk).numel() != d {
        return Err(Error::dim("query and key latents differ in length"));
    }
    let q = tape.l2_normalize(zq)?;
    let k = tape.l2_normalize(zk)?;
    let pos = tape.dot(q, k)?;
    let logits = match negatives {
        Some(neg) => {
            if neg.rank() != 2 || neg.cols() != d {
                return Err(Error::dim(format!(
                    "negatives {:?} do not match latent dimension {d}",
                    neg.shape()
                )));
            }
            let bank = tape.constant(neg.clone())?;
            let col = tape.reshape(q, &[d, 1])?;
            let sims = tape.matmul(bank, col)?;
            tape.concat(&[pos, sims])?
        }
        None => pos,
    };
    let scaled = tape.scale(logits, 1.0 / tau)?;
    let logp = tape.log_softmax(scaled)?;
    let first = tape.select(logp, 0)?;
    tape.scale(first, -1.0)
}

/// `Σᵢ −½(1 + log σ²ᵢ − σ²ᵢ − μᵢ²)`, the KL divergence to `N(0, I)`.
pub fn kl_loss(tape: &mut Tape, mu: Var, logvar: Var) -> Result<Var> {
    if tape.value(mu).shape() != tape.value(logvar).shape() {
        return Err(Error::dim("μ and log σ² differ in shape"));
    }
    let var = tape.exp(logvar)?;
    let mu2 = tape.mul(mu, mu)?;
    let a = tape.sub(logvar, var)?;
    let b = tape.sub(a, mu2)?;
    let c = tape.add_scalar(b, 1.0)?;
    let s = tape.sum(c)?;
    tape.scale(s, -0.5)
}

/// Handles of the objective and its parts.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub infonce: Var,
    pub kl_q: Option<Var>,
    pub kl_k: Option<Var>,
}

/// Values of [`LossTerms`] read back from a tape.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossValues {
    pub total: f64,
    pub infonce: f64,
    pub kl_q: f64,
    pub kl_k: f64,
}

impl LossTerms {
    pub fn values(&self, tape: &Tape) -> LossValues {
        let v = |x: Option<Var>| x.map_or(0.0, |x| tape.value(x).item());
        LossValues {
            total: tape.value(self.total).item(),
            infonce: tape.value(self.infonce).item(),
            kl_q: v(self.kl_q),
            kl_k: v(self.kl_k),
        }
    }
}

/// Gaussian parameters of one branch.
#[derive(Clone, Copy, Debug)]
pub struct Branch {
    pub z: Var,
    pub mu: Var,
    pub logvar: Var,
}

/// InfoNCE plus the KL of both branches. The key-branch KL is computed on
/// detached copies: it enters the value but passes no gradient.
pub fn total_loss(tape: &mut Tape, query: Branch, key: Branch, negatives: Option<&Tensor>, tau: f64) -> Result<LossTerms> {
    let infonce = infonce_loss(tape, query.z, key.z, negatives, tau)?;
    let kl_q = kl_loss(tape, query.mu, query.logvar)?;
    let mu_k = tape.detach(key.mu)?;
    let lv_k = tape.detach(key.logvar)?;
    let kl_k = kl_loss(tape, mu_k, lv_k)?;
    let partial = tape.add(infonce, kl_q)?;
    let total = tape.add(partial, kl_k)?;
    Ok(LossTerms {
        total,
        infonce,
        kl_q: Some(kl_q),
        kl_k: Some(kl_k),
    })
}
