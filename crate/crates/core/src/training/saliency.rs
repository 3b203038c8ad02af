use super::checkpoint::CheckpointBundle;
use super::downstream::classifier_forward;
use super::pipeline::Pipeline;
use super::pretrain::checkpoint_encoder;
use crate::data::SkeletonSequence;
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor};

/// Grad-CAM over a `[T'·N, C]` activation and its gradient, upsampled to
/// `frames × joints` by nearest frame and scaled so the maximum is 1.
pub fn grad_cam(activation: &Tensor, grad: &Tensor, joints: usize, frames: usize) -> Result<Vec<Vec<f64>>> {
    if activation.shape() != grad.shape() || activation.rank() != 2 || joints == 0 || activation.rows() % joints != 0 {
        return Err(Error::dim(format!(
            "activation {:?} and gradient {:?} must be equal [T'·{joints}, C] matrices",
            activation.shape(),
            grad.shape()
        )));
    }
    let (rows, c) = (activation.rows(), activation.cols());
    let t_out = rows / joints;
    let mut weights = vec![0.0; c];
    for r in 0..rows {
        for (k, w) in weights.iter_mut().enumerate() {
            *w += grad.data()[r * c + k];
        }
    }
    for w in &mut weights {
        *w /= rows as f64;
    }
    let cam: Vec<f64> = (0..rows)
        .map(|r| {
            let a = &activation.data()[r * c..(r + 1) * c];
            a.iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>().max(0.0)
        })
        .collect();
    let peak = cam.iter().cloned().fold(0.0, f64::max);
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    Ok((0..frames)
        .map(|t| {
            let src = (t * t_out / frames).min(t_out - 1);
            (0..joints).map(|j| cam[src * joints + j] * scale).collect()
        })
        .collect())
}

/// `T × N` importance of every joint for `target_class`.
pub fn joint_saliency(
    checkpoint: &CheckpointBundle,
    encoder: &Encoder,
    pipeline: &Pipeline,
    sample: &SkeletonSequence,
    target_class: usize,
) -> Result<Vec<Vec<f64>>> {
    let params = checkpoint_encoder(checkpoint)?;
    encoder.check_params(&params)?;
    let cls = checkpoint.params("cls");
    if cls.len() != 2 {
        return Err(Error::contract("saliency needs a checkpoint with a trained classifier"));
    }
    let n_classes = cls.tensor(1).numel();
    if target_class >= n_classes {
        return Err(Error::contract(format!("target class {target_class} ≥ {n_classes} classes")));
    }
    let mut t = Tape::new();
    let x = t.constant(pipeline.plain(sample)?)?;
    let b = params.bind(&mut t, true)?;
    let cb = cls.bind(&mut t, true)?;
    let out = encoder.forward(&mut t, x, &b)?;
    let logits = classifier_forward(&mut t, out.mu, cb[0], cb[1])?;
    let target = t.select(logits, target_class)?;
    t.backward(target)?;
    let act = t.value(out.last_spatial).clone();
    let grad = t
        .grad(out.last_spatial)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(act.shape()));
    grad_cam(&act, &grad, sample.joints(), sample.frames())
}
