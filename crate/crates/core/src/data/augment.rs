use rand::Rng;

use super::sequence::{resample_window, SkeletonSequence, CHANNELS};
use crate::error::{Error, Result};

/// Stochastic view-generation settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentationConfig {
    /// Shear amplitude β.
    pub shear_amplitude: f64,
    /// Temporal crop padding ratio γ.
    pub crop_padding_ratio: usize,
    pub rng_seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            shear_amplitude: 0.5,
            crop_padding_ratio: 6,
            rng_seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.shear_amplitude >= 0.0 && self.shear_amplitude.is_finite()) {
            return Err(Error::contract(format!(
                "shear amplitude must be ≥ 0, got {}",
                self.shear_amplitude
            )));
        }
        if self.crop_padding_ratio < 1 {
            return Err(Error::contract("crop padding ratio must be ≥ 1"));
        }
        Ok(())
    }

    /// Shear followed by temporal crop.
    pub fn apply<R: Rng + ?Sized>(&self, s: &SkeletonSequence, rng: &mut R) -> Result<SkeletonSequence> {
        let sheared = shear_augment(s, self.shear_amplitude, rng)?;
        temporal_crop_augment(&sheared, self.crop_padding_ratio, rng)
    }
}

/// 3×3 shear with unit diagonal and off-diagonals uniform in `[−β, β]`.
pub fn shear_matrix<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> [[f64; 3]; 3] {
    let mut m = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            if i != j {
                let u: f64 = rng.random();
                *v = beta * (2.0 * u - 1.0);
            }
        }
    }
    m
}

/// Applies `x' = S·x` with one shear matrix for the whole sequence.
pub fn apply_shear(s: &SkeletonSequence, m: &[[f64; 3]; 3]) -> SkeletonSequence {
    let plane = s.frames() * s.joints();
    let src = s.coords();
    let mut coords = vec![0.0; src.len()];
    for (i, row) in m.iter().enumerate() {
        let dst = &mut coords[i * plane..(i + 1) * plane];
        for (k, d) in dst.iter_mut().enumerate() {
            // sum in fixed channel order so β = 0 is an exact identity
            *d = src[k] * row[0] + src[plane + k] * row[1] + src[2 * plane + k] * row[2];
        }
    }
    s.with_coords(coords)
}

pub fn shear_augment<R: Rng + ?Sized>(s: &SkeletonSequence, beta: f64, rng: &mut R) -> Result<SkeletonSequence> {
    if !(beta >= 0.0) {
        return Err(Error::contract(format!("shear amplitude must be ≥ 0, got {beta}")));
    }
    let m = shear_matrix(beta, rng);
    Ok(apply_shear(s, &m))
}

/// Mirror index into `[0, len)` without repeating the edge frame.
fn reflect(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let r = i.rem_euclid(period);
    if r < len as isize {
        r as usize
    } else {
        (period - r) as usize
    }
}

/// Reflect-pads by `p = ⌊T/γ⌋`, crops a random window of at least `T`
/// frames, and resamples back to `T`.
pub fn temporal_crop_augment<R: Rng + ?Sized>(
    s: &SkeletonSequence,
    gamma: usize,
    rng: &mut R,
) -> Result<SkeletonSequence> {
    if gamma < 1 {
        return Err(Error::contract("crop padding ratio must be ≥ 1"));
    }
    let t = s.frames();
    let pad = t / gamma;
    let start = rng.random_range(0..=2 * pad);
    let len = rng.random_range(t..=t + 2 * pad - start);
    if pad == 0 {
        return Ok(s.clone());
    }
    let n = s.joints();
    let mut window = vec![0.0; CHANNELS * len * n];
    for c in 0..CHANNELS {
        for w in 0..len {
            let src_t = reflect(start as isize + w as isize - pad as isize, t);
            for j in 0..n {
                window[(c * len + w) * n + j] = s.at(c, src_t, j);
            }
        }
    }
    let window = SkeletonSequence::new(window, len, n, s.label, s.subject_id)?;
    resample_window(&window, 0.0, (len - 1) as f64, t)
}
