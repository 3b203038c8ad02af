use super::topology::SkeletonTopology;
use crate::error::{Error, Result};

/// Spatial channels per joint.
pub const CHANNELS: usize = 3;

/// One skeleton clip stored as `C × T × N` row-major coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonSequence {
    coords: Vec<f64>,
    frames: usize,
    joints: usize,
    pub label: usize,
    pub subject_id: u32,
}

impl SkeletonSequence {
    pub fn new(coords: Vec<f64>, frames: usize, joints: usize, label: usize, subject_id: u32) -> Result<Self> {
        if frames < 2 || joints < 2 {
            return Err(Error::DegenerateInput(format!(
                "sequence needs T ≥ 2 and N ≥ 2, got T={frames} N={joints}"
            )));
        }
        if coords.len() != CHANNELS * frames * joints {
            return Err(Error::dim(format!(
                "{} coordinates for {CHANNELS}×{frames}×{joints}",
                coords.len()
            )));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sequence coordinates".into()));
        }
        Ok(Self {
            coords,
            frames,
            joints,
            label,
            subject_id,
        })
    }

    /// Builds a sequence from a `(channel, frame, joint)` generator.
    pub fn from_fn(
        frames: usize,
        joints: usize,
        label: usize,
        subject_id: u32,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut coords = Vec::with_capacity(CHANNELS * frames * joints);
        for c in 0..CHANNELS {
            for t in 0..frames {
                for n in 0..joints {
                    coords.push(f(c, t, n));
                }
            }
        }
        Self::new(coords, frames, joints, label, subject_id)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    #[inline]
    pub fn idx(&self, c: usize, t: usize, n: usize) -> usize {
        (c * self.frames + t) * self.joints + n
    }

    #[inline]
    pub fn at(&self, c: usize, t: usize, n: usize) -> f64 {
        self.coords[self.idx(c, t, n)]
    }

    /// Same label and subject, new coordinates of identical shape.
    pub(crate) fn with_coords(&self, coords: Vec<f64>) -> Self {
        debug_assert_eq!(coords.len(), self.coords.len());
        Self {
            coords,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            coords: Vec::new(),
            frames: self.frames,
            joints: self.joints,
            label: self.label,
            subject_id: self.subject_id,
        }
    }

    /// Samples the sequence at fractional frame `pos` by linear interpolation.
    fn sample_frame(&self, pos: f64, out: &mut [f64]) {
        let last = self.frames - 1;
        let lo = (pos.floor() as usize).min(last);
        let frac = pos - lo as f64;
        for c in 0..CHANNELS {
            for n in 0..self.joints {
                let a = self.at(c, lo, n);
                let v = if frac == 0.0 || lo == last {
                    a
                } else {
                    let b = self.at(c, lo + 1, n);
                    a + (b - a) * frac
                };
                out[c * self.joints + n] = v;
            }
        }
    }
}

/// Resamples the time axis to `frames_out` frames on a uniform grid mapping
/// `[0, T−1]` onto `[0, T_out−1]`.
pub fn interpolate_to_length(s: &SkeletonSequence, frames_out: usize) -> Result<SkeletonSequence> {
    if s.frames < 2 || frames_out < 2 {
        return Err(Error::DegenerateInput(format!(
            "interpolation needs at least two frames (T={}, T_out={frames_out})",
            s.frames
        )));
    }
    resample_window(s, 0.0, (s.frames - 1) as f64, frames_out)
}

/// Linearly resamples the window `[start, end]` of `s` (in frame units) to
/// `frames_out` uniformly spaced frames.
pub(crate) fn resample_window(
    s: &SkeletonSequence,
    start: f64,
    end: f64,
    frames_out: usize,
) -> Result<SkeletonSequence> {
    let n = s.joints;
    let mut coords = vec![0.0; CHANNELS * frames_out * n];
    let mut frame = vec![0.0; CHANNELS * n];
    let span = end - start;
    let denom = (frames_out - 1) as f64;
    for t in 0..frames_out {
        let pos = if t == frames_out - 1 {
            end
        } else {
            start + span * t as f64 / denom
        };
        s.sample_frame(pos, &mut frame);
        for c in 0..CHANNELS {
            for j in 0..n {
                coords[(c * frames_out + t) * n + j] = frame[c * n + j];
            }
        }
    }
    SkeletonSequence::new(coords, frames_out, n, s.label, s.subject_id)
}

/// Vectors from each joint's parent to the joint; the root gets zero.
pub fn derive_bone_stream(s: &SkeletonSequence, topo: &SkeletonTopology) -> Result<SkeletonSequence> {
    if topo.n_joints() != s.joints {
        return Err(Error::dim(format!(
            "topology has {} joints, sequence has {}",
            topo.n_joints(),
            s.joints
        )));
    }
    let mut coords = vec![0.0; s.coords.len()];
    for &(parent, child) in topo.edges() {
        for c in 0..CHANNELS {
            for t in 0..s.frames {
                coords[s.idx(c, t, child)] = s.at(c, t, child) - s.at(c, t, parent);
            }
        }
    }
    Ok(s.with_coords(coords))
}

/// Forward frame differences; the final frame is zero.
pub fn derive_motion_stream(s: &SkeletonSequence) -> SkeletonSequence {
    let mut coords = vec![0.0; s.coords.len()];
    for c in 0..CHANNELS {
        for t in 0..s.frames - 1 {
            for n in 0..s.joints {
                coords[s.idx(c, t, n)] = s.at(c, t + 1, n) - s.at(c, t, n);
            }
        }
    }
    s.with_coords(coords)
}

/// Translates so the root joint sits at the origin in frame 0.
pub fn center_on_root(s: &SkeletonSequence, root: usize) -> SkeletonSequence {
    let offset: Vec<f64> = (0..CHANNELS).map(|c| s.at(c, 0, root)).collect();
    let mut coords = s.coords.clone();
    for c in 0..CHANNELS {
        for v in &mut coords[c * s.frames * s.joints..(c + 1) * s.frames * s.joints] {
            *v -= offset[c];
        }
    }
    s.with_coords(coords)
}

/// The three input modalities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stream {
    Joint,
    Bone,
    Motion,
}

impl Stream {
    pub const ALL: [Stream; 3] = [Stream::Joint, Stream::Bone, Stream::Motion];

    pub fn name(self) -> &'static str {
        match self {
            Stream::Joint => "joint",
            Stream::Bone => "bone",
            Stream::Motion => "motion",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "joint" => Some(Stream::Joint),
            "bone" => Some(Stream::Bone),
            "motion" => Some(Stream::Motion),
            _ => None,
        }
    }

    pub fn derive(self, s: &SkeletonSequence, topo: &SkeletonTopology) -> Result<SkeletonSequence> {
        match self {
            Stream::Joint => Ok(s.clone()),
            Stream::Bone => derive_bone_stream(s, topo),
            Stream::Motion => Ok(derive_motion_stream(s)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain2() -> SkeletonTopology {
        SkeletonTopology::new(2, vec![(0, 1)]).unwrap()
    }

    #[test]
    fn constant_sequence_interpolates_to_itself() {
        let s = SkeletonSequence::from_fn(5, 3, 0, 0, |c, _, n| (c * 10 + n) as f64).unwrap();
        let r = interpolate_to_length(&s, 11).unwrap();
        for c in 0..3 {
            for t in 0..11 {
                for n in 0..3 {
                    assert_eq!(r.at(c, t, n), (c * 10 + n) as f64);
                }
            }
        }
    }

    #[test]
    fn two_frames_to_three_hits_midpoint() {
        let s = SkeletonSequence::from_fn(2, 2, 0, 0, |_, t, _| 10.0 * t as f64).unwrap();
        let r = interpolate_to_length(&s, 3).unwrap();
        assert_eq!((r.at(0, 0, 0), r.at(0, 1, 0), r.at(0, 2, 0)), (0.0, 5.0, 10.0));
    }

    #[test]
    fn interpolation_rejects_short_inputs() {
        let s = SkeletonSequence::from_fn(2, 2, 0, 0, |_, _, _| 0.0).unwrap();
        assert!(matches!(interpolate_to_length(&s, 1), Err(Error::DegenerateInput(_))));
        assert!(SkeletonSequence::from_fn(1, 2, 0, 0, |_, _, _| 0.0).is_err());
    }

    #[test]
    fn affine_in_time_is_exact() {
        let s = SkeletonSequence::from_fn(7, 4, 0, 0, |c, t, n| 0.3 * t as f64 - 1.7 * c as f64 + n as f64).unwrap();
        let r = interpolate_to_length(&s, 50).unwrap();
        for t in 0..50 {
            let tau = t as f64 * 6.0 / 49.0;
            for n in 0..4 {
                assert!((r.at(1, t, n) - (0.3 * tau - 1.7 + n as f64)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bone_stream_examples() {
        let topo = chain2();
        let same = SkeletonSequence::from_fn(3, 2, 1, 0, |c, _, _| c as f64).unwrap();
        assert!(derive_bone_stream(&same, &topo).unwrap().coords().iter().all(|v| *v == 0.0));

        let offset = SkeletonSequence::from_fn(3, 2, 1, 0, |c, _, n| if c == 0 && n == 1 { 1.0 } else { 0.0 }).unwrap();
        let b = derive_bone_stream(&offset, &topo).unwrap();
        assert_eq!((b.at(0, 2, 1), b.at(1, 2, 1), b.at(2, 2, 1)), (1.0, 0.0, 0.0));
        assert_eq!(b.label, 1);

        let wrong = SkeletonTopology::new(3, vec![(0, 1), (1, 2)]).unwrap();
        assert!(matches!(derive_bone_stream(&offset, &wrong), Err(Error::Dimension(_))));
    }

    #[test]
    fn motion_stream_examples() {
        let still = SkeletonSequence::from_fn(4, 2, 0, 0, |c, _, n| (c + n) as f64).unwrap();
        assert!(derive_motion_stream(&still).coords().iter().all(|v| *v == 0.0));

        let v = [0.5, -1.0, 2.0];
        let moving = SkeletonSequence::from_fn(5, 2, 0, 0, |c, t, n| n as f64 + v[c] * t as f64).unwrap();
        let m = derive_motion_stream(&moving);
        for c in 0..3 {
            for t in 0..4 {
                assert_eq!(m.at(c, t, 1), v[c]);
            }
            assert_eq!(m.at(c, 4, 1), 0.0);
        }
    }

    #[test]
    fn centering_puts_root_at_origin() {
        let s = SkeletonSequence::from_fn(3, 2, 0, 0, |c, t, n| (c + 2 * t + 3 * n) as f64 + 0.5).unwrap();
        let z = center_on_root(&s, 0);
        for c in 0..3 {
            assert_eq!(z.at(c, 0, 0), 0.0);
        }
    }
}
