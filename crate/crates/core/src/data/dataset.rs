use rand::seq::index::sample;
use rand::Rng;

use super::sequence::{center_on_root, SkeletonSequence, Stream, CHANNELS};
use super::topology::SkeletonTopology;
use crate::error::{Error, Result};

/// Labelled clips over one topology.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Vec<SkeletonSequence>,
    topology: SkeletonTopology,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(samples: Vec<SkeletonSequence>, topology: SkeletonTopology, class_names: Vec<String>) -> Result<Self> {
        let n = topology.n_joints();
        for (i, s) in samples.iter().enumerate() {
            if s.joints() != n {
                return Err(Error::dim(format!(
                    "sample {i} has {} joints, topology has {n}",
                    s.joints()
                )));
            }
            if s.label >= class_names.len() {
                return Err(Error::contract(format!(
                    "sample {i} has label {} but only {} classes exist",
                    s.label,
                    class_names.len()
                )));
            }
        }
        Ok(Self {
            samples,
            topology,
            class_names,
        })
    }

    pub fn samples(&self) -> &[SkeletonSequence] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn topology(&self) -> &SkeletonTopology {
        &self.topology
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn channels(&self) -> usize {
        CHANNELS
    }

    /// Frame count if every sample has the same length.
    pub fn uniform_frames(&self) -> Option<usize> {
        let t = self.samples.first()?.frames();
        self.samples.iter().all(|s| s.frames() == t).then_some(t)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.n_classes()];
        for s in &self.samples {
            h[s.label] += 1;
        }
        h
    }

    pub(crate) fn with_samples(&self, samples: Vec<SkeletonSequence>) -> Self {
        Self {
            samples,
            topology: self.topology.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// Cross-subject split: subjects with `id % modulus == modulus − 1` form
    /// the test half of `(train, test)`.
    pub fn split_by_subject(&self, modulus: u32) -> Result<(Dataset, Dataset)> {
        if modulus < 2 {
            return Err(Error::contract("subject split modulus must be ≥ 2"));
        }
        let (test, train): (Vec<_>, Vec<_>) = self
            .samples
            .iter()
            .cloned()
            .partition(|s| s.subject_id % modulus == modulus - 1);
        Ok((self.with_samples(train), self.with_samples(test)))
    }

    /// Centers every clip on the root joint and converts it to `stream`.
    pub fn preprocess(&self, stream: Stream) -> Result<Dataset> {
        let root = self.topology.root();
        let samples = self
            .samples
            .iter()
            .map(|s| stream.derive(&center_on_root(s, root), &self.topology))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.with_samples(samples))
    }

    /// Plain-text class manifest, one name per line.
    pub fn class_manifest(&self) -> String {
        self.class_names.iter().map(|n| format!("{n}\n")).collect()
    }
}

/// Picks `round(fraction × count)` samples uniformly without replacement
/// from every class independently.
pub fn category_balanced_subset<R: Rng + ?Sized>(d: &Dataset, fraction: f64, rng: &mut R) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::contract(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); d.n_classes()];
    for (i, s) in d.samples.iter().enumerate() {
        by_class[s.label].push(i);
    }
    let mut picked = Vec::new();
    for (class, members) in by_class.iter().enumerate() {
        let k = (fraction * members.len() as f64).round() as usize;
        if k == 0 {
            return Err(Error::InsufficientLabels(format!(
                "class {class} has {} samples; fraction {fraction} selects none",
                members.len()
            )));
        }
        picked.extend(sample(rng, members.len(), k).into_iter().map(|i| members[i]));
    }
    Ok(d.with_samples(picked.into_iter().map(|i| d.samples[i].clone()).collect()))
}
