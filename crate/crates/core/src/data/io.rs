//! `SKL1` little-endian dataset files.
//!
//! ```text
//! "SKL1" | u32 version=1 | u32 n_samples | u32 C | u32 T | u32 N
//!        | u32 n_classes | u32 n_joints_topology
//!        | (u32 parent, u32 child) × (n_joints_topology − 1)
//!        | per sample: u32 label | u32 subject_id | f64 × C·T·N
//! ```

use std::fs;
use std::path::Path;

use super::dataset::Dataset;
use super::sequence::{SkeletonSequence, CHANNELS};
use super::topology::SkeletonTopology;
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"SKL1";
pub const DATASET_VERSION: u32 = 1;

/// Bounds-checked little-endian reader that reports byte offsets.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated while reading {what} ({n} bytes needed, {} left)", self.buf.len() - self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::format(self.pos as u64, "size overflow"))?, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(
                self.pos as u64,
                format!("{} trailing bytes", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::dim(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode_dataset(d: &Dataset) -> Result<Vec<u8>> {
    let frames = if d.is_empty() {
        0
    } else {
        d.uniform_frames()
            .ok_or_else(|| Error::dim("all samples must have the same frame count to be saved"))?
    };
    let topo = d.topology();
    let n = topo.n_joints();
    let mut out = Vec::with_capacity(32 + d.len() * (8 + CHANNELS * frames * n * 8));
    out.extend_from_slice(DATASET_MAGIC);
    put_u32(&mut out, DATASET_VERSION as usize)?;
    put_u32(&mut out, d.len())?;
    put_u32(&mut out, CHANNELS)?;
    put_u32(&mut out, frames)?;
    put_u32(&mut out, n)?;
    put_u32(&mut out, d.n_classes())?;
    put_u32(&mut out, n)?;
    for &(p, c) in topo.edges() {
        put_u32(&mut out, p)?;
        put_u32(&mut out, c)?;
    }
    for s in d.samples() {
        put_u32(&mut out, s.label)?;
        out.extend_from_slice(&s.subject_id.to_le_bytes());
        for v in s.coords() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = ByteReader::new(bytes);
    let magic = r.take(4, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:?}, expected \"SKL1\"")));
    }
    let at = r.offset();
    let version = r.u32("version")?;
    if version != DATASET_VERSION {
        return Err(Error::format(at, format!("unsupported version {version}")));
    }
    let n_samples = r.u32("sample count")? as usize;
    let at = r.offset();
    let channels = r.u32("channel count")? as usize;
    if channels != CHANNELS {
        return Err(Error::format(at, format!("expected {CHANNELS} channels, got {channels}")));
    }
    let at = r.offset();
    let frames = r.u32("frame count")? as usize;
    if n_samples > 0 && frames < 2 {
        return Err(Error::format(at, format!("frame count {frames} < 2")));
    }
    let joints = r.u32("joint count")? as usize;
    let n_classes = r.u32("class count")? as usize;
    let at = r.offset();
    let topo_joints = r.u32("topology joint count")? as usize;
    if topo_joints != joints || topo_joints == 0 {
        return Err(Error::format(
            at,
            format!("topology has {topo_joints} joints, samples have {joints}"),
        ));
    }
    let mut edges = Vec::with_capacity(topo_joints - 1);
    for _ in 0..topo_joints - 1 {
        let p = r.u32("edge parent")? as usize;
        let c = r.u32("edge child")? as usize;
        edges.push((p, c));
    }
    let topo = SkeletonTopology::new(topo_joints, edges).map_err(|e| Error::format(at, e))?;
    let mut samples = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let at = r.offset();
        let label = r.u32("label")? as usize;
        if label >= n_classes {
            return Err(Error::format(at, format!("sample {i} label {label} ≥ {n_classes} classes")));
        }
        let subject = r.u32("subject id")?;
        let at = r.offset();
        let coords = r.f64s(CHANNELS * frames * joints, "coordinates")?;
        let s = SkeletonSequence::new(coords, frames, joints, label, subject).map_err(|e| Error::format(at, e))?;
        samples.push(s);
    }
    r.finish()?;
    let names = (0..n_classes).map(|c| format!("class_{c}")).collect();
    Dataset::new(samples, topo, names)
}

pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_dataset(d)?)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    decode_dataset(&fs::read(path)?)
}
