use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::checkpoint::CheckpointBundle;
use super::parallel::map_ordered;
use super::pipeline::Pipeline;
use super::pretrain::checkpoint_encoder;
use crate::data::Dataset;
use crate::encoder::{Encoder, ParamSet};
use crate::error::{Error, Result};
use crate::numerics::Tape;

/// `(label, μ)` for every sample, in dataset order.
pub fn embeddings(
    encoder: &Encoder,
    params: &ParamSet,
    pipeline: &Pipeline,
    dataset: &Dataset,
    workers: usize,
) -> Result<Vec<(usize, Vec<f64>)>> {
    encoder.check_params(params)?;
    map_ordered(workers, dataset.len(), |i| {
        let s = &dataset.samples()[i];
        let mut t = Tape::new();
        let x = t.constant(pipeline.plain(s)?)?;
        let b = params.bind(&mut t, false)?;
        let out = encoder.forward(&mut t, x, &b)?;
        Ok((s.label, t.value(out.mu).data().to_vec()))
    })
    .into_iter()
    .collect()
}

/// Header `label,dim=<d>`, then `label,v1,…,vd` per row.
pub fn format_rows(rows: &[(usize, Vec<f64>)], header: &str) -> String {
    let mut out = format!("{header}\n");
    for (label, v) in rows {
        write!(out, "{label}").unwrap();
        for x in v {
            write!(out, ",{x}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn embedding_dump(
    checkpoint: &CheckpointBundle,
    encoder: &Encoder,
    pipeline: &Pipeline,
    dataset: &Dataset,
    path: impl AsRef<Path>,
) -> Result<usize> {
    let params = checkpoint_encoder(checkpoint)?;
    let rows = embeddings(encoder, &params, pipeline, dataset, 1)?;
    let d = encoder.config().latent_dim;
    fs::write(path, format_rows(&rows, &format!("label,dim={d}")))?;
    Ok(rows.len())
}

/// Test-split logits, one `label,l1,…,lC` row per sample.
pub fn write_logits(path: impl AsRef<Path>, labels: &[usize], logits: &[Vec<f64>]) -> Result<()> {
    let classes = logits.first().map_or(0, Vec::len);
    let rows: Vec<(usize, Vec<f64>)> = labels.iter().cloned().zip(logits.iter().cloned()).collect();
    fs::write(path, format_rows(&rows, &format!("label,classes={classes}")))?;
    Ok(())
}

pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<(usize, Vec<f64>)>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let mut offset = lines.next().map_or(0, |h| h.len() + 1) as u64;
    let mut rows = Vec::new();
    for line in lines {
        let mut fields = line.split(',');
        let label = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::format(offset, "row does not start with an integer label"))?;
        let values = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(offset, format!("bad value: {e}")))?;
        rows.push((label, values));
        offset += line.len() as u64 + 1;
    }
    Ok(rows)
}

/// Comma-separated map, one row per frame.
pub fn format_map(map: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in map {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}
