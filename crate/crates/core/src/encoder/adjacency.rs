use std::sync::Arc;

use crate::data::SkeletonTopology;
use crate::error::{Error, Result};
use crate::numerics::{FrameMixer, Tensor};

/// Symmetric-normalized adjacency with self-loops, `D^{-1/2}(A + I)D^{-1/2}`.
#[derive(Clone, Debug)]
pub struct GraphAdjacency {
    matrix: Tensor,
    mixer: Arc<FrameMixer>,
}

impl GraphAdjacency {
    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn mixer(&self) -> &Arc<FrameMixer> {
        &self.mixer
    }

    pub fn n_joints(&self) -> usize {
        self.matrix.rows()
    }

    /// Adjacency from an explicit dense matrix (used for relabelling tests).
    pub fn from_matrix(matrix: Tensor) -> Result<Self> {
        let mixer = Arc::new(FrameMixer::from_dense(&matrix)?);
        Ok(Self { matrix, mixer })
    }
}

pub fn build_adjacency(topo: &SkeletonTopology) -> Result<GraphAdjacency> {
    let n = topo.n_joints();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        a[i * n + i] = 1.0;
    }
    for &(p, c) in topo.edges() {
        a[p * n + c] = 1.0;
        a[c * n + p] = 1.0;
    }
    // connectivity from the root
    let mut seen = vec![false; n];
    let mut stack = vec![topo.root()];
    while let Some(j) = stack.pop() {
        if std::mem::replace(&mut seen[j], true) {
            continue;
        }
        stack.extend((0..n).filter(|&k| a[j * n + k] != 0.0 && !seen[k]));
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::contract("topology is disconnected"));
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / a[i * n..(i + 1) * n].iter().sum::<f64>().sqrt())
        .collect();
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    GraphAdjacency::from_matrix(Tensor::matrix(n, n, a)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_joint_is_one() {
        let topo = SkeletonTopology::new(1, vec![]).unwrap();
        assert_eq!(build_adjacency(&topo).unwrap().matrix().data(), &[1.0]);
    }

    #[test]
    fn two_joints_are_halves() {
        let topo = SkeletonTopology::new(2, vec![(0, 1)]).unwrap();
        let adj = build_adjacency(&topo).unwrap();
        for v in adj.matrix().data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_with_unit_bounded_entries() {
        let adj = build_adjacency(&SkeletonTopology::default_17()).unwrap();
        let m = adj.matrix();
        let n = m.rows();
        for i in 0..n {
            for j in 0..n {
                let v = m.data()[i * n + j];
                assert_eq!(v, m.data()[j * n + i]);
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
