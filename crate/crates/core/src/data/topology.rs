use crate::error::{Error, Result};

const DEFAULT_17: &str = include_str!("../../assets/topology_17.txt");
const NTU_25: &str = include_str!("../../assets/topology_ntu25.txt");

/// Joint connectivity as a rooted tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkeletonTopology {
    n_joints: usize,
    /// `(parent, child)` pairs.
    edges: Vec<(usize, usize)>,
    root: usize,
    names: Vec<String>,
}

impl SkeletonTopology {
    /// Builds and validates a topology from `(parent, child)` edges.
    pub fn new(n_joints: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let names = (0..n_joints).map(|i| format!("j{i}")).collect();
        Self::with_names(n_joints, edges, names)
    }

    pub fn with_names(n_joints: usize, edges: Vec<(usize, usize)>, names: Vec<String>) -> Result<Self> {
        if n_joints == 0 {
            return Err(Error::contract("topology needs at least one joint"));
        }
        if names.len() != n_joints {
            return Err(Error::dim(format!("{} names for {n_joints} joints", names.len())));
        }
        if edges.len() != n_joints - 1 {
            return Err(Error::contract(format!(
                "a tree over {n_joints} joints has {} edges, got {}",
                n_joints - 1,
                edges.len()
            )));
        }
        let mut parent = vec![None; n_joints];
        for &(p, c) in &edges {
            if p >= n_joints || c >= n_joints || p == c {
                return Err(Error::contract(format!("invalid edge ({p}, {c})")));
            }
            if parent[c].replace(p).is_some() {
                return Err(Error::contract(format!("joint {c} has two parents")));
            }
        }
        let roots: Vec<usize> = (0..n_joints).filter(|&j| parent[j].is_none()).collect();
        let &[root] = roots.as_slice() else {
            return Err(Error::contract(format!("expected one root, found {roots:?}")));
        };
        // every joint must reach the root without revisiting anything
        for start in 0..n_joints {
            let mut j = start;
            let mut steps = 0;
            while let Some(p) = parent[j] {
                j = p;
                steps += 1;
                if steps > n_joints {
                    return Err(Error::contract(format!("cycle through joint {start}")));
                }
            }
        }
        Ok(Self {
            n_joints,
            edges,
            root,
            names,
        })
    }

    /// Parses `<name> <parent-index>` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut names = Vec::new();
        let mut parents = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(name), Some(parent), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::contract(format!(
                    "topology line {}: expected `<name> <parent>`",
                    lineno + 1
                )));
            };
            let parent: i64 = parent.parse().map_err(|_| {
                Error::contract(format!("topology line {}: bad parent `{parent}`", lineno + 1))
            })?;
            names.push(name.to_string());
            parents.push(parent);
        }
        let n = names.len();
        let mut edges = Vec::new();
        for (child, &p) in parents.iter().enumerate() {
            if p >= 0 {
                edges.push((p as usize, child));
            }
        }
        Self::with_names(n, edges, names)
    }

    /// The shipped 17-joint tree.
    pub fn default_17() -> Self {
        Self::parse(DEFAULT_17).expect("bundled topology is valid")
    }

    /// The NTU RGB+D 25-joint layout.
    pub fn ntu_25() -> Self {
        Self::parse(NTU_25).expect("bundled topology is valid")
    }

    pub fn n_joints(&self) -> usize {
        self.n_joints
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn parent_of(&self, joint: usize) -> Option<usize> {
        self.edges.iter().find(|&&(_, c)| c == joint).map(|&(p, _)| p)
    }

    /// Parent index per joint; the root maps to itself.
    pub fn parents(&self) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.n_joints).collect();
        for &(p, c) in &self.edges {
            out[c] = p;
        }
        out
    }

    /// Joints ordered so every parent precedes its children.
    pub fn depth_first_order(&self) -> Vec<usize> {
        let mut order = vec![self.root];
        let mut i = 0;
        while i < order.len() {
            let j = order[i];
            order.extend(self.edges.iter().filter(|&&(p, _)| p == j).map(|&(_, c)| c));
            i += 1;
        }
        order
    }

    /// Plain-text manifest: one `parent child` edge per line.
    pub fn edge_manifest(&self) -> String {
        self.edges.iter().map(|(p, c)| format!("{p} {c}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_topologies_are_trees() {
        let t = SkeletonTopology::default_17();
        assert_eq!(t.n_joints(), 17);
        assert_eq!(t.root(), 0);
        assert_eq!(t.parent_of(3), Some(2));
        let ntu = SkeletonTopology::ntu_25();
        assert_eq!(ntu.n_joints(), 25);
        assert_eq!(ntu.depth_first_order().len(), 25);
    }

    #[test]
    fn rejects_cycles_and_double_parents() {
        assert!(SkeletonTopology::new(3, vec![(0, 1), (0, 1)]).is_err());
        assert!(SkeletonTopology::new(3, vec![(1, 2), (2, 1)]).is_err());
        assert!(SkeletonTopology::new(3, vec![(0, 1)]).is_err());
        assert!(SkeletonTopology::new(1, vec![]).is_ok());
    }
}
