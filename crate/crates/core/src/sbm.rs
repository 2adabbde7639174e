//! Microcanonical stochastic block model and annotation generators.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{AnnotationSet, Graph, Partition};
use crate::rng;

/// Group sizes `N_σ` and the symmetric edge-count matrix `e_{σσ'}`.
///
/// `e_{σσ}` counts edges inside group σ, `e_{σσ'}` (σ ≠ σ') edges between
/// the two groups, so the total edge count is `Σ_{σ≤σ'} e_{σσ'}`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockSpec {
    pub group_sizes: Vec<usize>,
    pub edge_counts: Vec<Vec<u64>>,
}

impl BlockSpec {
    pub fn new(group_sizes: Vec<usize>, edge_counts: Vec<Vec<u64>>) -> Result<Self> {
        let spec = Self { group_sizes, edge_counts };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.group_sizes.len();
        if k == 0 {
            return Err(Error::Parameter("block spec has no groups".into()));
        }
        if let Some(g) = self.group_sizes.iter().position(|&n| n == 0) {
            return Err(Error::Parameter(format!("group {g} is empty")));
        }
        if self.edge_counts.len() != k || self.edge_counts.iter().any(|row| row.len() != k) {
            return Err(Error::Dimension { expected: k, found: self.edge_counts.len() });
        }
        for a in 0..k {
            for b in 0..a {
                if self.edge_counts[a][b] != self.edge_counts[b][a] {
                    return Err(Error::Parameter(format!("edge counts not symmetric at ({a}, {b})")));
                }
            }
        }
        Ok(())
    }

    pub fn n_groups(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.group_sizes.iter().sum()
    }

    pub fn n_edges(&self) -> u64 {
        let k = self.n_groups();
        (0..k).map(|a| (a..k).map(|b| self.edge_counts[a][b]).sum::<u64>()).sum()
    }

    /// Number of edge endpoints in group σ: `2e_{σσ} + Σ_{σ'≠σ} e_{σσ'}`.
    pub fn group_stubs(&self, sigma: usize) -> u64 {
        (0..self.n_groups())
            .map(|b| if b == sigma { 2 * self.edge_counts[sigma][b] } else { self.edge_counts[sigma][b] })
            .sum()
    }

    /// Mean degree `c_σ` of each group.
    pub fn mean_degrees(&self) -> Vec<f64> {
        (0..self.n_groups())
            .map(|s| self.group_stubs(s) as f64 / self.group_sizes[s] as f64)
            .collect()
    }

    /// The planted contiguous partition matching this spec's node order.
    pub fn partition(&self) -> Partition {
        Partition::contiguous(&self.group_sizes)
    }
}

/// Two equal groups with mean degree `c` and structure strength `ε = e_out/(2e_in)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SymmetricSpec {
    pub n_per_group: usize,
    pub mean_degree: f64,
    pub epsilon: f64,
}

pub fn symmetric_to_block(spec: &SymmetricSpec) -> Result<(BlockSpec, Partition)> {
    if !(spec.epsilon > 0.0 && spec.epsilon <= 1.0) {
        return Err(Error::Parameter(format!("epsilon must lie in (0, 1], got {}", spec.epsilon)));
    }
    if spec.n_per_group == 0 || !(spec.mean_degree >= 0.0) {
        return Err(Error::Parameter("n_per_group must be positive and mean_degree non-negative".into()));
    }
    let n = 2 * spec.n_per_group;
    let m0 = (spec.mean_degree * n as f64 / 2.0).round() as u64;
    let e_in = (m0 as f64 / (2.0 * (1.0 + spec.epsilon))).round() as u64;
    let e_out = m0 - 2 * e_in;
    let block = BlockSpec::new(vec![spec.n_per_group; 2], vec![vec![e_in, e_out], vec![e_out, e_in]])?;
    let partition = block.partition();
    Ok((block, partition))
}

/// Draws exactly `e_{σσ'}` edges per group pair. Nodes of group σ occupy a
/// contiguous index range in group order.
///
/// Within-group edges are uniform unordered pairs of distinct nodes;
/// parallel edges may occur.
pub fn sample_sbm(spec: &BlockSpec, seed: u64) -> Result<Graph> {
    spec.validate()?;
    let k = spec.n_groups();
    for s in 0..k {
        if spec.group_sizes[s] == 1 && spec.edge_counts[s][s] > 0 {
            return Err(Error::Infeasible(format!(
                "group {s} has one node but {} internal edges",
                spec.edge_counts[s][s]
            )));
        }
    }
    let mut offsets = Vec::with_capacity(k);
    let mut acc = 0;
    for &n in &spec.group_sizes {
        offsets.push(acc);
        acc += n;
    }
    let mut rng = rng::seeded(seed);
    let mut edges = Vec::with_capacity(spec.n_edges() as usize);
    for a in 0..k {
        for b in a..k {
            let (oa, na) = (offsets[a], spec.group_sizes[a]);
            let (ob, nb) = (offsets[b], spec.group_sizes[b]);
            for _ in 0..spec.edge_counts[a][b] {
                let (i, j) = if a == b {
                    let i = rng.random_range(0..na);
                    let mut j = rng.random_range(0..na - 1);
                    if j >= i {
                        j += 1;
                    }
                    (oa + i, oa + j)
                } else {
                    (oa + rng.random_range(0..na), ob + rng.random_range(0..nb))
                };
                edges.push((i.min(j), i.max(j)));
            }
        }
    }
    Graph::new(acc, edges)
}

/// Edge counts per group pair, recounted from a sampled graph.
pub fn count_block_edges(graph: &Graph, partition: &Partition) -> Vec<Vec<u64>> {
    let k = partition.n_groups();
    let mut e = vec![vec![0u64; k]; k];
    let lab = partition.labels();
    for &(i, j) in graph.edges() {
        let (a, b) = (lab[i], lab[j]);
        e[a][b] += 1;
        if a != b {
            e[b][a] += 1;
        }
    }
    e
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum AnnotationKind {
    /// `r` labels, each covering every node.
    Uniform { r: usize },
    /// `r_per_group[σ]` labels equal to group σ.
    Group { r_per_group: Vec<usize> },
    /// `r` labels (even) of `d_star` nodes each. The first half draws each
    /// member from group 0 with probability `1 − ξ`, the second half mirrors.
    Noisy { r: usize, d_star: usize, xi: f64, seed: u64 },
}

pub fn make_annotations(kind: &AnnotationKind, partition: &Partition) -> Result<AnnotationSet> {
    let n = partition.n_nodes();
    match kind {
        AnnotationKind::Uniform { r } => {
            if *r == 0 {
                return Err(Error::Parameter("uniform annotations need R >= 1".into()));
            }
            let all: Vec<usize> = (0..n).collect();
            let names = (0..*r).map(|i| format!("uniform{i}")).collect();
            AnnotationSet::with_names(n, vec![all; *r], names)
        }
        AnnotationKind::Group { r_per_group } => {
            if r_per_group.len() != partition.n_groups() {
                return Err(Error::Dimension { expected: partition.n_groups(), found: r_per_group.len() });
            }
            if let Some(g) = r_per_group.iter().position(|&r| r == 0) {
                return Err(Error::Parameter(format!("group {g} needs at least one label")));
            }
            let mut labels = Vec::new();
            let mut names: Vec<String> = Vec::new();
            for (g, &r) in r_per_group.iter().enumerate() {
                let members = partition.members(g);
                for j in 0..r {
                    labels.push(members.clone());
                    names.push(format!("group{g}_{j}"));
                }
            }
            AnnotationSet::with_names(n, labels, names)
        }
        AnnotationKind::Noisy { r, d_star, xi, seed } => {
            noisy_annotations(partition, *r, *d_star, *xi, *seed)
        }
    }
}

fn noisy_annotations(partition: &Partition, r: usize, d_star: usize, xi: f64, seed: u64) -> Result<AnnotationSet> {
    let n = partition.n_nodes();
    if partition.n_groups() != 2 {
        return Err(Error::Unsupported("noisy annotations are defined for two groups".into()));
    }
    if r == 0 || !r.is_multiple_of(2) {
        return Err(Error::Parameter(format!("noisy annotations need a positive even R, got {r}")));
    }
    if d_star == 0 || d_star > n {
        return Err(Error::Parameter(format!("d_star must lie in 1..={n}, got {d_star}")));
    }
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::Parameter(format!("xi must lie in [0, 1], got {xi}")));
    }
    let groups = [partition.members(0), partition.members(1)];
    let mut labels = Vec::with_capacity(r);
    let mut names = Vec::with_capacity(r);
    for label in 0..r {
        let home = if label < r / 2 { 0 } else { 1 };
        let mut rng = rng::stream(seed, label as u64);
        // Partial Fisher-Yates pools, one per group.
        let mut pools = [groups[0].clone(), groups[1].clone()];
        let mut used = [0usize; 2];
        let mut set = Vec::with_capacity(d_star);
        for _ in 0..d_star {
            let flip = rng.random::<f64>() < xi;
            let mut g = if flip { 1 - home } else { home };
            if used[g] == pools[g].len() {
                g = 1 - g;
            }
            let pick = rng.random_range(used[g]..pools[g].len());
            pools[g].swap(used[g], pick);
            set.push(pools[g][used[g]]);
            used[g] += 1;
        }
        labels.push(set);
        names.push(format!("noisy{home}_{label}"));
    }
    AnnotationSet::with_names(n, labels, names)
}
