//! Graphs, annotations and the scotch-taped factor graph.
//!
//! Column order of the taped incidence matrix is fixed: the `M₀` edges in
//! the order they appear in [`Graph::edges`], then the `R` annotation labels
//! in the order of [`AnnotationSet::labels`].

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SymmetricOperator};

/// Operators up to this dimension may be materialized densely.
pub const DENSE_THRESHOLD: usize = 4096;

/// Undirected multigraph without self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Graph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new(n_nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        for (idx, &(i, j)) in edges.iter().enumerate() {
            if i >= n_nodes || j >= n_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge {idx} = ({i}, {j}) has an endpoint outside 0..{n_nodes}"
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("edge {idx} is a self-loop on node {i}")));
            }
        }
        Ok(Self { n_nodes, edges })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n_nodes];
        for &(i, j) in &self.edges {
            d[i] += 1;
            d[j] += 1;
        }
        d
    }

    /// Connected-component label per node (labels are component representatives).
    pub fn components(&self) -> Vec<usize> {
        let mut uf = UnionFind::new(self.n_nodes);
        for &(i, j) in &self.edges {
            uf.union(i, j);
        }
        (0..self.n_nodes).map(|i| uf.find(i)).collect()
    }

    /// Fraction of nodes in the largest connected component.
    pub fn giant_component_fraction(&self) -> f64 {
        if self.n_nodes == 0 {
            return 0.0;
        }
        let comp = self.components();
        let mut counts = vec![0usize; self.n_nodes];
        for c in comp {
            counts[c] += 1;
        }
        *counts.iter().max().unwrap_or(&0) as f64 / self.n_nodes as f64
    }

    pub fn is_connected(&self) -> bool {
        self.n_nodes == 0 || self.giant_component_fraction() == 1.0
    }
}

/// `R` node-index sets; the `r`-th set is `{i : h^r_i = 1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnnotationSet {
    n_nodes: usize,
    labels: Vec<Vec<usize>>,
    names: Vec<String>,
}

impl AnnotationSet {
    /// Labels named `h0, h1, ...`. Members are sorted; duplicates are rejected.
    pub fn new(n_nodes: usize, labels: Vec<Vec<usize>>) -> Result<Self> {
        let names = (0..labels.len()).map(|r| format!("h{r}")).collect();
        Self::with_names(n_nodes, labels, names)
    }

    pub fn with_names(n_nodes: usize, mut labels: Vec<Vec<usize>>, names: Vec<String>) -> Result<Self> {
        if names.len() != labels.len() {
            return Err(Error::Dimension { expected: labels.len(), found: names.len() });
        }
        for (r, set) in labels.iter_mut().enumerate() {
            if set.is_empty() {
                return Err(Error::InvalidAnnotations(format!("label {r} ({}) is empty", names[r])));
            }
            set.sort_unstable();
            if let Some(w) = set.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::InvalidAnnotations(format!(
                    "label {r} lists node {} twice",
                    w[0]
                )));
            }
            if let Some(&bad) = set.last().filter(|&&i| i >= n_nodes) {
                return Err(Error::InvalidAnnotations(format!(
                    "label {r} contains node {bad} outside 0..{n_nodes}"
                )));
            }
        }
        Ok(Self { n_nodes, labels, names })
    }

    pub fn empty(n_nodes: usize) -> Self {
        Self { n_nodes, labels: Vec::new(), names: Vec::new() }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[Vec<usize>] {
        &self.labels
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Labels concatenated in order; names are kept.
    pub fn concat(&self, other: &AnnotationSet) -> Result<Self> {
        if self.n_nodes != other.n_nodes {
            return Err(Error::Dimension { expected: self.n_nodes, found: other.n_nodes });
        }
        let mut labels = self.labels.clone();
        labels.extend(other.labels.iter().cloned());
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        Self::with_names(self.n_nodes, labels, names)
    }

    /// Per-node count of labels carrying the node (`Σ_r h^r_i`).
    pub fn node_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n_nodes];
        for set in &self.labels {
            for &i in set {
                d[i] += 1;
            }
        }
        d
    }
}

/// Sparse 0/1 matrix stored column-wise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceMatrix {
    n_rows: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
}

impl IncidenceMatrix {
    /// Each column lists the rows holding a 1. Rows must be distinct and in range.
    pub fn from_columns(n_rows: usize, columns: &[Vec<usize>]) -> Result<Self> {
        let mut col_ptr = Vec::with_capacity(columns.len() + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for (j, col) in columns.iter().enumerate() {
            let mut sorted = col.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidGraph(format!("column {j} repeats a row")));
            }
            if sorted.last().is_some_and(|&i| i >= n_rows) {
                return Err(Error::Dimension { expected: n_rows, found: sorted[sorted.len() - 1] });
            }
            row_idx.extend(sorted);
            col_ptr.push(row_idx.len());
        }
        Ok(Self { n_rows, col_ptr, row_idx })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Row indices of the ones in column `j`, ascending.
    pub fn column(&self, j: usize) -> &[usize] {
        &self.row_idx[self.col_ptr[j]..self.col_ptr[j + 1]]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[usize]> + '_ {
        (0..self.n_cols()).map(move |j| self.column(j))
    }

    pub fn row_sums(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_rows];
        for &i in &self.row_idx {
            s[i] += 1;
        }
        s
    }

    pub fn col_sums(&self) -> Vec<usize> {
        self.col_ptr.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `[self | other]`.
    pub fn hstack(&self, other: &IncidenceMatrix) -> Result<Self> {
        if self.n_rows != other.n_rows {
            return Err(Error::Dimension { expected: self.n_rows, found: other.n_rows });
        }
        let mut col_ptr = self.col_ptr.clone();
        let base = self.row_idx.len();
        col_ptr.extend(other.col_ptr.iter().skip(1).map(|p| p + base));
        let mut row_idx = self.row_idx.clone();
        row_idx.extend_from_slice(&other.row_idx);
        Ok(Self { n_rows: self.n_rows, col_ptr, row_idx })
    }

    /// The first `n` columns.
    pub fn leading_columns(&self, n: usize) -> Self {
        let n = n.min(self.n_cols());
        let col_ptr = self.col_ptr[..=n].to_vec();
        let row_idx = self.row_idx[..col_ptr[n]].to_vec();
        Self { n_rows: self.n_rows, col_ptr, row_idx }
    }

    /// Columns reordered so that new column `j` is old column `perm[j]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_cols() {
            return Err(Error::Dimension { expected: self.n_cols(), found: perm.len() });
        }
        let cols: Vec<Vec<usize>> = perm.iter().map(|&p| self.column(p).to_vec()).collect();
        Self::from_columns(self.n_rows, &cols)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n_rows, self.n_cols());
        for (j, col) in self.columns().enumerate() {
            for &i in col {
                m[(i, j)] = 1.0;
            }
        }
        m
    }
}

/// `N × M₀` incidence of the original graph, one column per edge.
pub fn build_incidence(graph: &Graph) -> IncidenceMatrix {
    let mut col_ptr = Vec::with_capacity(graph.n_edges() + 1);
    let mut row_idx = Vec::with_capacity(2 * graph.n_edges());
    col_ptr.push(0);
    for &(i, j) in graph.edges() {
        row_idx.push(i.min(j));
        row_idx.push(i.max(j));
        col_ptr.push(row_idx.len());
    }
    IncidenceMatrix { n_rows: graph.n_nodes(), col_ptr, row_idx }
}

/// Conditions under which the spectral identities for taped graphs can fail, recorded on taping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TapeWarning {
    /// The factor graph has more than one component, so `λ = 2` is degenerate.
    Disconnected { components: usize },
    /// Node has no original edge and is reached only through annotations.
    AnnotationOnly { node: usize },
}

/// Graph plus annotations as one factor graph with incidence `B = [B⁰, H]`.
#[derive(Debug, Clone)]
pub struct ScotchTapedGraph {
    pub graph: Graph,
    pub annotations: AnnotationSet,
    pub b0: IncidenceMatrix,
    pub b: IncidenceMatrix,
    pub d_u0: Vec<f64>,
    pub d_uh: Vec<f64>,
    pub d_u: Vec<f64>,
    pub d_v: Vec<f64>,
    pub warnings: Vec<TapeWarning>,
}

pub fn tape(graph: &Graph, annotations: &AnnotationSet) -> Result<ScotchTapedGraph> {
    let n = graph.n_nodes();
    if annotations.n_nodes() != n {
        return Err(Error::Dimension { expected: n, found: annotations.n_nodes() });
    }
    let b0 = build_incidence(graph);
    let h = IncidenceMatrix::from_columns(n, annotations.labels())?;
    let b = b0.hstack(&h)?;

    let d_u0: Vec<f64> = graph.degrees().into_iter().map(|d| d as f64).collect();
    let d_uh: Vec<f64> = annotations.node_degrees().into_iter().map(|d| d as f64).collect();
    let d_u: Vec<f64> = d_u0.iter().zip(&d_uh).map(|(a, b)| a + b).collect();
    let d_v: Vec<f64> = b.col_sums().into_iter().map(|d| d as f64).collect();

    let mut warnings = Vec::new();
    let mut uf = UnionFind::new(n);
    for col in b.columns() {
        for w in col.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    let mut roots: Vec<usize> = (0..n).map(|i| uf.find(i)).collect();
    roots.sort_unstable();
    roots.dedup();
    if roots.len() > 1 {
        warnings.push(TapeWarning::Disconnected { components: roots.len() });
    }
    for i in 0..n {
        if d_u0[i] == 0.0 && d_uh[i] > 0.0 {
            warnings.push(TapeWarning::AnnotationOnly { node: i });
        }
    }

    Ok(ScotchTapedGraph {
        graph: graph.clone(),
        annotations: annotations.clone(),
        b0,
        b,
        d_u0,
        d_uh,
        d_u,
        d_v,
        warnings,
    })
}

impl ScotchTapedGraph {
    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn n_edges(&self) -> usize {
        self.graph.n_edges()
    }

    pub fn n_labels(&self) -> usize {
        self.annotations.n_labels()
    }

    pub fn is_connected(&self) -> bool {
        !self.warnings.iter().any(|w| matches!(w, TapeWarning::Disconnected { .. }))
    }

    /// Unit vector along `D_U^{1/2} 1`, the eigenvector of `λ₁ = 2`.
    pub fn trivial_vector(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.d_u.iter().map(|d| d.sqrt()).collect();
        crate::linalg::normalize(&mut v);
        v
    }

    /// The same graph with no annotations.
    pub fn untaped(&self) -> Result<ScotchTapedGraph> {
        tape(&self.graph, &AnnotationSet::empty(self.n_nodes()))
    }

    /// `‖(L − 2Σ_r h hᵀ/d_r)φ − ((2−λ)D⁰ − λDʰ)φ‖` for the unprimed vector `φ`.
    pub fn generalized_residual(&self, lambda: f64, phi: &[f64]) -> f64 {
        let n = self.n_nodes();
        let mut lhs = vec![0.0; n];
        Laplacian::new(&self.graph).apply(phi, &mut lhs);
        for (r, set) in self.annotations.labels().iter().enumerate() {
            let coef = 2.0 / self.d_v[self.n_edges() + r];
            let s: f64 = set.iter().map(|&i| phi[i]).sum();
            for &i in set {
                lhs[i] -= coef * s;
            }
        }
        let mut acc = 0.0;
        for i in 0..n {
            let rhs = ((2.0 - lambda) * self.d_u0[i] - lambda * self.d_uh[i]) * phi[i];
            acc += (lhs[i] - rhs) * (lhs[i] - rhs);
        }
        acc.sqrt()
    }
}

/// Combinatorial Laplacian `L = D⁰ − A` held as adjacency lists.
#[derive(Debug, Clone)]
pub struct Laplacian {
    degree: Vec<f64>,
    adj: Vec<Vec<usize>>,
}

impl Laplacian {
    pub fn new(graph: &Graph) -> Self {
        let n = graph.n_nodes();
        let mut adj = vec![Vec::new(); n];
        for &(i, j) in graph.edges() {
            adj[i].push(j);
            adj[j].push(i);
        }
        let degree = adj.iter().map(|a| a.len() as f64).collect();
        Self { degree, adj }
    }

    pub fn to_dense(&self) -> Result<DenseMatrix> {
        let n = self.degree.len();
        if n > DENSE_THRESHOLD {
            return Err(Error::TooLargeForDense { dim: n, limit: DENSE_THRESHOLD });
        }
        let mut m = DenseMatrix::from_diagonal(&self.degree);
        for (i, nbrs) in self.adj.iter().enumerate() {
            for &j in nbrs {
                m[(i, j)] -= 1.0;
            }
        }
        Ok(m)
    }
}

impl SymmetricOperator for Laplacian {
    fn dim(&self) -> usize {
        self.degree.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, nbrs) in self.adj.iter().enumerate() {
            let mut s = self.degree[i] * x[i];
            for &j in nbrs {
                s -= x[j];
            }
            y[i] = s;
        }
    }
}

pub fn laplacian(graph: &Graph) -> Laplacian {
    Laplacian::new(graph)
}

/// `2 B̂ B̂ᵀ` with `B̂ = D_U^{-1/2} B D_V^{-1/2}`, applied column by column.
#[derive(Debug, Clone)]
pub struct ProjectionOperator<'a> {
    stg: &'a ScotchTapedGraph,
    inv_sqrt_du: Vec<f64>,
}

pub fn projection_operator(stg: &ScotchTapedGraph) -> Result<ProjectionOperator<'_>> {
    if let Some(node) = stg.d_u.iter().position(|&d| d == 0.0) {
        return Err(Error::ZeroDegree { node });
    }
    Ok(ProjectionOperator { stg, inv_sqrt_du: stg.d_u.iter().map(|d| 1.0 / d.sqrt()).collect() })
}

impl ProjectionOperator<'_> {
    pub fn to_dense(&self) -> Result<DenseMatrix> {
        let n = self.stg.n_nodes();
        if n > DENSE_THRESHOLD {
            return Err(Error::TooLargeForDense { dim: n, limit: DENSE_THRESHOLD });
        }
        let mut m = DenseMatrix::zeros(n, n);
        for (col, &dv) in self.stg.b.columns().zip(&self.stg.d_v) {
            let w = 2.0 / dv;
            for &i in col {
                let wi = w * self.inv_sqrt_du[i];
                let row = m.row_mut(i);
                for &j in col {
                    row[j] += wi * self.inv_sqrt_du[j];
                }
            }
        }
        Ok(m)
    }
}

impl SymmetricOperator for ProjectionOperator<'_> {
    fn dim(&self) -> usize {
        self.stg.n_nodes()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        let s = &self.inv_sqrt_du;
        for (col, &dv) in self.stg.b.columns().zip(&self.stg.d_v) {
            let t: f64 = col.iter().map(|&i| s[i] * x[i]).sum::<f64>() * (2.0 / dv);
            for &i in col {
                y[i] += s[i] * t;
            }
        }
    }
}

/// Group assignment; labels are 0-based group indices below `n_groups`.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Partition {
    labels: Vec<usize>,
    n_groups: usize,
}

impl Partition {
    pub fn new(labels: Vec<usize>, n_groups: usize) -> Result<Self> {
        if let Some((i, &g)) = labels.iter().enumerate().find(|(_, &g)| g >= n_groups) {
            return Err(Error::Parameter(format!("node {i} has group {g} >= {n_groups}")));
        }
        Ok(Self { labels, n_groups })
    }

    /// Contiguous groups: the first `sizes[0]` nodes in group 0, and so on.
    pub fn contiguous(sizes: &[usize]) -> Self {
        let mut labels = Vec::with_capacity(sizes.iter().sum());
        for (g, &s) in sizes.iter().enumerate() {
            labels.extend(core::iter::repeat_n(g, s));
        }
        Self { labels, n_groups: sizes.len() }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_groups];
        for &g in &self.labels {
            s[g] += 1;
        }
        s
    }

    pub fn members(&self, group: usize) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, &g)| g == group).map(|(i, _)| i).collect()
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}
