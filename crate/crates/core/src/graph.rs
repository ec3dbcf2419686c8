//! Point sets, weighted mutual k-NN graphs, Laplacians and node insertions.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::knn::{Neighbor, PointIndex};

/// Smallest edge weight the Gaussian kernel may produce.
///
/// Far-apart pairs would otherwise underflow to zero weight, which breaks the
/// connectivity that commute times rely on.
pub const WEIGHT_FLOOR: f64 = 1e-6;

/// Per-feature min-max scaling fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn fit(points: &PointSet) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter(
                "min-max scaling needs at least one point".into(),
            ));
        }
        let dim = points.dim();
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for row in points.rows() {
            for (c, &x) in row.iter().enumerate() {
                min[c] = min[c].min(x);
                max[c] = max[c].max(x);
            }
        }
        Ok(MinMax { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Maps one point into the unit cube, clamping values outside the fitted range.
    /// Constant features map to 0.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .enumerate()
            .map(|(c, &v)| {
                let range = self.max[c] - self.min[c];
                if range > 0.0 {
                    ((v - self.min[c]) / range).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect())
    }
}

/// A dense row-major `n x d` matrix of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    data: Vec<f64>,
    scaling: Option<MinMax>,
}

impl PointSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 && !data.is_empty() {
            return Err(Error::InvalidParameter("point dimension must be positive".into()));
        }
        if dim > 0 && !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter(format!(
                "{} values do not form rows of width {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        Ok(PointSet {
            dim,
            data,
            scaling: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Parse {
                    line: r + 1,
                    msg: format!("expected {dim} columns, found {}", row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    pub fn empty(dim: usize) -> Self {
        PointSet {
            dim,
            data: Vec::new(),
            scaling: None,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // chunks_exact panics on a zero width
        self.data.chunks_exact(self.dim.max(1)).take(self.len())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// The scaling that produced these values, if they were normalized.
    pub fn scaling(&self) -> Option<&MinMax> {
        self.scaling.as_ref()
    }

    pub fn with_scaling(mut self, scaling: Option<MinMax>) -> Self {
        self.scaling = scaling;
        self
    }

    /// Rows at `indices`, in that order. Scaling metadata is kept.
    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        PointSet {
            dim: self.dim,
            data,
            scaling: self.scaling.clone(),
        }
    }
}

/// Rescales every feature to `[0, 1]` and records the fitted range.
pub fn normalize_minmax(points: &PointSet) -> Result<PointSet> {
    let scaling = MinMax::fit(points)?;
    let mut data = Vec::with_capacity(points.as_slice().len());
    for row in points.rows() {
        data.extend(scaling.transform(row)?);
    }
    Ok(PointSet::new(points.dim(), data)?.with_scaling(Some(scaling)))
}

/// Weighted undirected graph with cached degrees and volume.
///
/// Adjacency lists are sorted by neighbour id and never contain self loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: Vec<Vec<(usize, f64)>>,
    degrees: Vec<f64>,
    volume: f64,
}

impl Graph {
    /// Builds a graph from undirected edges, each listed once.
    ///
    /// Degrees are summed over the sorted adjacency lists, so the result does not
    /// depend on the order in which edges are supplied.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Graph>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (u, v, w) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self loop at node {u}")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) has non-positive weight {w}"
                )));
            }
            adjacency[u].push((v, w));
            adjacency[v].push((u, w));
        }
        for (u, row) in adjacency.iter_mut().enumerate() {
            row.sort_by_key(|&(v, _)| v);
            if let Some(pair) = row.windows(2).find(|p| p[0].0 == p[1].0) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {}) listed more than once",
                    pair[0].0
                )));
            }
        }
        let degrees: Vec<f64> = adjacency
            .iter()
            .map(|row| row.iter().map(|&(_, w)| w).sum())
            .collect();
        let volume = degrees.iter().sum();
        Ok(Graph {
            adjacency,
            degrees,
            volume,
        })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.degrees[i]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// Sum of all degrees, `V_G`.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.adjacency[i]
            .binary_search_by_key(&j, |&(v, _)| v)
            .ok()
            .map(|pos| self.adjacency[i][pos].1)
    }

    /// Edges as `(u, v, w)` with `u < v`, ordered by `u` then `v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(u, row)| {
            row.iter()
                .filter(move |&&(v, _)| v > u)
                .map(move |&(v, w)| (u, v, w))
        })
    }

    /// Component label per node; labels are assigned in order of each
    /// component's smallest node id.
    pub fn component_labels(&self) -> (Vec<usize>, usize) {
        let n = self.node_count();
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for &(v, _) in &self.adjacency[u] {
                    if label[v] == usize::MAX {
                        label[v] = count;
                        queue.push_back(v);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    pub fn is_connected(&self) -> bool {
        self.node_count() > 0 && self.component_labels().1 == 1
    }

    /// Subgraph induced by `nodes`; node `nodes[k]` becomes node `k`.
    pub fn induced(&self, nodes: &[usize]) -> Result<Graph> {
        let mut new_id = vec![usize::MAX; self.node_count()];
        for (k, &old) in nodes.iter().enumerate() {
            new_id[old] = k;
        }
        let mut edges = Vec::new();
        for (k, &old) in nodes.iter().enumerate() {
            for &(v, w) in &self.adjacency[old] {
                let nv = new_id[v];
                if nv != usize::MAX && nv > k {
                    edges.push((k, nv, w));
                }
            }
        }
        Graph::from_edges(nodes.len(), edges)
    }

    /// Nodes within `max_hops` unweighted hops of `source`, in BFS order.
    pub fn hop_neighborhood(&self, source: usize, max_hops: usize) -> Vec<usize> {
        let mut depth = std::collections::HashMap::new();
        depth.insert(source, 0usize);
        let mut order = vec![source];
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let d = depth[&u];
            if d == max_hops {
                continue;
            }
            for &(v, _) in &self.adjacency[u] {
                if let std::collections::hash_map::Entry::Vacant(e) = depth.entry(v) {
                    e.insert(d + 1);
                    order.push(v);
                    queue.push_back(v);
                }
            }
        }
        order
    }
}

/// Map between node ids of a graph and of an extracted subgraph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentMap {
    pub old_to_new: Vec<Option<usize>>,
    pub new_to_old: Vec<usize>,
}

impl ComponentMap {
    pub fn identity(n: usize) -> Self {
        ComponentMap {
            old_to_new: (0..n).map(Some).collect(),
            new_to_old: (0..n).collect(),
        }
    }

    /// Original ids that did not make it into the subgraph.
    pub fn excluded(&self) -> Vec<usize> {
        self.old_to_new
            .iter()
            .enumerate()
            .filter(|(_, m)| m.is_none())
            .map(|(i, _)| i)
            .collect()
    }
}

/// The largest connected component. Equal sizes go to the component holding the
/// smallest original id.
pub fn largest_component(g: &Graph) -> Result<(Graph, ComponentMap)> {
    let n = g.node_count();
    let (labels, count) = g.component_labels();
    if count <= 1 {
        return Ok((g.clone(), ComponentMap::identity(n)));
    }
    let mut sizes = vec![0usize; count];
    for &l in &labels {
        sizes[l] += 1;
    }
    // labels follow smallest member id, so the first maximum wins ties
    let best = (0..count).fold(0, |best, c| if sizes[c] > sizes[best] { c } else { best });
    let new_to_old: Vec<usize> = (0..n).filter(|&i| labels[i] == best).collect();
    let mut old_to_new = vec![None; n];
    for (k, &old) in new_to_old.iter().enumerate() {
        old_to_new[old] = Some(k);
    }
    let sub = g.induced(&new_to_old)?;
    Ok((
        sub,
        ComponentMap {
            old_to_new,
            new_to_old,
        },
    ))
}

/// How pairwise distances become edge weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `exp(-d^2 / sigma^2)` with sigma the mean distance to the k1-th neighbour.
    GaussianAuto,
    /// `exp(-d^2 / sigma^2)` with a caller-chosen sigma.
    Gaussian(f64),
}

/// Gaussian similarity, floored at [`WEIGHT_FLOOR`].
pub fn gaussian_weight(distance: f64, sigma: f64) -> f64 {
    if distance == 0.0 {
        return 1.0;
    }
    if sigma <= 0.0 {
        return WEIGHT_FLOOR;
    }
    (-(distance * distance) / (sigma * sigma))
        .exp()
        .max(WEIGHT_FLOOR)
}

/// Output of [`build_mutual_knn`]: the graph plus the frozen neighbourhood radii
/// that later insertions are tested against.
#[derive(Debug, Clone)]
pub struct KnnGraph {
    pub graph: Graph,
    pub sigma: f64,
    /// Distance from each point to its k1-th nearest neighbour.
    pub kth_distance: Vec<f64>,
}

/// Mutual k-nearest-neighbour graph: `(i, j)` is an edge iff each is among the
/// other's `k1` nearest points (ties broken by lower index).
pub fn build_mutual_knn(points: &PointSet, k1: usize, kernel: Kernel) -> Result<KnnGraph> {
    let n = points.len();
    if k1 == 0 || k1 >= n {
        return Err(Error::InvalidParameter(format!(
            "k1 = {k1} must satisfy 1 <= k1 < n = {n}"
        )));
    }
    let index = PointIndex::new(points)?;
    let lists: Vec<Vec<Neighbor>> = (0..n)
        .map(|i| index.nearest(points.row(i), k1, Some(i)))
        .collect::<Result<_>>()?;
    let kth_distance: Vec<f64> = lists.iter().map(|l| l[k1 - 1].distance).collect();
    let sigma = match kernel {
        Kernel::GaussianAuto => kth_distance.iter().sum::<f64>() / n as f64,
        Kernel::Gaussian(s) => s,
    };
    let mut sorted_ids: Vec<Vec<usize>> = lists
        .iter()
        .map(|l| l.iter().map(|nb| nb.index).collect())
        .collect();
    for ids in &mut sorted_ids {
        ids.sort_unstable();
    }
    let mut edges = Vec::new();
    for (i, list) in lists.iter().enumerate() {
        for nb in list {
            let j = nb.index;
            if i < j && sorted_ids[j].binary_search(&i).is_ok() {
                edges.push((i, j, gaussian_weight(nb.distance, sigma)));
            }
        }
    }
    Ok(KnnGraph {
        graph: Graph::from_edges(n, edges)?,
        sigma,
        kth_distance,
    })
}

/// A new node `n` joined to existing nodes by weighted edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    new_node: usize,
    edges: Vec<(usize, f64)>,
}

impl Perturbation {
    /// `n` is the node count of the graph being extended; the new node gets id `n`.
    pub fn new(n: usize, edges: Vec<(usize, f64)>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::InvalidParameter(
                "a perturbation needs at least one edge".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for &(l, w) in &edges {
            if l >= n {
                return Err(Error::InvalidParameter(format!(
                    "attachment node {l} out of range for {n} nodes"
                )));
            }
            if !seen.insert(l) {
                return Err(Error::InvalidParameter(format!(
                    "attachment node {l} listed twice"
                )));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "attachment weight {w} must be positive"
                )));
            }
        }
        Ok(Perturbation { new_node: n, edges })
    }

    pub fn new_node(&self) -> usize {
        self.new_node
    }

    pub fn edges(&self) -> &[(usize, f64)] {
        &self.edges
    }

    /// Number of new edges, which is also the rank of the Laplacian update.
    pub fn rank(&self) -> usize {
        self.edges.len()
    }

    /// Degree of the new node.
    pub fn degree(&self) -> f64 {
        self.edges.iter().map(|&(_, w)| w).sum()
    }
}

/// Result of attaching a streamed point to a trained graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Attachment {
    pub perturbation: Perturbation,
    /// No mutual neighbour existed; the point hangs off its nearest neighbour.
    pub degenerate: bool,
}

/// Frozen training geometry used to attach new points without re-wiring the graph.
#[derive(Debug, Clone)]
pub struct Attacher {
    points: PointSet,
    index: PointIndex,
    kth_distance: Vec<f64>,
    sigma: f64,
    k1: usize,
}

impl Attacher {
    pub fn new(points: PointSet, kth_distance: Vec<f64>, sigma: f64, k1: usize) -> Result<Self> {
        if kth_distance.len() != points.len() {
            return Err(Error::InvalidParameter(format!(
                "{} neighbour radii for {} points",
                kth_distance.len(),
                points.len()
            )));
        }
        if k1 == 0 || k1 > points.len() {
            return Err(Error::InvalidParameter(format!(
                "k1 = {k1} invalid for {} training points",
                points.len()
            )));
        }
        let index = PointIndex::new(&points)?;
        Ok(Attacher {
            points,
            index,
            kth_distance,
            sigma,
            k1,
        })
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn kth_distance(&self) -> &[f64] {
        &self.kth_distance
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn k1(&self) -> usize {
        self.k1
    }

    pub fn index(&self) -> &PointIndex {
        &self.index
    }
}

/// Connects `p` (already in the training feature space) to the graph.
///
/// Training point `q` becomes a neighbour when it is among `p`'s `k1` nearest and
/// `p` lies within `q`'s own k1-th neighbour distance.
pub fn attach_point(g: &Graph, attacher: &Attacher, p: &[f64]) -> Result<Attachment> {
    let points = &attacher.points;
    if p.len() != points.dim() {
        return Err(Error::DimensionMismatch {
            expected: points.dim(),
            got: p.len(),
        });
    }
    if g.node_count() != points.len() {
        return Err(Error::InvalidParameter(format!(
            "graph has {} nodes but {} training points",
            g.node_count(),
            points.len()
        )));
    }
    let nearest = attacher.index.nearest(p, attacher.k1, None)?;
    let edges: Vec<(usize, f64)> = nearest
        .iter()
        .filter(|nb| nb.distance <= attacher.kth_distance[nb.index])
        .map(|nb| (nb.index, gaussian_weight(nb.distance, attacher.sigma)))
        .collect();
    let n = g.node_count();
    if edges.is_empty() {
        let first = nearest[0];
        let perturbation =
            Perturbation::new(n, vec![(first.index, gaussian_weight(first.distance, attacher.sigma))])?;
        return Ok(Attachment {
            perturbation,
            degenerate: true,
        });
    }
    Ok(Attachment {
        perturbation: Perturbation::new(n, edges)?,
        degenerate: false,
    })
}

/// Combinatorial Laplacian `L = D - A` with the graph volume attached.
#[derive(Debug, Clone)]
pub struct Laplacian {
    pub matrix: CsMat<f64>,
    pub volume: f64,
}

impl Laplacian {
    pub fn node_count(&self) -> usize {
        self.matrix.rows()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        sparse_to_dense(&self.matrix)
    }
}

pub(crate) fn sparse_to_dense(m: &CsMat<f64>) -> nalgebra::DMatrix<f64> {
    let mut out = nalgebra::DMatrix::zeros(m.rows(), m.cols());
    for (&v, (r, c)) in m.iter() {
        out[(r, c)] += v;
    }
    out
}

pub fn laplacian(g: &Graph) -> Laplacian {
    let n = g.node_count();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(n + 2 * g.edge_count());
    let mut data = Vec::with_capacity(indices.capacity());
    indptr.push(0);
    for i in 0..n {
        let mut diagonal_done = false;
        for &(j, w) in g.neighbors(i) {
            if !diagonal_done && j > i {
                indices.push(i);
                data.push(g.degree(i));
                diagonal_done = true;
            }
            indices.push(j);
            data.push(-w);
        }
        if !diagonal_done {
            indices.push(i);
            data.push(g.degree(i));
        }
        indptr.push(indices.len());
    }
    Laplacian {
        matrix: CsMat::new((n, n), indptr, indices, data),
        volume: g.volume(),
    }
}

/// `sum_e w_e u_e u_e^T` for the insertion of node `n` into an `n`-node graph.
pub fn delta_laplacian(p: &Perturbation, n: usize) -> Result<CsMat<f64>> {
    if p.new_node() != n {
        return Err(Error::InvalidParameter(format!(
            "perturbation adds node {} but graph has {n} nodes",
            p.new_node()
        )));
    }
    let mut tri = TriMat::new((n + 1, n + 1));
    for &(l, w) in p.edges() {
        tri.add_triplet(l, l, w);
        tri.add_triplet(n, l, -w);
        tri.add_triplet(l, n, -w);
    }
    tri.add_triplet(n, n, p.degree());
    Ok(tri.to_csr())
}

/// The graph grown by `p`. Existing edges are untouched.
pub fn apply(g: &Graph, p: &Perturbation) -> Result<Graph> {
    let n = g.node_count();
    if p.new_node() != n {
        return Err(Error::InvalidParameter(format!(
            "perturbation adds node {} but graph has {n} nodes",
            p.new_node()
        )));
    }
    let mut adjacency = g.adjacency.clone();
    let mut degrees = g.degrees.clone();
    let mut added = 0.0;
    let mut new_row: Vec<(usize, f64)> = Vec::with_capacity(p.rank());
    for &(l, w) in p.edges() {
        adjacency[l].push((n, w));
        degrees[l] += w;
        new_row.push((l, w));
        added += w;
    }
    new_row.sort_by_key(|&(l, _)| l);
    let new_degree = new_row.iter().map(|&(_, w)| w).sum();
    adjacency.push(new_row);
    degrees.push(new_degree);
    Ok(Graph {
        adjacency,
        degrees,
        volume: g.volume + 2.0 * added,
    })
}

/// Breadth-first visiting order over `g` starting from `seeds`, lazily expanded.
#[derive(Debug)]
pub struct BfsOrder<'a> {
    graph: &'a Graph,
    queue: VecDeque<usize>,
    seen: std::collections::HashSet<usize>,
}

impl<'a> BfsOrder<'a> {
    pub fn new(graph: &'a Graph, seeds: &[usize]) -> Self {
        let mut seen = std::collections::HashSet::with_capacity(64);
        let mut queue = VecDeque::with_capacity(64);
        for &s in seeds {
            if seen.insert(s) {
                queue.push_back(s);
            }
        }
        BfsOrder { graph, queue, seen }
    }
}

impl Iterator for BfsOrder<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        let u = self.queue.pop_front()?;
        for &(v, _) in self.graph.neighbors(u) {
            if self.seen.insert(v) {
                self.queue.push_back(v);
            }
        }
        Some(u)
    }
}
