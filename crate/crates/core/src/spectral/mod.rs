//! Truncated Laplacian eigensystems and commute-time queries.

mod lanczos;

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::graph::Laplacian;

pub(crate) use lanczos::matvec;

/// Eigenvalues at or below this are treated as the null space.
pub const NULL_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_M: usize = 50;
const SIGN_THRESHOLD: f64 = 1e-9;
/// Residual above which a computed eigenpair is rejected outright.
const RESIDUAL_LIMIT: f64 = 1e-6;

/// Anything that can answer commute-time queries between existing nodes.
pub trait CommuteTimes {
    fn node_count(&self) -> usize;
    fn volume(&self) -> f64;
    fn commute_time(&self, i: usize, j: usize) -> f64;
}

/// Wraps a commute-time source and counts the queries it serves.
pub struct Counting<'a, C: ?Sized> {
    inner: &'a C,
    queries: Cell<u64>,
}

impl<'a, C: CommuteTimes + ?Sized> Counting<'a, C> {
    pub fn new(inner: &'a C) -> Self {
        Counting {
            inner,
            queries: Cell::new(0),
        }
    }

    pub fn queries(&self) -> u64 {
        self.queries.get()
    }
}

impl<C: CommuteTimes + ?Sized> CommuteTimes for Counting<'_, C> {
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    fn volume(&self) -> f64 {
        self.inner.volume()
    }

    fn commute_time(&self, i: usize, j: usize) -> f64 {
        self.queries.set(self.queries.get() + 1);
        self.inner.commute_time(i, j)
    }
}

/// The `m` smallest nonzero Laplacian eigenpairs, ascending, plus the graph volume
/// they were computed at.
///
/// Eigenvectors are stored node-major so that the `m` coordinates of one node are
/// contiguous; a commute-time query touches exactly two such rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    n: usize,
    m: usize,
    values: Vec<f64>,
    inv_values: Vec<f64>,
    rows: Vec<f64>,
    volume: f64,
}

/// Flip `v` so that its first component of magnitude above 1e-9 is positive.
pub fn canonical_sign(v: &mut [f64]) {
    if let Some(&first) = v.iter().find(|x| x.abs() > SIGN_THRESHOLD) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

impl EigenSystem {
    /// Assemble from eigenpairs given as columns. Pairs are sorted ascending and the
    /// sign convention is applied.
    pub fn from_columns(values: Vec<f64>, columns: Vec<Vec<f64>>, volume: f64) -> Result<Self> {
        if values.len() != columns.len() {
            return Err(Error::DimensionMismatch {
                expected: values.len(),
                got: columns.len(),
            });
        }
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidParameter("eigenvectors differ in length".into()));
        }
        if values.iter().chain(columns.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite eigenpair".into()));
        }
        let mut pairs: Vec<(f64, Vec<f64>)> = values.into_iter().zip(columns).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let m = pairs.len();
        let mut rows = vec![0.0; n * m];
        let mut values = Vec::with_capacity(m);
        for (k, (lambda, mut v)) in pairs.into_iter().enumerate() {
            canonical_sign(&mut v);
            for (i, x) in v.into_iter().enumerate() {
                rows[i * m + k] = x;
            }
            values.push(lambda);
        }
        Self::from_raw(n, values, rows, volume)
    }

    /// Assemble from node-major storage as produced by [`EigenSystem::raw_rows`],
    /// without reordering.
    pub fn from_raw(n: usize, values: Vec<f64>, rows: Vec<f64>, volume: f64) -> Result<Self> {
        let m = values.len();
        if rows.len() != n * m {
            return Err(Error::DimensionMismatch {
                expected: n * m,
                got: rows.len(),
            });
        }
        if values.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Numerical("eigenvalues must be positive".into()));
        }
        let inv_values = values.iter().map(|l| 1.0 / l).collect();
        Ok(EigenSystem {
            n,
            m,
            values,
            inv_values,
            rows,
            volume,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Number of retained eigenpairs.
    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.rows[i * self.m + k]).collect()
    }

    /// The `m` eigenvector coordinates of node `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.m..(i + 1) * self.m]
    }

    pub fn raw_rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Truncated commute time `V_G Σ_k (v_k(i) − v_k(j))² / λ_k`.
    pub fn ctd(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b) = (self.row(i), self.row(j));
        let s: f64 = a
            .iter()
            .zip(b)
            .zip(&self.inv_values)
            .map(|((x, y), inv)| (x - y) * (x - y) * inv)
            .sum();
        self.volume * s
    }

    /// Entry `(i, j)` of the (truncated) Laplacian pseudo-inverse.
    pub fn pseudo_inverse_entry(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row(i), self.row(j));
        a.iter()
            .zip(b)
            .zip(&self.inv_values)
            .map(|((x, y), inv)| x * y * inv)
            .sum()
    }

    /// `‖L v_k − λ_k v_k‖` against a Laplacian of matching size.
    pub fn residual(&self, lap: &Laplacian, k: usize) -> f64 {
        let v = self.eigenvector(k);
        let lv = matvec(&lap.matrix, &v);
        lv.iter()
            .zip(&v)
            .map(|(a, b)| (a - self.values[k] * b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Keep only the first `m` pairs.
    pub fn truncated(&self, m: usize) -> EigenSystem {
        let m = m.min(self.m);
        let rows = (0..self.n)
            .flat_map(|i| self.row(i)[..m].iter().copied())
            .collect();
        EigenSystem::from_raw(self.n, self.values[..m].to_vec(), rows, self.volume)
            .expect("prefix of a valid system")
    }
}

impl CommuteTimes for EigenSystem {
    fn node_count(&self) -> usize {
        self.n
    }

    fn volume(&self) -> f64 {
        self.volume
    }

    fn commute_time(&self, i: usize, j: usize) -> f64 {
        self.ctd(i, j)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EigenConfig {
    /// Seeds the Lanczos start vector.
    pub seed: u64,
    /// Target residual `‖L v − λ v‖` for every returned pair.
    pub residual_tol: f64,
}

impl Default for EigenConfig {
    fn default() -> Self {
        EigenConfig {
            seed: 0x5eed,
            residual_tol: 1e-8,
        }
    }
}

pub fn eigendecompose(lap: &Laplacian, m: usize) -> Result<EigenSystem> {
    eigendecompose_with(lap, m, &EigenConfig::default())
}

/// The `m` smallest nonzero eigenpairs of a connected-graph Laplacian. `m` is
/// clamped to `n − 1`.
pub fn eigendecompose_with(lap: &Laplacian, m: usize, cfg: &EigenConfig) -> Result<EigenSystem> {
    let n = lap.node_count();
    if n < 2 {
        return Err(Error::InvalidGraph(format!(
            "need at least 2 nodes for a nonzero spectrum, got {n}"
        )));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    if !structurally_connected(lap) {
        return Err(Error::Disconnected(
            "graph disconnected: more than one null eigenvalue".into(),
        ));
    }
    let m = m.min(n - 1);
    let pairs = lanczos::smallest_nonzero(&lap.matrix, m, cfg.seed, cfg.residual_tol)?;
    if pairs.values.iter().any(|&l| l <= NULL_TOLERANCE) {
        return Err(Error::Disconnected(
            "graph disconnected: more than one null eigenvalue".into(),
        ));
    }
    if !(pairs.max_residual <= RESIDUAL_LIMIT) {
        return Err(Error::Numerical(format!(
            "eigensolver residual {:.3e} above {RESIDUAL_LIMIT:e}",
            pairs.max_residual
        )));
    }
    if pairs.max_residual > cfg.residual_tol {
        log::warn!(
            "eigensolver residual {:.3e} above target {:.1e}",
            pairs.max_residual,
            cfg.residual_tol
        );
    }
    EigenSystem::from_columns(pairs.values, pairs.vectors, lap.volume)
}

fn structurally_connected(lap: &Laplacian) -> bool {
    let n = lap.node_count();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        if let Some(row) = lap.matrix.outer_view(u) {
            for (v, &w) in row.iter() {
                if v != u && w != 0.0 && !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
    }
    count == n
}
