//! Incremental update of Laplacian eigenpairs after a node insertion.
//!
//! Each retained pair `(λ, v)` of the old Laplacian, with `v` extended by a zero at
//! the new node, is an eigenpair of `[[L, 0], [0, 0]]`. Adding `ΔL` moves it to
//! `(λ + Δλ, v + Δv)`, where
//!
//! ```text
//! Δλ = vᵀ ΔL (v + Δv) / (1 + vᵀ Δv)
//! (L_new − (λ + Δλ) I) Δv = (Δλ I − ΔL) v
//! ```
//!
//! `Δv` is only solved for on the 2-hop neighbourhood `N` of the new node, in the
//! least-squares sense over all rows. The two equations are iterated from `Δv = 0`
//! until `Δλ` settles.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{Graph, Perturbation};
use crate::spectral::EigenSystem;

const RCOND_LIMIT: f64 = 1e-12;
const RIDGE: f64 = 1e-10;
const COLLAPSE_NORM: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IledConfig {
    /// Stop once `Δλ` changes by less than this between iterations.
    pub tol: f64,
    pub max_iter: usize,
    pub neighborhood_order: usize,
}

impl Default for IledConfig {
    fn default() -> Self {
        IledConfig {
            tol: 1e-6,
            max_iter: 5,
            neighborhood_order: 2,
        }
    }
}

impl IledConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 || self.neighborhood_order == 0 {
            return Err(Error::InvalidParameter(format!("bad iLED config {self:?}")));
        }
        Ok(())
    }
}

/// Nodes within `order` hops of `i`, in BFS order starting with `i`.
pub fn neighborhood(g_new: &Graph, i: usize, order: usize) -> Vec<usize> {
    g_new.hop_neighborhood(i, order)
}

/// Per-insertion data shared by every eigenpair update: the neighbourhood, the
/// `L_new` columns it selects, and their Gram matrix.
#[derive(Debug, Clone)]
pub struct Workspace {
    new_node: usize,
    nodes: Vec<usize>,
    columns: Vec<Vec<(usize, f64)>>,
    /// `AᵀA` for `A` the selected columns of `L_new`.
    gram: DMatrix<f64>,
    /// `L_new` restricted to rows and columns in `nodes`.
    block: DMatrix<f64>,
    setup_ops: u64,
}

impl Workspace {
    pub fn new(g_new: &Graph, p: &Perturbation, order: usize) -> Result<Self> {
        let new_node = p.new_node();
        if g_new.node_count() != new_node + 1 {
            return Err(Error::InvalidParameter(format!(
                "grown graph has {} nodes, perturbation adds node {new_node}",
                g_new.node_count()
            )));
        }
        let nodes = neighborhood(g_new, new_node, order);
        let s = nodes.len();
        let pos: HashMap<usize, usize> = nodes.iter().enumerate().map(|(a, &u)| (u, a)).collect();
        let mut setup_ops = 0u64;
        let columns: Vec<Vec<(usize, f64)>> = nodes
            .iter()
            .map(|&c| {
                let mut col: Vec<(usize, f64)> =
                    g_new.neighbors(c).iter().map(|&(r, w)| (r, -w)).collect();
                col.push((c, g_new.degree(c)));
                col.sort_by_key(|&(r, _)| r);
                col
            })
            .collect();
        let mut gram = DMatrix::zeros(s, s);
        let mut block = DMatrix::zeros(s, s);
        for a in 0..s {
            for &(r, v) in &columns[a] {
                if let Some(&b) = pos.get(&r) {
                    block[(b, a)] = v;
                }
            }
            for b in a..s {
                let (dot, ops) = sparse_dot(&columns[a], &columns[b]);
                gram[(a, b)] = dot;
                gram[(b, a)] = dot;
                setup_ops += ops;
            }
        }
        Ok(Workspace {
            new_node,
            nodes,
            columns,
            gram,
            block,
            setup_ops,
        })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }
}

fn sparse_dot(a: &[(usize, f64)], b: &[(usize, f64)]) -> (f64, u64) {
    let (mut i, mut j, mut s, mut ops) = (0, 0, 0.0, 0u64);
    while i < a.len() && j < b.len() {
        ops += 1;
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    (s, ops)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairUpdate {
    pub lambda: f64,
    /// Updated eigenvector of length `n + 1`; not normalized.
    pub vector: Vec<f64>,
    pub iterations: usize,
    /// The normal equations needed the ridge term.
    pub regularized: bool,
    /// The iteration drove `1 + vᵀΔv` to zero and stopped at the previous iterate.
    pub collapsed: bool,
    pub ops: u64,
}

/// `vᵀ ΔL (v + Δv)` over the new edges, with `v` zero at the new node.
fn eq4_numerator(v: &[f64], p: &Perturbation, dv_at: &dyn Fn(usize) -> f64) -> f64 {
    let i = p.new_node();
    p.edges()
        .iter()
        .map(|&(l, w)| {
            let diff = -v[l];
            w * diff * (diff + dv_at(i) - dv_at(l))
        })
        .sum()
}

/// Updates one eigenpair `(lambda, v)` of the old `n`-node Laplacian.
pub fn update_pair(
    lambda: f64,
    v: &[f64],
    p: &Perturbation,
    ws: &Workspace,
    cfg: &IledConfig,
) -> Result<PairUpdate> {
    cfg.validate()?;
    let n = ws.new_node;
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: v.len(),
        });
    }
    let s = ws.nodes.len();
    let mut ops = 0u64;
    let ext = |u: usize| if u < n { v[u] } else { 0.0 };
    let v_n = DVector::from_iterator(s, ws.nodes.iter().map(|&u| ext(u)));

    // ΔL v is supported on the new node and its neighbours
    let mut dl_v: HashMap<usize, f64> = HashMap::with_capacity(p.rank() + 1);
    for &(l, w) in p.edges() {
        *dl_v.entry(l).or_default() += w * v[l];
        *dl_v.entry(n).or_default() -= w * v[l];
    }
    ops += 2 * p.rank() as u64;

    let pos: HashMap<usize, usize> = ws.nodes.iter().enumerate().map(|(a, &u)| (u, a)).collect();
    let mut dv = DVector::<f64>::zeros(s);
    let mut prev: Option<f64> = None;
    let mut delta = 0.0;
    let mut iterations = 0;
    let mut regularized = false;
    let mut collapsed = false;
    for _ in 0..cfg.max_iter {
        iterations += 1;
        let dv_at = |u: usize| pos.get(&u).map_or(0.0, |&a| dv[a]);
        let denominator = 1.0 + v_n.dot(&dv);
        ops += 4 * p.rank() as u64 + 2 * s as u64;
        if denominator.abs() < COLLAPSE_NORM && iterations > 1 {
            // Δv cancelled v on the neighbourhood; nothing left to iterate on
            log::debug!("iLED update collapsed after {} iterations", iterations - 1);
            iterations -= 1;
            collapsed = true;
            break;
        }
        delta = eq4_numerator(v, p, &dv_at) / denominator;

        let mu = lambda + delta;
        // (K_Nᵀ K_N) with K_N = A − μ E, A the selected columns and E the selector
        let mut x = &ws.gram - &ws.block * (2.0 * mu);
        for a in 0..s {
            x[(a, a)] += mu * mu;
        }
        ops += 2 * (s * s) as u64;

        let h_at = |r: usize| {
            let base = delta * ext(r);
            base - dl_v.get(&r).copied().unwrap_or(0.0)
        };
        let mut rhs = DVector::<f64>::zeros(s);
        for (a, col) in ws.columns.iter().enumerate() {
            let mut acc = 0.0;
            for &(r, k) in col {
                acc += k * h_at(r);
            }
            rhs[a] = acc - mu * h_at(ws.nodes[a]);
            ops += 2 * col.len() as u64 + 2;
        }

        let (sol, ridge) = solve_normal(x, &rhs)?;
        regularized |= ridge;
        ops += (s * s * s / 3 + 2 * s * s) as u64;
        if sol.iter().any(|x| !x.is_finite()) || !delta.is_finite() {
            return Err(Error::Numerical("non-finite iLED update".into()));
        }
        dv = sol;
        if let Some(last) = prev {
            if (delta - last).abs() < cfg.tol {
                break;
            }
        }
        prev = Some(delta);
    }

    let mut vector: Vec<f64> = (0..=n).map(ext).collect();
    for (a, &u) in ws.nodes.iter().enumerate() {
        vector[u] += dv[a];
    }
    ops += vector.len() as u64 + s as u64;
    Ok(PairUpdate {
        lambda: lambda + delta,
        vector,
        iterations,
        regularized,
        collapsed,
        ops,
    })
}

/// Cholesky solve of the normal equations, with a small ridge when the system is
/// (numerically) singular. The flag reports whether the ridge was needed.
fn solve_normal(x: DMatrix<f64>, rhs: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
    if let Some(ch) = Cholesky::new(x.clone()) {
        let diag = ch.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        if hi > 0.0 && (lo / hi).powi(2) >= RCOND_LIMIT {
            return Ok((ch.solve(rhs), false));
        }
    }
    let s = x.nrows();
    let ridged = x + DMatrix::<f64>::identity(s, s) * RIDGE;
    let ch = Cholesky::new(ridged)
        .ok_or_else(|| Error::Numerical("normal equations not positive definite".into()))?;
    Ok((ch.solve(rhs), true))
}

/// Orthonormalizes `vectors` in the given order by classical Gram–Schmidt with one
/// reorthogonalization pass. Vectors that collapse below norm 1e-10 are dropped;
/// their input positions are returned alongside the kept vectors.
pub fn orthogonalize(vectors: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Vec<usize>) {
    let (kept, dropped, _) = orthogonalize_counted(vectors);
    (kept, dropped)
}

fn orthogonalize_counted(vectors: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Vec<usize>, u64) {
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    let mut dropped = Vec::new();
    let mut ops = 0u64;
    for (idx, mut v) in vectors.into_iter().enumerate() {
        let len = v.len() as u64;
        for _ in 0..2 {
            let coeffs: Vec<f64> = kept
                .iter()
                .map(|q| q.iter().zip(&v).map(|(a, b)| a * b).sum())
                .collect();
            for (q, c) in kept.iter().zip(coeffs) {
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
            ops += 4 * kept.len() as u64 * len;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        ops += 3 * len;
        if !(norm >= COLLAPSE_NORM) {
            log::warn!("eigenvector {idx} collapsed during orthogonalization; dropped");
            dropped.push(idx);
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        kept.push(v);
    }
    (kept, dropped, ops)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IledReport {
    pub iterations: Vec<usize>,
    pub regularized: usize,
    pub collapsed: usize,
    pub dropped: usize,
    pub neighborhood_size: usize,
    /// Arithmetic operations spent, counting multiply-adds and comparisons.
    pub ops: u64,
}

/// Updates every pair of `es` for the insertion `p`; `g_new` is the grown graph.
pub fn update_system(
    es: &EigenSystem,
    p: &Perturbation,
    g_new: &Graph,
    cfg: &IledConfig,
) -> Result<(EigenSystem, IledReport)> {
    cfg.validate()?;
    if es.node_count() != p.new_node() {
        return Err(Error::DimensionMismatch {
            expected: es.node_count(),
            got: p.new_node(),
        });
    }
    let ws = Workspace::new(g_new, p, cfg.neighborhood_order)?;
    let mut report = IledReport {
        neighborhood_size: ws.nodes.len(),
        ops: ws.setup_ops,
        ..IledReport::default()
    };
    let mut pairs = Vec::with_capacity(es.len());
    for k in 0..es.len() {
        let v = es.eigenvector(k);
        report.ops += v.len() as u64;
        let up = update_pair(es.eigenvalues()[k], &v, p, &ws, cfg)?;
        report.iterations.push(up.iterations);
        report.regularized += usize::from(up.regularized);
        report.collapsed += usize::from(up.collapsed);
        report.ops += up.ops;
        pairs.push((up.lambda, up.vector));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (values, vectors): (Vec<f64>, Vec<Vec<f64>>) = pairs.into_iter().unzip();
    let (kept, dropped, ops) = orthogonalize_counted(vectors);
    report.ops += ops;
    report.dropped = dropped.len();
    let values: Vec<f64> = values
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !dropped.contains(i))
        .map(|(_, l)| l)
        .collect();
    let system = EigenSystem::from_columns(values, kept, g_new.volume())?;
    Ok((system, report))
}
