//! Smallest nonzero Laplacian eigenpairs by Lanczos iteration on the pseudo-inverse.
//!
//! On a connected graph `L+` restricted to the complement of the constant vector is
//! positive definite, and its largest eigenvalues are the reciprocals of the smallest
//! nonzero eigenvalues of `L`. `L+ x` for `x ⟂ 1` is applied exactly by grounding one
//! node (deleting its row and column), solving the remaining positive definite system
//! with a sparse LDLᵀ factorization and re-centering the solution.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sprs::{CsMat, FillInReduction, SymmetryCheck};
use sprs_ldl::{Ldl, LdlNumeric};

use crate::error::{Error, Result};

/// Below this Krylov dimension the whole space orthogonal to `1` is spanned.
const FULL_SPAN_LIMIT: usize = 400;
const CHECK_STRIDE: usize = 20;

enum Factor {
    Ldl(Box<LdlNumeric<f64, usize>>),
    /// A single remaining diagonal entry (the sparse factorization needs at least 2).
    Scalar(f64),
}

pub(crate) struct PinnedSolver {
    n: usize,
    pinned: usize,
    factor: Factor,
}

impl PinnedSolver {
    pub(crate) fn new(lap: &CsMat<f64>) -> Result<Self> {
        let n = lap.rows();
        let pinned = (0..n)
            .max_by(|&a, &b| {
                let da = lap.get(a, a).copied().unwrap_or(0.0);
                let db = lap.get(b, b).copied().unwrap_or(0.0);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .unwrap_or(0);
        let reduced = without_row_col(lap, pinned);
        if n == 2 {
            let d = reduced.get(0, 0).copied().unwrap_or(0.0);
            if !(d > 0.0) {
                return Err(Error::Disconnected("grounded Laplacian is singular".into()));
            }
            return Ok(PinnedSolver {
                n,
                pinned,
                factor: Factor::Scalar(d),
            });
        }
        let ldl = Ldl::new()
            .fill_in_reduction(FillInReduction::ReverseCuthillMcKee)
            .check_symmetry(SymmetryCheck::DontCheckSymmetry)
            .numeric(reduced.view())
            .map_err(|e| Error::Numerical(format!("grounded Laplacian factorization: {e}")))?;
        if ldl.d().iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::Disconnected(
                "grounded Laplacian is not positive definite".into(),
            ));
        }
        Ok(PinnedSolver {
            n,
            pinned,
            factor: Factor::Ldl(Box::new(ldl)),
        })
    }

    /// `L+ x` for `x` orthogonal to the constant vector.
    pub(crate) fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut rhs = Vec::with_capacity(self.n - 1);
        rhs.extend_from_slice(&x[..self.pinned]);
        rhs.extend_from_slice(&x[self.pinned + 1..]);
        let y: Vec<f64> = match &self.factor {
            Factor::Ldl(ldl) => ldl.solve(&rhs[..]),
            Factor::Scalar(d) => vec![rhs[0] / d],
        };
        let mut out = Vec::with_capacity(self.n);
        out.extend_from_slice(&y[..self.pinned]);
        out.push(0.0);
        out.extend_from_slice(&y[self.pinned..]);
        let mean = out.iter().sum::<f64>() / self.n as f64;
        for v in &mut out {
            *v -= mean;
        }
        out
    }
}

fn without_row_col(m: &CsMat<f64>, drop: usize) -> CsMat<f64> {
    let n = m.rows();
    let mut indptr = Vec::with_capacity(n);
    let mut indices = Vec::with_capacity(m.nnz());
    let mut data = Vec::with_capacity(m.nnz());
    indptr.push(0);
    for (r, row) in m.outer_iterator().enumerate() {
        if r == drop {
            continue;
        }
        for (c, &v) in row.iter() {
            if c == drop {
                continue;
            }
            indices.push(if c > drop { c - 1 } else { c });
            data.push(v);
        }
        indptr.push(indices.len());
    }
    CsMat::new((n - 1, n - 1), indptr, indices, data)
}

pub(crate) fn matvec(m: &CsMat<f64>, x: &[f64]) -> Vec<f64> {
    m.outer_iterator()
        .map(|row| row.iter().map(|(c, &v)| v * x[c]).sum())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn remove_mean(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    for v in x.iter_mut() {
        *v -= mean;
    }
}

/// Two passes of classical Gram–Schmidt against the basis and the constant vector.
fn reorthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        remove_mean(w);
        for q in basis {
            let c = dot(q, w);
            for (wi, qi) in w.iter_mut().zip(q) {
                *wi -= c * qi;
            }
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let before = norm(&v);
    reorthogonalize(&mut v, basis);
    let after = norm(&v);
    if after <= 1e-8 * before {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= after);
    Some(v)
}

pub(crate) struct Pairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub max_residual: f64,
}

struct Ritz {
    theta: Vec<f64>,
    coords: DMatrix<f64>,
}

fn ritz(alphas: &[f64], betas: &[f64]) -> Ritz {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let theta = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let coords = DMatrix::from_fn(k, k, |r, c| eig.eigenvectors[(r, order[c])]);
    Ritz { theta, coords }
}

/// The `m` smallest nonzero eigenpairs of the connected-graph Laplacian `lap`.
pub(crate) fn smallest_nonzero(
    lap: &CsMat<f64>,
    m: usize,
    seed: u64,
    residual_tol: f64,
) -> Result<Pairs> {
    let n = lap.rows();
    let dim = n - 1;
    let solver = PinnedSolver::new(lap)?;
    let norm_bound = 2.0
        * (0..n)
            .map(|i| lap.get(i, i).copied().unwrap_or(0.0))
            .fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let first = random_unit(&mut rng, n, &basis)
        .ok_or_else(|| Error::Numerical("could not draw a Lanczos start vector".into()))?;
    basis.push(first);

    let full_span = dim <= FULL_SPAN_LIMIT;
    let cap = if full_span { dim } else { dim.min((10 * m).max(600)) };
    let mut target = if full_span { dim } else { dim.min(2 * m + CHECK_STRIDE) };
    let mut scale: f64 = 0.0;

    loop {
        let k = basis.len() - 1;
        let mut w = solver.apply(&basis[k]);
        let alpha = dot(&basis[k], &w);
        scale = scale.max(alpha.abs());
        for (wi, qi) in w.iter_mut().zip(&basis[k]) {
            *wi -= alpha * qi;
        }
        if k > 0 {
            let beta_prev = betas[k - 1];
            for (wi, qi) in w.iter_mut().zip(&basis[k - 1]) {
                *wi -= beta_prev * qi;
            }
        }
        reorthogonalize(&mut w, &basis);
        alphas.push(alpha);
        let steps = alphas.len();
        if steps >= dim {
            break;
        }
        let beta = norm(&w);
        if beta <= 1e-10 * scale {
            // invariant subspace found: continue in a fresh orthogonal direction
            match random_unit(&mut rng, n, &basis) {
                Some(v) => {
                    betas.push(0.0);
                    basis.push(v);
                }
                None => break,
            }
        } else {
            betas.push(beta);
            w.iter_mut().for_each(|x| *x /= beta);
            basis.push(w);
        }

        if steps >= target && !full_span {
            let r = ritz(&alphas, &betas[..steps - 1]);
            let last_beta = betas[steps - 1];
            let converged = (0..m.min(steps)).all(|j| {
                let lambda = 1.0 / r.theta[j];
                lambda * norm_bound * (last_beta * r.coords[(steps - 1, j)]).abs()
                    <= 0.1 * residual_tol
            });
            if (converged && steps >= m) || steps >= cap {
                basis.pop();
                break;
            }
            target = steps + CHECK_STRIDE;
        }
    }

    let steps = alphas.len();
    basis.truncate(steps);
    if steps < m {
        return Err(Error::Numerical(format!(
            "Krylov space exhausted after {steps} of {m} requested pairs"
        )));
    }
    let r = ritz(&alphas, &betas[..steps - 1]);
    let mut values = Vec::with_capacity(m);
    let mut vectors = Vec::with_capacity(m);
    let mut max_residual: f64 = 0.0;
    for j in 0..m {
        if !(r.theta[j] > 0.0) {
            return Err(Error::Disconnected(
                "pseudo-inverse has a non-positive Ritz value".into(),
            ));
        }
        let mut y = vec![0.0; n];
        for (c, q) in basis.iter().enumerate() {
            let s = r.coords[(c, j)];
            for (yi, qi) in y.iter_mut().zip(q) {
                *yi += s * qi;
            }
        }
        remove_mean(&mut y);
        let len = norm(&y);
        y.iter_mut().for_each(|x| *x /= len);
        let ly = matvec(lap, &y);
        let lambda = dot(&y, &ly);
        let res = ly
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        max_residual = max_residual.max(res);
        values.push(lambda);
        vectors.push(y);
    }
    Ok(Pairs {
        values,
        vectors,
        max_residual,
    })
}
