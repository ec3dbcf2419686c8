//! Brute-force references for commute and hitting times.
//!
//! Nothing here shares code with the sparse eigensolver: commute times come from a
//! dense eigendecomposition, hitting times from a direct linear solve, and a
//! Monte-Carlo walker samples the random walk itself.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{laplacian, Graph};
use crate::iect::HittingTimes;
use crate::spectral::CommuteTimes;

pub const DEFAULT_DENSE_CAP: usize = 5_000;
pub const DEFAULT_STEP_CAP: u64 = 1_000_000;

fn check_dense(g: &Graph, cap: usize) -> Result<()> {
    let n = g.node_count();
    if n > cap {
        return Err(Error::TooLarge { n, cap });
    }
    if n < 2 || !g.is_connected() {
        return Err(Error::Disconnected(
            "oracle requires a connected graph with at least 2 nodes".into(),
        ));
    }
    Ok(())
}

/// Exact pseudo-inverse from a full dense eigendecomposition.
#[derive(Debug, Clone)]
pub struct DenseCommute {
    pinv: DMatrix<f64>,
    volume: f64,
}

impl DenseCommute {
    pub fn new(g: &Graph) -> Result<Self> {
        Self::with_cap(g, DEFAULT_DENSE_CAP)
    }

    pub fn with_cap(g: &Graph, cap: usize) -> Result<Self> {
        check_dense(g, cap)?;
        let n = g.node_count();
        let eig = SymmetricEigen::new(laplacian(g).to_dense());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut pinv = DMatrix::zeros(n, n);
        // the smallest eigenvalue is the null pair of a connected graph
        for &k in &order[1..] {
            let v = eig.eigenvectors.column(k);
            pinv += (v * v.transpose()) / eig.eigenvalues[k];
        }
        Ok(DenseCommute {
            pinv,
            volume: g.volume(),
        })
    }

    pub fn pseudo_inverse(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    pub fn ctd(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let p = &self.pinv;
        self.volume * (p[(i, i)] + p[(j, j)] - 2.0 * p[(i, j)])
    }
}

impl CommuteTimes for DenseCommute {
    fn node_count(&self) -> usize {
        self.pinv.nrows()
    }

    fn volume(&self) -> f64 {
        self.volume
    }

    fn commute_time(&self, i: usize, j: usize) -> f64 {
        self.ctd(i, j)
    }
}

/// Exact commute time between `i` and `j`.
pub fn ctd_dense(g: &Graph, i: usize, j: usize) -> Result<f64> {
    Ok(DenseCommute::new(g)?.ctd(i, j))
}

/// Expected steps `h[i]` from every node `i` to `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct HittingSolution {
    pub target: usize,
    pub h: Vec<f64>,
}

/// Solves `h_i = 1 + Σ_l p_il h_l` for `i ≠ target`, `h_target = 0`.
pub fn hitting_linear(g: &Graph, target: usize) -> Result<HittingSolution> {
    check_dense(g, DEFAULT_DENSE_CAP)?;
    let n = g.node_count();
    if target >= n {
        return Err(Error::InvalidParameter(format!("target {target} out of range")));
    }
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for i in 0..n {
        a[(i, i)] = 1.0;
        if i == target {
            continue;
        }
        b[i] = 1.0;
        let d = g.degree(i);
        for &(l, w) in g.neighbors(i) {
            a[(i, l)] -= w / d;
        }
    }
    let h = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical("singular hitting-time system".into()))?;
    let mut h: Vec<f64> = h.iter().copied().collect();
    h[target] = 0.0;
    Ok(HittingSolution { target, h })
}

/// All pairwise hitting times, `h[(i, j)]` from `i` to `j`.
#[derive(Debug, Clone)]
pub struct HittingMatrix {
    h: DMatrix<f64>,
}

impl HittingMatrix {
    pub fn new(g: &Graph) -> Result<Self> {
        let n = g.node_count();
        let mut h = DMatrix::zeros(n, n);
        for j in 0..n {
            let sol = hitting_linear(g, j)?;
            for i in 0..n {
                h[(i, j)] = sol.h[i];
            }
        }
        Ok(HittingMatrix { h })
    }
}

impl HittingTimes for HittingMatrix {
    fn node_count(&self) -> usize {
        self.h.nrows()
    }

    fn hitting_time(&self, from: usize, to: usize) -> f64 {
        self.h[(from, to)]
    }
}

/// Monte-Carlo estimate of a hitting (or, for `from == to`, return) time.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Trials that reached the target within the step cap.
    pub completed: u64,
    /// Trials abandoned at the step cap; excluded from the mean.
    pub aborted: u64,
}

/// Simulates `trials` independent walks from `from` until they first reach `to`
/// (after at least one step). Trial `t` draws from its own stream `(seed, t)`, so
/// the result depends only on the arguments.
pub fn walk_montecarlo(
    g: &Graph,
    from: usize,
    to: usize,
    trials: u64,
    seed: u64,
    step_cap: u64,
) -> Result<WalkEstimate> {
    let n = g.node_count();
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if from >= n || to >= n {
        return Err(Error::InvalidParameter("walk endpoint out of range".into()));
    }
    if (0..n).any(|i| g.neighbors(i).is_empty()) {
        return Err(Error::InvalidGraph("isolated node traps the walk".into()));
    }
    let cumulative: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            g.neighbors(i)
                .iter()
                .scan(0.0, |acc, &(_, w)| {
                    *acc += w;
                    Some(*acc)
                })
                .collect()
        })
        .collect();

    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    let (mut completed, mut aborted) = (0u64, 0u64);
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        let mut at = from;
        let mut steps = 0u64;
        let reached = loop {
            if steps == step_cap {
                break false;
            }
            let cum = &cumulative[at];
            let u = rng.random::<f64>() * cum[cum.len() - 1];
            let k = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
            at = g.neighbors(at)[k].0;
            steps += 1;
            if at == to {
                break true;
            }
        };
        if reached {
            completed += 1;
            let s = steps as f64;
            sum += s;
            sum_sq += s * s;
        } else {
            aborted += 1;
        }
    }
    if completed == 0 {
        return Err(Error::Numerical("every walk hit the step cap".into()));
    }
    let c = completed as f64;
    let mean = sum / c;
    let var = if completed > 1 {
        ((sum_sq - c * mean * mean) / (c - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(WalkEstimate {
        mean,
        stderr: (var / c).sqrt(),
        completed,
        aborted,
    })
}
