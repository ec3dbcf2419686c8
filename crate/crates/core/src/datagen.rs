//! Synthetic benchmark data: Gaussian clusters plus uniformly scattered anomalies.
//!
//! Clusters are laid out as a random chain, each center placed a random multiple
//! of the two clusters' spreads away from the previous one, so neighbouring
//! clusters touch at their tails and the mutual k-NN graph stays mostly connected.
//! Anomalies are drawn uniformly from the bounding box of the cluster data, inflated
//! on every side.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::PointSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    /// Train plus test points.
    pub total_n: usize,
    /// Fixed cluster count; drawn from `cluster_range` when `None`.
    pub n_clusters: Option<usize>,
    pub cluster_range: (usize, usize),
    /// Share of training points that are uniform anomalies.
    pub anomaly_fraction: f64,
    pub test_size: usize,
    pub dim: usize,
    /// Per-cluster standard deviation range.
    pub sigma_range: (f64, f64),
    /// Center spacing as a multiple of the two clusters' summed deviations.
    pub spacing_range: (f64, f64),
    /// Relative growth of the bounding box on each side for uniform points.
    pub box_inflation: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            total_n: 1_100,
            n_clusters: None,
            cluster_range: (2, 6),
            anomaly_fraction: 0.02,
            test_size: 100,
            dim: 2,
            sigma_range: (0.5, 1.5),
            spacing_range: (1.2, 1.6),
            box_inflation: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub train: PointSet,
    pub test: PointSet,
    /// `true` marks a uniform (planted) anomaly.
    pub train_labels: Vec<bool>,
    pub test_labels: Vec<bool>,
}

struct Cluster {
    center: Vec<f64>,
    sigma: f64,
}

impl Cluster {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let noise = Normal::new(0.0, self.sigma).expect("positive sigma");
        self.center.iter().map(|c| c + noise.sample(rng)).collect()
    }
}

fn check(cfg: &SynthConfig) -> Result<()> {
    let bad = |m: String| Err(Error::InvalidParameter(m));
    if cfg.total_n < 200 {
        return bad(format!("total_n = {} must be at least 200", cfg.total_n));
    }
    if cfg.test_size > cfg.total_n / 2 {
        return bad(format!("test_size {} exceeds half of total_n", cfg.test_size));
    }
    if !(0.0..0.5).contains(&cfg.anomaly_fraction) {
        return bad(format!("anomaly_fraction {} must lie in [0, 0.5)", cfg.anomaly_fraction));
    }
    if cfg.dim == 0 {
        return bad("dim must be positive".into());
    }
    let (lo, hi) = cfg.cluster_range;
    if lo == 0 || lo > hi {
        return bad(format!("bad cluster range {lo}..={hi}"));
    }
    if cfg.n_clusters == Some(0) {
        return bad("n_clusters must be positive".into());
    }
    let ok = |(a, b): (f64, f64)| a > 0.0 && a <= b && b.is_finite();
    if !ok(cfg.sigma_range) || !ok(cfg.spacing_range) || !(cfg.box_inflation >= 0.0) {
        return bad("cluster spread, spacing and inflation must be positive".into());
    }
    Ok(())
}

fn uniform_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

pub fn gen_synthetic(cfg: &SynthConfig) -> Result<Synthetic> {
    check(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg
        .n_clusters
        .unwrap_or_else(|| rng.random_range(cfg.cluster_range.0..=cfg.cluster_range.1));

    let mut clusters: Vec<Cluster> = Vec::with_capacity(k);
    for c in 0..k {
        let sigma = uniform_in(&mut rng, cfg.sigma_range.0, cfg.sigma_range.1);
        let center = match clusters.last() {
            None => vec![0.0; cfg.dim],
            Some(prev) => {
                let dir: Vec<f64> = (0..cfg.dim).map(|_| rng.sample(StandardNormal)).collect();
                let len = dir.iter().map(|x: &f64| x * x).sum::<f64>().sqrt().max(1e-12);
                let step = uniform_in(&mut rng, cfg.spacing_range.0, cfg.spacing_range.1)
                    * (prev.sigma + sigma);
                prev.center.iter().zip(&dir).map(|(p, d)| p + step * d / len).collect()
            }
        };
        debug_assert_eq!(center.len(), cfg.dim, "cluster {c}");
        clusters.push(Cluster { center, sigma });
    }
    let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..1.5)).collect();
    let total_weight: f64 = weights.iter().sum();

    let n_train = cfg.total_n - cfg.test_size;
    let train_anomalies = (cfg.anomaly_fraction * n_train as f64).round() as usize;
    let test_anomalies = if cfg.anomaly_fraction > 0.0 {
        cfg.test_size / 2
    } else {
        0
    };
    let train_normal = n_train - train_anomalies;
    let test_normal = cfg.test_size - test_anomalies;

    let draw_normals = |count: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                let mut u = rng.random::<f64>() * total_weight;
                let mut c = 0;
                while c + 1 < k && u >= weights[c] {
                    u -= weights[c];
                    c += 1;
                }
                clusters[c].sample(rng)
            })
            .collect()
    };
    let normal_train = draw_normals(train_normal, &mut rng);
    let normal_test = draw_normals(test_normal, &mut rng);

    let mut lo = vec![f64::INFINITY; cfg.dim];
    let mut hi = vec![f64::NEG_INFINITY; cfg.dim];
    for p in normal_train.iter().chain(&normal_test) {
        for (d, &x) in p.iter().enumerate() {
            lo[d] = lo[d].min(x);
            hi[d] = hi[d].max(x);
        }
    }
    for d in 0..cfg.dim {
        let pad = cfg.box_inflation * (hi[d] - lo[d]);
        lo[d] -= pad;
        hi[d] += pad;
    }
    let draw_uniform = |count: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| (0..cfg.dim).map(|d| uniform_in(rng, lo[d], hi[d])).collect())
            .collect()
    };
    let anomaly_train = draw_uniform(train_anomalies, &mut rng);
    let anomaly_test = draw_uniform(test_anomalies, &mut rng);

    let (train, train_labels) = shuffled(normal_train, anomaly_train, &mut rng);
    let (test, test_labels) = shuffled(normal_test, anomaly_test, &mut rng);
    Ok(Synthetic {
        train: PointSet::from_rows(&train)?,
        test: if test.is_empty() {
            PointSet::empty(cfg.dim)
        } else {
            PointSet::from_rows(&test)?
        },
        train_labels,
        test_labels,
    })
}

fn shuffled(
    normal: Vec<Vec<f64>>,
    anomalies: Vec<Vec<f64>>,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut tagged: Vec<(Vec<f64>, bool)> = normal
        .into_iter()
        .map(|p| (p, false))
        .chain(anomalies.into_iter().map(|p| (p, true)))
        .collect();
    tagged.shuffle(rng);
    tagged.into_iter().unzip()
}
