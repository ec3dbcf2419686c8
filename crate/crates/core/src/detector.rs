//! Top-N anomaly detection by average commute time to the `k2` nearest nodes, and
//! online scoring of new points against a trained model.
//!
//! The `k2`-nearest search walks candidates in BFS order and stops as soon as the
//! running average of the best `k2` found so far drops below the cutoff: the true
//! score can only be smaller, so the point cannot be an anomaly.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::graph::{
    apply, attach_point, build_mutual_knn, laplacian, largest_component, normalize_minmax,
    Attacher, Attachment, BfsOrder, ComponentMap, Graph, Kernel, MinMax, Perturbation, PointSet,
};
use crate::iect::ctd_rankk;
use crate::iled::{update_system, IledConfig};
use crate::spectral::{eigendecompose_with, CommuteTimes, Counting, EigenConfig, EigenSystem};

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub k1: usize,
    pub k2: usize,
    pub m: usize,
    pub top_n: usize,
    pub normalize: bool,
    pub kernel: Kernel,
    pub eigen: EigenConfig,
    /// Use the adaptive cutoff during the top-N scan; disabling it scores every node
    /// exhaustively (same result, more work).
    pub prune: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k1: 10,
            k2: 20,
            m: 50,
            top_n: 50,
            normalize: true,
            kernel: Kernel::GaussianAuto,
            eigen: EigenConfig::default(),
            prune: true,
        }
    }
}

/// Hyperparameters a model was trained with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub k1: usize,
    pub k2: usize,
    /// Retained eigenpairs (after clamping to `n - 1`).
    pub m: usize,
    /// Size of the top list (after clamping to the component size).
    pub top_n: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopEntry {
    /// Id in the original input.
    pub index: usize,
    pub score: f64,
}

/// Training geometry needed to attach new points.
#[derive(Debug, Clone)]
pub struct Geometry {
    /// Component points in model feature space.
    pub points: PointSet,
    pub kth_distance: Vec<f64>,
    pub scaling: Option<MinMax>,
}

#[derive(Debug, Clone)]
pub struct Model {
    graph: Graph,
    eigensystem: EigenSystem,
    tau: f64,
    params: Params,
    component_map: ComponentMap,
    top: Vec<TopEntry>,
    geometry: Option<Geometry>,
    attacher: Option<Attacher>,
}

impl Model {
    /// Reassembles a model from stored parts. `top` must hold the scan result that
    /// produced `tau`.
    pub fn from_parts(
        graph: Graph,
        eigensystem: EigenSystem,
        tau: f64,
        params: Params,
        component_map: ComponentMap,
        top: Vec<TopEntry>,
        geometry: Option<Geometry>,
    ) -> Result<Self> {
        let n = graph.node_count();
        if eigensystem.node_count() != n || component_map.new_to_old.len() != n {
            return Err(Error::ModelFormat("model parts disagree on node count".into()));
        }
        if !(tau > 0.0) {
            return Err(Error::ModelFormat(format!("threshold {tau} must be positive")));
        }
        let attacher = match &geometry {
            Some(geo) => {
                if geo.points.len() != n || geo.kth_distance.len() != n {
                    return Err(Error::ModelFormat("geometry does not match graph".into()));
                }
                Some(Attacher::new(
                    geo.points.clone(),
                    geo.kth_distance.clone(),
                    params.sigma,
                    params.k1.min(n),
                )?)
            }
            None => None,
        };
        Ok(Model {
            graph,
            eigensystem,
            tau,
            params,
            component_map,
            top,
            geometry,
            attacher,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn eigensystem(&self) -> &EigenSystem {
        &self.eigensystem
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn component_map(&self) -> &ComponentMap {
        &self.component_map
    }

    /// Top-N training anomalies inside the modelled component, strongest first.
    pub fn top(&self) -> &[TopEntry] {
        &self.top
    }

    /// Original ids left out of the modelled component. They are anomalies by
    /// construction: no finite commute time connects them to the model graph.
    pub fn outside(&self) -> Vec<usize> {
        self.component_map.excluded()
    }

    pub fn geometry(&self) -> Option<&Geometry> {
        self.geometry.as_ref()
    }

    /// Bring a raw input point into model feature space.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        let geo = self
            .geometry
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("model has no point geometry".into()))?;
        if x.len() != geo.points.dim() {
            return Err(Error::DimensionMismatch {
                expected: geo.points.dim(),
                got: x.len(),
            });
        }
        match &geo.scaling {
            Some(s) => s.transform(x),
            None => Ok(x.to_vec()),
        }
    }

    /// Joins a raw point to the model graph as a new node.
    pub fn attach(&self, x: &[f64]) -> Result<Attachment> {
        let attacher = self
            .attacher
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("model has no point geometry to attach to".into()))?;
        attach_point(&self.graph, attacher, &self.transform(x)?)
    }

    /// Re-runs the top-N scan on the stored graph and eigensystem.
    pub fn rederive_tau(&self) -> Result<f64> {
        let top = top_n_scan(&self.graph, &self.eigensystem, self.params.k2, self.params.top_n, true)?;
        Ok(top.last().map_or(0.0, |e| e.1))
    }
}

/// Trains on raw points: optional min-max scaling, mutual k-NN graph, largest
/// component, eigendecomposition and the top-N scan.
pub fn train(points: &PointSet, cfg: &TrainConfig) -> Result<Model> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter("need at least 2 training points".into()));
    }
    let feature = if cfg.normalize {
        normalize_minmax(points)?
    } else {
        points.clone()
    };
    let knn = build_mutual_knn(&feature, cfg.k1, cfg.kernel)?;
    let (graph, map) = largest_component(&knn.graph)?;
    if graph.node_count() < points.len() {
        log::warn!(
            "graph is disconnected; modelling the largest component ({} of {} points)",
            graph.node_count(),
            points.len()
        );
    }
    let geometry = Geometry {
        points: feature.select(&map.new_to_old),
        kth_distance: map.new_to_old.iter().map(|&i| knn.kth_distance[i]).collect(),
        scaling: feature.scaling().cloned(),
    };
    fit(graph, map, knn.sigma, Some(geometry), cfg)
}

/// Trains on a pre-built graph. The resulting model answers commute-time queries
/// but cannot attach new points.
pub fn train_graph(graph: &Graph, cfg: &TrainConfig) -> Result<Model> {
    let (sub, map) = largest_component(graph)?;
    if sub.node_count() < graph.node_count() {
        log::warn!(
            "graph is disconnected; modelling the largest component ({} of {} nodes)",
            sub.node_count(),
            graph.node_count()
        );
    }
    fit(sub, map, 0.0, None, cfg)
}

fn fit(
    graph: Graph,
    map: ComponentMap,
    sigma: f64,
    geometry: Option<Geometry>,
    cfg: &TrainConfig,
) -> Result<Model> {
    let n = graph.node_count();
    if cfg.k2 == 0 || cfg.top_n == 0 {
        return Err(Error::InvalidParameter("k2 and top-n must be positive".into()));
    }
    if n < cfg.k2 + 1 {
        return Err(Error::InvalidGraph(format!(
            "largest component has {n} nodes, fewer than k2 + 1 = {}",
            cfg.k2 + 1
        )));
    }
    let es = eigendecompose_with(&laplacian(&graph), cfg.m, &cfg.eigen)?;
    let top_n = cfg.top_n.min(n);
    let scan = top_n_scan(&graph, &es, cfg.k2, top_n, cfg.prune)?;
    let tau = scan.last().map_or(0.0, |e| e.1);
    let top = scan
        .iter()
        .map(|&(u, score)| TopEntry {
            index: map.new_to_old[u],
            score,
        })
        .collect();
    let params = Params {
        k1: cfg.k1,
        k2: cfg.k2,
        m: es.len(),
        top_n,
        sigma,
    };
    Model::from_parts(graph, es, tau, params, map, top, geometry)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct MaxF(f64);

impl Eq for MaxF {}

impl PartialOrd for MaxF {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MaxF {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOutcome {
    pub score: f64,
    pub pruned: bool,
    pub examined: usize,
}

fn exact_average(best: &BinaryHeap<MaxF>) -> f64 {
    let mut v: Vec<f64> = best.iter().map(|x| x.0).collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Average of the `k2` smallest `dist(c)` over `candidates`, abandoning the search
/// once that average is provably below `cutoff`.
pub fn knn_search<I, F>(candidates: I, mut dist: F, k2: usize, cutoff: Option<f64>) -> SearchOutcome
where
    I: IntoIterator<Item = usize>,
    F: FnMut(usize) -> f64,
{
    let mut best: BinaryHeap<MaxF> = BinaryHeap::with_capacity(k2 + 1);
    let mut running = 0.0;
    let mut examined = 0;
    for c in candidates {
        let d = dist(c);
        examined += 1;
        if best.len() < k2 {
            best.push(MaxF(d));
            running += d;
        } else if d < best.peek().map_or(f64::INFINITY, |x| x.0) {
            let out = best.pop().map_or(0.0, |x| x.0);
            best.push(MaxF(d));
            running += d - out;
        }
        if let Some(cut) = cutoff {
            if best.len() == k2 && running / k2 as f64 <= cut * (1.0 + 1e-12) {
                let exact = exact_average(&best);
                if exact < cut {
                    return SearchOutcome {
                        score: exact,
                        pruned: true,
                        examined,
                    };
                }
            }
        }
    }
    SearchOutcome {
        score: if best.is_empty() {
            f64::INFINITY
        } else {
            exact_average(&best)
        },
        pruned: false,
        examined,
    }
}

/// Ranking order of the top list: higher score first, then lower index.
fn stronger(a: (usize, f64), b: (usize, f64)) -> bool {
    match a.1.total_cmp(&b.1) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a.0 < b.0,
    }
}

/// Score of every node without pruning, in node order.
pub fn exhaustive_scores<C: CommuteTimes + ?Sized>(graph: &Graph, es: &C, k2: usize) -> Vec<f64> {
    let n = graph.node_count();
    (0..n)
        .map(|u| knn_search((0..n).filter(|&v| v != u), |v| es.commute_time(u, v), k2, None).score)
        .collect()
}

/// The `top_n` highest-scoring nodes as `(node, score)`, strongest first. With
/// `prune` the scan uses the weakest retained score as its cutoff.
pub fn top_n_scan<C: CommuteTimes + ?Sized>(
    graph: &Graph,
    es: &C,
    k2: usize,
    top_n: usize,
    prune: bool,
) -> Result<Vec<(usize, f64)>> {
    let n = graph.node_count();
    if k2 == 0 || k2 >= n {
        return Err(Error::InvalidParameter(format!(
            "k2 = {k2} must satisfy 1 <= k2 < n = {n}"
        )));
    }
    let mut top: Vec<(usize, f64)> = Vec::with_capacity(top_n + 1);
    for u in 0..n {
        let cutoff = (prune && top.len() == top_n).then(|| top[top_n - 1].1);
        let candidates = BfsOrder::new(graph, &[u]).skip(1);
        let out = knn_search(candidates, |v| es.commute_time(u, v), k2, cutoff);
        if out.pruned {
            continue;
        }
        let entry = (u, out.score);
        if top.len() == top_n && !stronger(entry, top[top_n - 1]) {
            continue;
        }
        let at = top.partition_point(|&e| stronger(e, entry));
        top.insert(at, entry);
        top.truncate(top_n);
    }
    Ok(top)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Batch,
    Iled,
    Iect,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Batch => "batch",
            Method::Iled => "iled",
            Method::Iect => "iect",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "batch" => Ok(Method::Batch),
            "iled" => Ok(Method::Iled),
            "iect" => Ok(Method::Iect),
            other => Err(Error::InvalidParameter(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScoreConfig {
    pub method: Method,
    pub iled: IledConfig,
    pub eigen: EigenConfig,
    pub prune: bool,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            method: Method::Iect,
            iled: IledConfig::default(),
            eigen: EigenConfig::default(),
            prune: true,
        }
    }
}

impl ScoreConfig {
    pub fn with_method(method: Method) -> Self {
        ScoreConfig {
            method,
            ..ScoreConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreResult {
    /// Average commute time to the `k2` nearest training nodes; when `pruned` this
    /// is the running average at the moment the search stopped, which bounds the
    /// full score from above and is below `tau`.
    pub score: f64,
    pub is_anomaly: bool,
    pub pruned: bool,
    /// Backend that produced the score. Differs from the requested method only
    /// when `fallback` is set.
    pub method: Method,
    /// iLED failed numerically and the batch path was used instead.
    pub fallback: bool,
    pub neighbors_examined: usize,
    pub ctd_queries: u64,
    pub elapsed: f64,
    pub degenerate_attach: bool,
}

/// Eigenpairs to compute on a grown graph: a full-rank model stays full rank.
fn grown_rank(es: &EigenSystem) -> usize {
    if es.len() + 1 == es.node_count() {
        es.len() + 1
    } else {
        es.len()
    }
}

fn batch_system(model: &Model, g_new: &Graph, eigen: &EigenConfig) -> Result<EigenSystem> {
    eigendecompose_with(&laplacian(g_new), grown_rank(&model.eigensystem), eigen)
}

/// Scores one raw point against `model`. The model itself is never modified.
pub fn score_point(model: &Model, x: &[f64], cfg: &ScoreConfig) -> Result<ScoreResult> {
    let start = Instant::now();
    let att = model.attach(x)?;
    let mut result = score_perturbation(model, &att.perturbation, cfg)?;
    result.degenerate_attach = att.degenerate;
    result.elapsed = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Scores the node added by `p` against `model`.
pub fn score_perturbation(model: &Model, p: &Perturbation, cfg: &ScoreConfig) -> Result<ScoreResult> {
    let start = Instant::now();
    let n = model.graph.node_count();
    let seeds: Vec<usize> = p.edges().iter().map(|&(l, _)| l).collect();
    let cutoff = cfg.prune.then_some(model.tau);
    let k2 = model.params.k2;

    let (outcome, queries, method, fallback) = match cfg.method {
        Method::Iect => {
            let counted = Counting::new(&model.eigensystem);
            let out = knn_search(
                BfsOrder::new(&model.graph, &seeds),
                |j| ctd_rankk(&counted, p, j),
                k2,
                cutoff,
            );
            (out, counted.queries(), Method::Iect, false)
        }
        Method::Iled | Method::Batch => {
            let g_new = apply(&model.graph, p)?;
            let mut fallback = false;
            let (es_new, method) = if cfg.method == Method::Iled {
                match update_system(&model.eigensystem, p, &g_new, &cfg.iled) {
                    Ok((es, _)) => (es, Method::Iled),
                    Err(e) if e.is_numerical() => {
                        log::warn!("iLED update failed ({e}); falling back to batch");
                        fallback = true;
                        (batch_system(model, &g_new, &cfg.eigen)?, Method::Batch)
                    }
                    Err(e) => return Err(e),
                }
            } else {
                (batch_system(model, &g_new, &cfg.eigen)?, Method::Batch)
            };
            let counted = Counting::new(&es_new);
            let out = knn_search(
                BfsOrder::new(&model.graph, &seeds),
                |j| counted.commute_time(n, j),
                k2,
                cutoff,
            );
            (out, counted.queries(), method, fallback)
        }
    };
    Ok(ScoreResult {
        score: outcome.score,
        is_anomaly: !outcome.pruned && outcome.score >= model.tau,
        pruned: outcome.pruned,
        method,
        fallback,
        neighbors_examined: outcome.examined,
        ctd_queries: queries,
        elapsed: start.elapsed().as_secs_f64(),
        degenerate_attach: false,
    })
}

/// Scores each row of `xs` independently, in order.
pub fn score_stream(model: &Model, xs: &PointSet, cfg: &ScoreConfig) -> Vec<Result<ScoreResult>> {
    xs.rows().map(|x| score_point(model, x, cfg)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreStats {
    pub average: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl ScoreStats {
    pub fn of(values: &[f64]) -> ScoreStats {
        let n = values.len().max(1) as f64;
        let average = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - average).powi(2)).sum::<f64>() / n;
        ScoreStats {
            average,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Training-node score statistics before and after inserting one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessReport {
    pub before: ScoreStats,
    pub after: ScoreStats,
}

impl RobustnessReport {
    /// `|after − before| / before` on the average score.
    pub fn mean_shift(&self) -> f64 {
        (self.after.average - self.before.average).abs() / self.before.average
    }
}

/// Exhaustive scores of every training node on the model graph.
pub fn training_scores(model: &Model) -> Vec<f64> {
    exhaustive_scores(&model.graph, &model.eigensystem, model.params.k2)
}

pub fn robustness_report(model: &Model, x: &[f64]) -> Result<RobustnessReport> {
    robustness_report_with(model, x, &training_scores(model), &EigenConfig::default())
}

/// As [`robustness_report`], reusing precomputed `before` scores.
pub fn robustness_report_with(
    model: &Model,
    x: &[f64],
    before: &[f64],
    eigen: &EigenConfig,
) -> Result<RobustnessReport> {
    let att = model.attach(x)?;
    robustness_for_perturbation(model, &att.perturbation, before, eigen)
}

/// Re-scores every training node on the graph grown by `p` (batch eigensystem; the
/// new node counts as a candidate neighbour).
pub fn robustness_for_perturbation(
    model: &Model,
    p: &Perturbation,
    before: &[f64],
    eigen: &EigenConfig,
) -> Result<RobustnessReport> {
    let n = model.graph.node_count();
    if before.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: before.len(),
        });
    }
    let g_new = apply(&model.graph, p)?;
    let es_new = batch_system(model, &g_new, eigen)?;
    let k2 = model.params.k2;
    let after: Vec<f64> = (0..n)
        .map(|u| knn_search((0..=n).filter(|&v| v != u), |v| es_new.ctd(u, v), k2, None).score)
        .collect();
    Ok(RobustnessReport {
        before: ScoreStats::of(before),
        after: ScoreStats::of(&after),
    })
}

/// Agreement of predicted flags with reference flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecall {
    pub true_positives: usize,
    pub predicted: usize,
    pub actual: usize,
}

impl PrecisionRecall {
    pub fn of(truth: &[bool], predicted: &[bool]) -> PrecisionRecall {
        let tp = truth.iter().zip(predicted).filter(|(t, p)| **t && **p).count();
        PrecisionRecall {
            true_positives: tp,
            predicted: predicted.iter().filter(|&&p| p).count(),
            actual: truth.iter().filter(|&&t| t).count(),
        }
    }

    /// 1 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            1.0
        } else {
            self.true_positives as f64 / self.predicted as f64
        }
    }

    /// 1 when there was nothing to find.
    pub fn recall(&self) -> f64 {
        if self.actual == 0 {
            1.0
        } else {
            self.true_positives as f64 / self.actual as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::DenseCommute;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, Uniform};

    fn paw() -> Graph {
        Graph::from_edges(4, [(0, 1, 1.0), (1, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)]).unwrap()
    }

    fn blobs(seed: u64, per: usize, outliers: usize) -> PointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.6).unwrap();
        let mut rows = Vec::new();
        for c in [(0.0, 0.0), (3.0, 0.0), (1.5, 2.5)] {
            for _ in 0..per {
                rows.push(vec![c.0 + noise.sample(&mut rng), c.1 + noise.sample(&mut rng)]);
            }
        }
        // uniform points kept away from the cluster cores
        let box_ = Uniform::new(-4.0, 7.0).unwrap();
        while rows.len() < 3 * per + outliers {
            let p = [box_.sample(&mut rng), box_.sample(&mut rng)];
            let clear = [(0.0, 0.0), (3.0, 0.0), (1.5, 2.5)]
                .iter()
                .all(|c: &(f64, f64)| (p[0] - c.0).hypot(p[1] - c.1) > 2.5);
            if clear {
                rows.push(p.to_vec());
            }
        }
        PointSet::from_rows(&rows).unwrap()
    }

    #[test]
    fn search_prunes_and_scores_exactly() {
        let d = [5.0, 1.0, 2.0, 9.0, 0.5];
        let full = knn_search(0..5, |i| d[i], 2, None);
        assert_eq!(full.score, 0.75);
        assert!(!full.pruned);
        let cut = knn_search(0..5, |i| d[i], 2, Some(2.0));
        assert!(cut.pruned && cut.examined == 3 && cut.score == 1.5);
    }

    #[test]
    fn paw_graph_model() {
        let cfg = TrainConfig {
            m: 3,
            k2: 1,
            ..TrainConfig::default()
        };
        let model = train_graph(&paw(), &cfg).unwrap();
        assert!((model.eigensystem().ctd(0, 1) - 8.0).abs() < 1e-8);
        assert_eq!(model.params().top_n, 4);
        // node 0 is the pendant with the largest nearest commute time
        assert_eq!(model.top()[0].index, 0);
        // with every node in the list the threshold is the smallest score
        let scores = training_scores(&model);
        let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(model.tau(), min);
    }

    #[test]
    fn pruned_scan_matches_exhaustive() {
        let points = blobs(4, 60, 8);
        let cfg = TrainConfig {
            k1: 8,
            k2: 10,
            m: 30,
            top_n: 15,
            ..TrainConfig::default()
        };
        let pruned = train(&points, &cfg).unwrap();
        let full = train(&points, &TrainConfig { prune: false, ..cfg }).unwrap();
        assert_eq!(pruned.top(), full.top());
        assert_eq!(pruned.tau(), full.tau());
        assert_eq!(pruned.rederive_tau().unwrap(), pruned.tau());
    }

    #[test]
    fn planted_outliers_rank_high_under_exact_ctd() {
        let points = blobs(9, 100, 10);
        let model = train(
            &points,
            &TrainConfig {
                top_n: 20,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        // any planted point missing from the component is flagged as well
        let mut flagged: Vec<usize> = model.top().iter().map(|e| e.index).collect();
        flagged.extend(model.outside());
        let hits = (300..310).filter(|i| flagged.contains(i)).count();
        assert!(hits >= 9, "only {hits} of 10 planted outliers flagged");

        // and the exact commute time agrees with the truncated ranking at the top
        let exact = DenseCommute::new(model.graph()).unwrap();
        let exact_top = top_n_scan(model.graph(), &exact, 20, 20, false).unwrap();
        let exact_ids: Vec<usize> = exact_top
            .iter()
            .map(|&(u, _)| model.component_map().new_to_old[u])
            .collect();
        let planted_exact = (300..310)
            .filter(|i| exact_ids.contains(i) || model.outside().contains(i))
            .count();
        assert!(planted_exact >= 9);
    }

    #[test]
    fn streamed_verdicts_unaffected_by_pruning() {
        let points = blobs(2, 70, 6);
        let model = train(
            &points,
            &TrainConfig {
                k1: 8,
                k2: 10,
                m: 30,
                top_n: 12,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let tests = [vec![0.1, -0.2], vec![3.2, 0.3], vec![20.0, 20.0], vec![-3.5, 6.0]];
        for method in [Method::Iect, Method::Iled, Method::Batch] {
            for x in &tests {
                let mut cfg = ScoreConfig::with_method(method);
                let a = score_point(&model, x, &cfg).unwrap();
                cfg.prune = false;
                let b = score_point(&model, x, &cfg).unwrap();
                assert_eq!(a.is_anomaly, b.is_anomaly, "{method} at {x:?}");
                if a.pruned {
                    assert!(a.score < model.tau() && a.score >= b.score);
                }
            }
        }
    }

    #[test]
    fn duplicate_of_cluster_point_is_pruned_quickly() {
        let points = blobs(5, 80, 5);
        let model = train(&points, &TrainConfig::default()).unwrap();
        let inside = model.component_map().new_to_old[3];
        let r = score_point(&model, points.row(inside), &ScoreConfig::default()).unwrap();
        assert!(r.pruned && !r.is_anomaly, "{r:?} tau {}", model.tau());
        assert!(r.neighbors_examined <= 40, "{r:?}");
    }

    #[test]
    fn far_point_is_anomalous_under_iect() {
        // unnormalized, so the point is not clamped back into the training box
        let points = blobs(5, 80, 5);
        let cfg = TrainConfig {
            normalize: false,
            ..TrainConfig::default()
        };
        let model = train(&points, &cfg).unwrap();
        let r = score_point(&model, &[50.0, -50.0], &ScoreConfig::default()).unwrap();
        assert!(r.degenerate_attach && r.is_anomaly);
        assert!(r.ctd_queries == r.neighbors_examined as u64);
    }

    #[test]
    fn raising_tau_never_adds_anomalies() {
        let points = blobs(6, 60, 6);
        let model = train(&points, &TrainConfig::default()).unwrap();
        let stream = blobs(7, 5, 10);
        let base: Vec<bool> = score_stream(&model, &stream, &ScoreConfig::with_method(Method::Iect))
            .into_iter()
            .map(|r| r.unwrap().is_anomaly)
            .collect();
        let mut strict = model.clone();
        strict.tau *= 1.5;
        for (x, was) in stream.rows().zip(base) {
            let now = score_point(&strict, x, &ScoreConfig::default()).unwrap().is_anomaly;
            assert!(!now || was);
        }
    }

    #[test]
    fn empty_stream() {
        let points = blobs(1, 40, 0);
        let model = train(&points, &TrainConfig::default()).unwrap();
        assert!(score_stream(&model, &PointSet::empty(2), &ScoreConfig::default()).is_empty());
    }

    #[test]
    fn pendant_on_small_graph_moves_scores() {
        let cfg = TrainConfig {
            m: 3,
            k2: 1,
            ..TrainConfig::default()
        };
        let model = train_graph(&paw(), &cfg).unwrap();
        let before = training_scores(&model);
        let p = Perturbation::new(4, vec![(3, 1.0)]).unwrap();
        let rep = robustness_for_perturbation(&model, &p, &before, &EigenConfig::default()).unwrap();
        // node 0's nearest commute time stays c_01, which grows from 8 to 10
        assert!((before[0] - 8.0).abs() < 1e-8);
        assert!(rep.mean_shift() > 0.1);
    }

    #[test]
    fn vanishing_attachment_leaves_scores() {
        let cfg = TrainConfig {
            m: 3,
            k2: 1,
            ..TrainConfig::default()
        };
        let model = train_graph(&paw(), &cfg).unwrap();
        let before = training_scores(&model);
        let p = Perturbation::new(4, vec![(2, 1e-6)]).unwrap();
        let rep = robustness_for_perturbation(&model, &p, &before, &EigenConfig::default()).unwrap();
        assert!(rep.mean_shift() < 1e-5);
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Batch, Method::Iled, Method::Iect] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("lof".parse::<Method>().is_err());
    }
}
