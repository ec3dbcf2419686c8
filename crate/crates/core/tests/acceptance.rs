//! End-to-end acceptance checks. Runs without the libtest harness so every
//! verdict line is printed; exits non-zero if any check fails.

use std::collections::BTreeSet;
use std::time::Instant;

use commute_core::datagen::{gen_synthetic, SynthConfig, Synthetic};
use commute_core::detector::{exhaustive_scores, score_point, score_stream, train};
use commute_core::graph::{apply, laplacian};
use commute_core::iled::{update_system, IledConfig};
use commute_core::oracle::{hitting_linear, walk_montecarlo, DenseCommute, DEFAULT_STEP_CAP};
use commute_core::spectral::eigendecompose;
use commute_core::{Graph, Method, Model, Perturbation, PrecisionRecall, ScoreConfig, TrainConfig};
use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn paw() -> Graph {
    Graph::from_edges(4, [(0, 1, 1.0), (1, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)]).unwrap()
}

fn synth(seed: u64, total_n: usize, test_size: usize) -> Synthetic {
    gen_synthetic(&SynthConfig {
        seed,
        total_n,
        test_size,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn paw_graph() -> Verdict {
    let start = Instant::now();
    let es = eigendecompose(&laplacian(&paw()), 3).unwrap();
    let ctd = es.ctd(0, 1);
    let expected = [
        [0.69, -0.06, -0.31, -0.31],
        [-0.06, 0.19, -0.06, -0.06],
        [-0.31, -0.06, 0.35, 0.02],
        [-0.31, -0.06, 0.02, 0.35],
    ];
    let mut worst = 0.0f64;
    for (i, row) in expected.iter().enumerate() {
        for (j, &e) in row.iter().enumerate() {
            worst = worst.max((es.pseudo_inverse_entry(i, j) - e).abs());
        }
    }
    let p = Perturbation::new(4, vec![(3, 1.0)]).unwrap();
    let grown = eigendecompose(&laplacian(&apply(&paw(), &p).unwrap()), 4).unwrap();
    let ctd_grown = grown.ctd(0, 1);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        (ctd - 8.0).abs() <= 1e-8 && worst <= 0.005 && (ctd_grown - 10.0).abs() <= 1e-8 && secs < 1.0,
        format!("ctd = {ctd:.12}, pinv max err = {worst:.4}, grown ctd = {ctd_grown:.12}, {secs:.3}s"),
    )
}

fn random_graph(rng: &mut ChaCha8Rng) -> Graph {
    let n = rng.random_range(2..=12);
    let mut edges = Vec::new();
    let mut seen = BTreeSet::new();
    for i in 1..n {
        let p = rng.random_range(0..i);
        seen.insert((p, i));
        edges.push((p, i, 2.0 - rng.random_range(0.0..2.0)));
    }
    for _ in 0..rng.random_range(0..=2 * n) {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        let key = (a.min(b), a.max(b));
        if a != b && seen.insert(key) {
            edges.push((key.0, key.1, 2.0 - rng.random_range(0.0..2.0)));
        }
    }
    Graph::from_edges(n, edges).unwrap()
}

fn oracle_identities() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut sum_err, mut metric_err, mut lemma_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let g = random_graph(&mut rng);
        let n = g.node_count();
        let dense = DenseCommute::new(&g).unwrap();
        let h: Vec<Vec<f64>> = (0..n).map(|j| hitting_linear(&g, j).unwrap().h).collect();
        for i in 0..n {
            metric_err = metric_err.max(dense.ctd(i, i).abs());
            for j in 0..n {
                sum_err = sum_err.max((dense.ctd(i, j) - (h[j][i] + h[i][j])).abs());
                metric_err = metric_err.max((dense.ctd(i, j) - dense.ctd(j, i)).abs());
                if i != j && dense.ctd(i, j) <= 0.0 {
                    metric_err = f64::INFINITY;
                }
                for k in 0..n {
                    metric_err = metric_err.max(dense.ctd(i, j) - dense.ctd(i, k) - dense.ctd(k, j));
                }
            }
            let d = g.degree(i);
            let lhs: f64 = g.neighbors(i).iter().map(|&(l, w)| w / d * h[i][l]).sum();
            lemma_err = lemma_err.max((lhs - ((g.volume() - 2.0 * d) / d + 1.0)).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        sum_err <= 1e-8 && metric_err <= 1e-8 && lemma_err <= 1e-8 && secs < 30.0,
        format!(
            "200 graphs: |c - h - h| <= {sum_err:.2e}, metric slack {metric_err:.2e}, neighbour-return err {lemma_err:.2e}, {secs:.2}s"
        ),
    )
}

fn return_time() -> Verdict {
    let est = walk_montecarlo(&paw(), 0, 0, 100_000, 3, DEFAULT_STEP_CAP).unwrap();
    let z = (est.mean - 8.0).abs() / est.stderr;
    verdict(
        z <= 3.0 && est.aborted == 0,
        format!("mean {:.4} +- {:.4} ({z:.2} stderr from 8)", est.mean, est.stderr),
    )
}

fn pruning_soundness() -> Verdict {
    let start = Instant::now();
    let data = synth(4, 1_100, 100);
    let model = train(&data.train, &TrainConfig::default()).unwrap();
    let k2 = model.params().k2;
    let mut ranked: Vec<(usize, f64)> = exhaustive_scores(model.graph(), model.eigensystem(), k2)
        .into_iter()
        .enumerate()
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let map = &model.component_map().new_to_old;
    let exhaustive: BTreeSet<usize> = ranked.iter().take(model.params().top_n).map(|e| map[e.0]).collect();
    let pruned: BTreeSet<usize> = model.top().iter().map(|e| e.index).collect();
    let mut flips = 0;
    let mut total = 0;
    for method in [Method::Batch, Method::Iled, Method::Iect] {
        let on = score_stream(&model, &data.test, &ScoreConfig::with_method(method));
        let off = score_stream(
            &model,
            &data.test,
            &ScoreConfig {
                prune: false,
                ..ScoreConfig::with_method(method)
            },
        );
        for (a, b) in on.iter().zip(&off) {
            total += 1;
            if a.as_ref().unwrap().is_anomaly != b.as_ref().unwrap().is_anomaly {
                flips += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        exhaustive == pruned && flips == 0 && secs < 120.0,
        format!(
            "top-{} sets equal: {}, verdict flips {flips}/{total}, {secs:.1}s",
            model.params().top_n,
            exhaustive == pruned
        ),
    )
}

fn flags(model: &Model, data: &Synthetic, method: Method) -> Vec<bool> {
    score_stream(model, &data.test, &ScoreConfig::with_method(method))
        .into_iter()
        .map(|r| r.unwrap().is_anomaly)
        .collect()
}

fn method_agreement() -> Vec<Verdict> {
    let start = Instant::now();
    let data = synth(1, 1_100, 100);
    let model = train(&data.train, &TrainConfig::default()).unwrap();
    let batch = flags(&model, &data, Method::Batch);
    let iect = PrecisionRecall::of(&batch, &flags(&model, &data, Method::Iect));
    let iled = PrecisionRecall::of(&batch, &flags(&model, &data, Method::Iled));
    let planted = PrecisionRecall::of(&data.test_labels, &batch);
    let secs = start.elapsed().as_secs_f64();
    vec![
        verdict(
            iect.recall() == 1.0 && iect.precision() >= 0.7 && secs < 300.0,
            format!(
                "batch flags {}; iECT precision {:.3} recall {:.3}",
                iect.actual,
                iect.precision(),
                iect.recall()
            ),
        ),
        verdict(
            iled.precision() == 1.0 && secs < 300.0,
            format!(
                "iLED precision {:.3} recall {:.3} (batch vs planted: precision {:.3} recall {:.3}), {secs:.1}s",
                iled.precision(),
                iled.recall(),
                planted.precision(),
                planted.recall()
            ),
        ),
    ]
}

fn robustness() -> Verdict {
    let start = Instant::now();
    let data = synth(1, 1_100, 100);
    let model = train(&data.train, &TrainConfig::default()).unwrap();
    let before = commute_core::detector::training_scores(&model);
    let eigen = Default::default();
    let shifts: Vec<f64> = data
        .test
        .rows()
        .take(20)
        .map(|x| {
            commute_core::detector::robustness_report_with(&model, x, &before, &eigen)
                .unwrap()
                .mean_shift()
        })
        .collect();
    let mean = shifts.iter().sum::<f64>() / shifts.len() as f64;
    let worst = shifts.iter().copied().fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        mean <= 0.05 && secs < 300.0,
        format!("mean relative shift {:.3}% (worst {:.3}%), {secs:.1}s", 100.0 * mean, 100.0 * worst),
    )
}

fn iect_constant_time() -> Verdict {
    let start = Instant::now();
    let cfg = ScoreConfig::with_method(Method::Iect);
    let mut means = Vec::new();
    let mut formula_holds = true;
    let mut query_means = Vec::new();
    for n in [1_000, 5_000, 10_000] {
        let data = synth(7, n + 200, 200);
        let model = train(&data.train, &TrainConfig::default()).unwrap();
        let normals: Vec<&[f64]> = data
            .test
            .rows()
            .zip(&data.test_labels)
            .filter(|(_, &l)| !l)
            .map(|(x, _)| x)
            .collect();
        let mut queries = 0u64;
        for x in &normals {
            let r = score_point(&model, x, &cfg).unwrap();
            let rank = model.attach(x).unwrap().perturbation.rank() as u64;
            formula_holds &= r.ctd_queries == rank * r.neighbors_examined as u64;
            queries += r.ctd_queries;
        }
        query_means.push(queries as f64 / normals.len() as f64);
        let mut best = f64::INFINITY;
        for _ in 0..15 {
            let t = Instant::now();
            for x in &normals {
                std::hint::black_box(score_point(&model, x, &cfg).unwrap());
            }
            best = best.min(t.elapsed().as_secs_f64() / normals.len() as f64);
        }
        means.push(best);
    }
    let spread = means.iter().copied().fold(0.0, f64::max) / means.iter().copied().fold(f64::INFINITY, f64::min);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        spread < 2.0 && formula_holds && secs < 900.0,
        format!(
            "mean time per point {:?} us (spread {spread:.2}x); queries = rank x examined on every point: {formula_holds}; mean queries {:?}; {secs:.1}s",
            means.iter().map(|t| (t * 1e7).round() / 10.0).collect::<Vec<_>>(),
            query_means.iter().map(|q| q.round()).collect::<Vec<_>>()
        ),
    )
}

/// Circulant graph (links to the next two nodes) with jittered weights, so the
/// two-hop neighbourhood of an attachment does not depend on `n`.
fn ring(n: usize, rng: &mut ChaCha8Rng) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for s in 1..=2 {
            let j = (i + s) % n;
            edges.push((i.min(j), i.max(j), rng.random_range(0.5..1.5)));
        }
    }
    Graph::from_edges(n, edges).unwrap()
}

fn iled_linear_cost() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ops = Vec::new();
    let mut sizes = Vec::new();
    for n in [500, 1_000, 2_000] {
        let g = ring(n, &mut rng);
        let es = eigendecompose(&laplacian(&g), 10).unwrap();
        let p = Perturbation::new(n, vec![(0, 1.0), (1, 0.5)]).unwrap();
        let g_new = apply(&g, &p).unwrap();
        let (_, report) = update_system(&es, &p, &g_new, &IledConfig::default()).unwrap();
        ops.push(report.ops as f64);
        sizes.push(report.neighborhood_size);
    }
    let ratio = ops[2] / ops[0];
    let step = ops[1] / ops[0];
    let same_n = sizes.iter().all(|&s| s == sizes[0]);
    verdict(
        (2.0..=8.0).contains(&ratio) && (1.0..=4.0).contains(&step) && same_n,
        format!("ops {ops:?} for n = 500, 1000, 2000; 500 -> 2000 ratio {ratio:.2} (linear 4); neighbourhood {sizes:?}"),
    )
}

/// (mean |<v_iled, v_dense>|, mean eigenvalue relative error, worst relative error)
fn fidelity(model: &Model, points: &[&[f64]], pairs: usize) -> (f64, f64, f64) {
    let (mut dots, mut errs, mut worst, mut count) = (0.0, 0.0, 0.0f64, 0usize);
    for x in points {
        let p = model.attach(x).unwrap().perturbation;
        let g_new = apply(model.graph(), &p).unwrap();
        let (updated, _) = update_system(model.eigensystem(), &p, &g_new, &IledConfig::default()).unwrap();
        let dense = SymmetricEigen::new(laplacian(&g_new).to_dense());
        let mut order: Vec<usize> = (0..dense.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| dense.eigenvalues[a].total_cmp(&dense.eigenvalues[b]));
        for k in 0..pairs.min(updated.len()) {
            let col = order[k + 1];
            let exact = dense.eigenvalues[col];
            let v = updated.eigenvector(k);
            let dot: f64 = v.iter().zip(dense.eigenvectors.column(col).iter()).map(|(a, b)| a * b).sum();
            let err = (updated.eigenvalues()[k] - exact).abs() / exact;
            dots += dot.abs();
            errs += err;
            worst = worst.max(err);
            count += 1;
        }
    }
    (dots / count as f64, errs / count as f64, worst)
}

fn iled_fidelity() -> Verdict {
    let data = synth(9, 240, 40);
    let model = train(
        &data.train,
        &TrainConfig {
            m: 10,
            top_n: 10,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let pick = |want: bool| -> Vec<&[f64]> {
        data.test
            .rows()
            .zip(&data.test_labels)
            .filter(|(_, &l)| l == want)
            .map(|(x, _)| x)
            .take(20)
            .collect()
    };
    let normal = pick(false);
    let planted = pick(true);
    let (dot, err, worst) = fidelity(&model, &normal, 10);
    let (a_dot, a_err, a_worst) = fidelity(&model, &planted, 10);
    verdict(
        normal.len() == 20 && dot >= 0.9 && err <= 0.05,
        format!(
            "{}-node model; normal: |dot| {dot:.4}, eigenvalue err {:.3}% (worst {:.3}%); planted: |dot| {a_dot:.4}, err {:.3}% (worst {:.3}%)",
            model.graph().node_count(),
            100.0 * err,
            100.0 * worst,
            100.0 * a_err,
            100.0 * a_worst
        ),
    )
}

fn main() {
    let mut results: Vec<(&str, Verdict)> = vec![
        ("1 paw graph", paw_graph()),
        ("2 oracle identities", oracle_identities()),
        ("3 return time", return_time()),
        ("4 pruning soundness", pruning_soundness()),
    ];
    let mut agreement = method_agreement().into_iter();
    results.push(("5a iECT vs batch", agreement.next().unwrap()));
    results.push(("5b iLED vs batch", agreement.next().unwrap()));
    results.push(("6 robustness", robustness()));
    results.push(("7 iECT constant time", iect_constant_time()));
    results.push(("8 iLED linear cost", iled_linear_cost()));
    results.push(("9 iLED fidelity", iled_fidelity()));

    let mut failed = 0;
    for (name, v) in &results {
        println!("{} criterion {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
