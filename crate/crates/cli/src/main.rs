use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use commute_core::datagen::{gen_synthetic, SynthConfig};
use commute_core::detector::{
    robustness_report_with, score_point, train, train_graph, training_scores, Method,
    PrecisionRecall, ScoreConfig, ScoreResult, TrainConfig,
};
use commute_core::iled::IledConfig;
use commute_core::io::{
    read_edge_list, read_labels, read_points, write_labels, write_points, ReportWriter,
};
use commute_core::spectral::EigenConfig;
use commute_core::{persist, Error, Model};

#[derive(Parser)]
#[command(name = "commute", version, about = "Commute-time anomaly detection on mutual k-NN graphs")]
struct Cli {
    /// Log verbosity (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic train/test split with label sidecars.
    Gen(GenArgs),
    /// Train a model from a point CSV or an edge list.
    Train(TrainArgs),
    /// Score every point of a test CSV and write a report.
    Score(ScoreArgs),
    /// Like `score`, but emits each report row as soon as it is computed.
    Stream(ScoreArgs),
    /// Compare batch, iLED and iECT on one test set.
    Bench(BenchArgs),
    /// Training-score statistics before and after inserting each test point.
    Robustness(RobustnessArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1_100)]
    total_n: usize,
    #[arg(long, default_value_t = 100)]
    test_size: usize,
    #[arg(long, default_value_t = 0.02)]
    anomaly_fraction: f64,
    /// Fixed number of clusters (default: random in [min-clusters, max-clusters]).
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long, default_value_t = 2)]
    min_clusters: usize,
    #[arg(long, default_value_t = 6)]
    max_clusters: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 0.5)]
    sigma_min: f64,
    #[arg(long, default_value_t = 1.5)]
    sigma_max: f64,
    #[arg(long, default_value_t = 1.2)]
    spacing_min: f64,
    #[arg(long, default_value_t = 1.6)]
    spacing_max: f64,
    #[arg(long, default_value_t = 0.2)]
    box_inflation: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Normalize {
    Minmax,
    None,
}

#[derive(Args)]
struct TrainArgs {
    /// `.csv` point file, or a whitespace-separated `u v w` edge list.
    input: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 10)]
    k1: usize,
    #[arg(long, default_value_t = 20)]
    k2: usize,
    #[arg(long, default_value_t = 50)]
    m: usize,
    #[arg(long, default_value_t = 50)]
    top_n: usize,
    #[arg(long, value_enum, default_value_t = Normalize::Minmax)]
    normalize: Normalize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the top-N report (default: stdout).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Batch,
    Iled,
    Iect,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Batch => Method::Batch,
            MethodArg::Iled => Method::Iled,
            MethodArg::Iect => Method::Iect,
        }
    }
}

#[derive(Args)]
struct ScoringArgs {
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 5)]
    max_iter: usize,
    /// Score every candidate instead of stopping early below the threshold.
    #[arg(long)]
    no_prune: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ScoringArgs {
    fn config(&self, method: Method) -> ScoreConfig {
        ScoreConfig {
            method,
            iled: IledConfig {
                tol: self.tol,
                max_iter: self.max_iter,
                ..IledConfig::default()
            },
            eigen: EigenConfig {
                seed: self.seed,
                ..EigenConfig::default()
            },
            prune: !self.no_prune,
        }
    }
}

#[derive(Args)]
struct ScoreArgs {
    model: PathBuf,
    test: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Iect)]
    method: MethodArg,
    #[command(flatten)]
    scoring: ScoringArgs,
    /// Report destination (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for score-vs-index and latency-vs-index CSVs.
    #[arg(long)]
    plot_data: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    model: PathBuf,
    test: PathBuf,
    /// Planted labels (`index,label`) for a second ground truth.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RobustnessArgs {
    model: PathBuf,
    test: PathBuf,
    /// Only use the first N test points.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter(_) => 1,
        Error::Numerical(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Score(a) => cmd_score(a, false),
        Command::Stream(a) => cmd_score(a, true),
        Command::Bench(a) => cmd_bench(a),
        Command::Robustness(a) => cmd_robustness(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

type Result<T> = std::result::Result<T, Error>;

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_model(path: &Path) -> Result<Model> {
    persist::load(BufReader::new(File::open(path)?))
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let cfg = SynthConfig {
        seed: a.seed,
        total_n: a.total_n,
        n_clusters: a.clusters,
        cluster_range: (a.min_clusters, a.max_clusters),
        anomaly_fraction: a.anomaly_fraction,
        test_size: a.test_size,
        dim: a.dim,
        sigma_range: (a.sigma_min, a.sigma_max),
        spacing_range: (a.spacing_min, a.spacing_max),
        box_inflation: a.box_inflation,
    };
    let data = gen_synthetic(&cfg)?;
    fs::create_dir_all(&a.out_dir)?;
    write_points(&a.out_dir.join("train.csv"), &data.train)?;
    write_points(&a.out_dir.join("test.csv"), &data.test)?;
    write_labels(&a.out_dir.join("train_labels.csv"), &data.train_labels)?;
    write_labels(&a.out_dir.join("test_labels.csv"), &data.test_labels)?;
    eprintln!(
        "wrote {} training and {} test points to {}",
        data.train.len(),
        data.test.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn is_point_file(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = TrainConfig {
        k1: a.k1,
        k2: a.k2,
        m: a.m,
        top_n: a.top_n,
        normalize: matches!(a.normalize, Normalize::Minmax),
        eigen: EigenConfig {
            seed: a.seed,
            ..EigenConfig::default()
        },
        ..TrainConfig::default()
    };
    let model = if is_point_file(&a.input) {
        train(&read_points(&a.input)?, &cfg)?
    } else {
        train_graph(&read_edge_list(&a.input)?, &cfg)?
    };
    let outside = model.outside();
    if !outside.is_empty() {
        log::warn!(
            "{} input points lie outside the largest component and are reported as anomalies",
            outside.len()
        );
    }
    let mut file = BufWriter::new(File::create(&a.model)?);
    persist::save(&model, &mut file)?;
    file.flush()?;

    let mut out = output(a.report.as_deref())?;
    writeln!(out, "# tau={}", model.tau())?;
    writeln!(out, "rank,index,score,in_component")?;
    for (r, e) in model.top().iter().enumerate() {
        writeln!(out, "{},{},{},true", r + 1, e.index, e.score)?;
    }
    for (r, idx) in outside.iter().enumerate() {
        writeln!(out, "{},{},inf,false", model.top().len() + r + 1, idx)?;
    }
    out.flush()?;
    Ok(())
}

fn write_plot_data(dir: &Path, rows: &[(usize, ScoreResult)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut scores = BufWriter::new(File::create(dir.join("scores.csv"))?);
    writeln!(scores, "index,score,is_anomaly")?;
    let mut latency = BufWriter::new(File::create(dir.join("latency.csv"))?);
    writeln!(latency, "index,elapsed_s")?;
    for (i, r) in rows {
        writeln!(scores, "{i},{},{}", r.score, r.is_anomaly)?;
        writeln!(latency, "{i},{:.9}", r.elapsed)?;
    }
    scores.flush()?;
    latency.flush()?;
    Ok(())
}

fn cmd_score(a: ScoreArgs, streaming: bool) -> Result<()> {
    let model = load_model(&a.model)?;
    let test = read_points(&a.test)?;
    let cfg = a.scoring.config(a.method.into());
    let mut report = ReportWriter::new(output(a.out.as_deref())?)?;
    let mut rows = Vec::with_capacity(test.len());
    for (i, x) in test.rows().enumerate() {
        let r = score_point(&model, x, &cfg)?;
        if r.fallback {
            log::warn!("point {i}: iLED failed numerically, scored with batch");
        }
        if streaming {
            report.row(i, &r)?;
        }
        rows.push((i, r));
    }
    if !streaming {
        for (i, r) in &rows {
            report.row(*i, r)?;
        }
    }
    if let Some(dir) = &a.plot_data {
        write_plot_data(dir, &rows)?;
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let test = read_points(&a.test)?;
    let planted = a.labels.as_deref().map(read_labels).transpose()?;
    if let Some(l) = &planted {
        if l.len() != test.len() {
            return Err(Error::DimensionMismatch {
                expected: test.len(),
                got: l.len(),
            });
        }
    }
    let mut verdicts = Vec::new();
    for method in [Method::Batch, Method::Iled, Method::Iect] {
        let cfg = a.scoring.config(method);
        let results: Vec<ScoreResult> = test
            .rows()
            .map(|x| score_point(&model, x, &cfg))
            .collect::<Result<_>>()?;
        verdicts.push((method, results));
    }
    let batch_flags: Vec<bool> = verdicts[0].1.iter().map(|r| r.is_anomaly).collect();
    let mut out = output(a.out.as_deref())?;
    writeln!(
        out,
        "method,avg_score,flagged,precision_vs_batch,recall_vs_batch,precision_vs_planted,recall_vs_planted,mean_time_s"
    )?;
    for (method, results) in &verdicts {
        let flags: Vec<bool> = results.iter().map(|r| r.is_anomaly).collect();
        let n = results.len().max(1) as f64;
        let avg = results.iter().map(|r| r.score).sum::<f64>() / n;
        let time = results.iter().map(|r| r.elapsed).sum::<f64>() / n;
        let vs_batch = PrecisionRecall::of(&batch_flags, &flags);
        let (pp, pr) = match &planted {
            Some(l) => {
                let pr = PrecisionRecall::of(l, &flags);
                (format!("{:.4}", pr.precision()), format!("{:.4}", pr.recall()))
            }
            None => (String::new(), String::new()),
        };
        writeln!(
            out,
            "{method},{avg},{},{:.4},{:.4},{pp},{pr},{time:.9}",
            vs_batch.predicted,
            vs_batch.precision(),
            vs_batch.recall()
        )?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_robustness(a: RobustnessArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let test = read_points(&a.test)?;
    let before = training_scores(&model);
    let eigen = EigenConfig {
        seed: a.seed,
        ..EigenConfig::default()
    };
    let mut out = output(a.out.as_deref())?;
    writeln!(
        out,
        "index,before_avg,before_std,before_min,before_max,after_avg,after_std,after_min,after_max,mean_shift"
    )?;
    let limit = a.limit.unwrap_or(usize::MAX);
    for (i, x) in test.rows().enumerate().take(limit) {
        let r = robustness_report_with(&model, x, &before, &eigen)?;
        writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{},{}",
            r.before.average,
            r.before.std,
            r.before.min,
            r.before.max,
            r.after.average,
            r.after.std,
            r.after.min,
            r.after.max,
            r.mean_shift()
        )?;
    }
    out.flush()?;
    Ok(())
}
