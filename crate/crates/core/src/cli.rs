//! Command-line front end: `gen-data`, `precompute`, `train`, `eval`,
//! `verify`.

use std::ffi::OsString;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{
    cache_key, cache_path, load_dataset, load_model, read_cache, save_dataset, save_model,
    write_cache, write_metrics_csv, CachedGraph, CvInfo, ModelHeader,
};
use crate::nn_model::{GraphFeatures, ModelMode};
use crate::synthetic_data::{
    make_diameter_dataset, make_vector_target_dataset, Dataset, DiameterConfig, Task,
    VectorFieldConfig,
};
use crate::training_bench::{
    build_operators, default_test_rotation, evaluate_mse, graph_features_with, rotated_samples,
    run_cv_prepared, select_banks, verify_suite, Banks, CvConfig, CvPlan, MetricsRow,
    PipelineConfig, Sample, ScaleSelection,
};

#[derive(Debug, Parser)]
#[command(name = "escgnn", version, about = "Rotation-equivariant geometric scattering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic ellipsoid dataset.
    GenData(GenDataArgs),
    /// Select wavelet scales and cache operators and scattering features.
    Precompute(PrecomputeArgs),
    /// Train one cross-validation step and save the best-validation model.
    Train(TrainArgs),
    /// Evaluate a saved model on its held-out fold.
    Eval(EvalArgs),
    /// Run the property suite and write a JSON report.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long)]
    task: Task,
    #[arg(long, default_value_t = 512)]
    n_graphs: usize,
    /// Points per graph (the evaluation graph for the vector-field task).
    #[arg(long, default_value_t = 128)]
    n_points: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Size of the dense sample used for the vector-field targets.
    #[arg(long, default_value_t = 1024)]
    n_large: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScalesArg {
    Dyadic,
    Infogain,
}

#[derive(Debug, Args)]
struct PrecomputeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "equivariant")]
    mode: ModelMode,
    #[arg(long, value_enum, default_value = "infogain")]
    scales: ScalesArg,
    /// Largest dyadic exponent `J` (dyadic scales only).
    #[arg(long, default_value_t = 4)]
    j: usize,
    #[arg(long, default_value_t = 16)]
    t_max: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
    quantiles: Vec<f64>,
    /// Worker threads (overrides THREADS).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "equivariant")]
    mode: ModelMode,
    /// Must match the dataset's task when given.
    #[arg(long)]
    task: Option<Task>,
    #[arg(long, default_value_t = 500)]
    epochs_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Cross-validation step: index of the test fold.
    #[arg(long, default_value_t = 0)]
    fold: usize,
    /// Drop probability in the graph head (default 0.7).
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "on")]
    rotate_test: OnOff,
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
/// Failures print `error: <Kind>: <message>` on one line of stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            if e.use_stderr() {
                eprintln!("error: Usage: {}", first_line(&e.to_string()));
            } else {
                print!("{e}");
            }
            return code;
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init()
        .ok();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}: {}", e.kind(), first_line(&e.to_string()));
            1
        }
    }
}

fn first_line(s: &str) -> String {
    s.trim_start_matches("error: ")
        .lines()
        .next()
        .unwrap_or_default()
        .to_string()
}

fn configure_threads(jobs: Option<usize>) -> Result<()> {
    let threads = match jobs {
        Some(j) => Some(j),
        None => match std::env::var("THREADS") {
            Ok(v) => Some(v.parse::<usize>().map_err(|_| {
                Error::InvalidArgument(format!("THREADS must be a positive integer, got '{v}'"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::InvalidArgument("thread count must be positive".into()));
        }
        // a second call (e.g. repeated `run` in one process) keeps the first pool
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let jobs = match &cli.command {
        Command::Precompute(a) => a.jobs,
        _ => None,
    };
    configure_threads(jobs)?;
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Precompute(a) => precompute(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Verify(a) => verify(a),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    use std::io::Write;
    let json = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{json}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let dataset = match a.task {
        Task::Diameter => make_diameter_dataset(&DiameterConfig {
            n_graphs: a.n_graphs,
            n_points: a.n_points,
            k: a.k,
            seed: a.seed,
        })?,
        Task::VectorField => make_vector_target_dataset(&VectorFieldConfig {
            n_graphs: a.n_graphs,
            n_small: a.n_points,
            n_large: a.n_large,
            k_small: a.k,
            seed: a.seed,
            ..VectorFieldConfig::default()
        })?,
    };
    let manifest = save_dataset(&a.out, &dataset)?;
    print_json(&serde_json::json!({
        "task": manifest.task,
        "n_graphs": manifest.n_graphs,
        "epsilon": manifest.epsilon,
        "out": a.out,
    }))
}

/// Pipeline and banks chosen by `precompute`, stored beside the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineFile {
    pub pipeline: PipelineConfig,
    pub banks: Banks,
}

fn pipeline_path(data: &Path, mode: ModelMode) -> PathBuf {
    let name = match mode {
        ModelMode::Equivariant => "pipeline-equivariant.json",
        ModelMode::Ablated => "pipeline-ablated.json",
    };
    data.join(name)
}

fn graphs_of(dataset: &Dataset) -> Vec<crate::geometry::GeometricGraph> {
    dataset.records.iter().map(|r| r.graph.clone()).collect()
}

/// Features for every record, reading cache entries that exist and
/// (when `write` is set) writing the ones that do not.
fn cached_features(
    data: &Path,
    dataset: &Dataset,
    pf: &PipelineFile,
    write: bool,
) -> Result<(Vec<GraphFeatures>, usize)> {
    if write {
        std::fs::create_dir_all(data.join("cache"))?;
    }
    let vector = pf.pipeline.mode == ModelMode::Equivariant;
    let out: Vec<(GraphFeatures, bool)> = dataset
        .records
        .par_iter()
        .map(|rec| {
            let path = cache_path(data, &cache_key(rec, &pf.pipeline, &pf.banks)?);
            if path.exists() {
                let cached = read_cache(&mut BufReader::new(std::fs::File::open(&path)?))?;
                return Ok((cached.features, true));
            }
            let ops = build_operators(&rec.graph, pf.pipeline.weighted, vector)?;
            let features = graph_features_with(&rec.graph, &ops, &pf.banks, &pf.pipeline)?;
            if write {
                let entry = CachedGraph {
                    p: ops.p,
                    q: ops.q,
                    features,
                };
                let mut buf = Vec::new();
                write_cache(&mut buf, &entry)?;
                std::fs::write(&path, buf)?;
                return Ok((entry.features, false));
            }
            Ok((features, false))
        })
        .collect::<Result<_>>()?;
    let hits = out.iter().filter(|(_, hit)| *hit).count();
    Ok((out.into_iter().map(|(f, _)| f).collect(), hits))
}

fn precompute(a: PrecomputeArgs) -> Result<()> {
    let dataset = load_dataset(&a.data)?;
    let pipeline = PipelineConfig {
        scales: match a.scales {
            ScalesArg::Dyadic => ScaleSelection::Dyadic { j: a.j },
            ScalesArg::Infogain => {
                crate::wavelets::validate_infogain(a.t_max, &a.quantiles)?;
                ScaleSelection::Infogain {
                    t_max: a.t_max,
                    quantiles: a.quantiles.clone(),
                }
            }
        },
        ..PipelineConfig::new(a.mode)
    };
    let started = Instant::now();
    let banks = select_banks(&graphs_of(&dataset), &pipeline)?;
    let pf = PipelineFile { pipeline, banks };
    let mut json = serde_json::to_string_pretty(&pf)?;
    json.push('\n');
    std::fs::write(pipeline_path(&a.data, a.mode), json)?;
    let (_, hits) = cached_features(&a.data, &dataset, &pf, true)?;
    print_json(&serde_json::json!({
        "mode": a.mode,
        "scalar_scales": pf.banks.scalar.scales(),
        "vector_scales": pf.banks.vector.as_ref().map(|b| b.scales().to_vec()),
        "graphs": dataset.len(),
        "cache_hits": hits,
        "seconds": started.elapsed().as_secs_f64(),
    }))
}

/// The stored pipeline for `mode`, or the default InfoGain pipeline
/// computed on the spot.
fn pipeline_for(data: &Path, dataset: &Dataset, mode: ModelMode) -> Result<PipelineFile> {
    let path = pipeline_path(data, mode);
    if path.exists() {
        return Ok(serde_json::from_slice(&std::fs::read(path)?)?);
    }
    let pipeline = PipelineConfig::new(mode);
    let banks = select_banks(&graphs_of(dataset), &pipeline)?;
    Ok(PipelineFile { pipeline, banks })
}

fn train(a: TrainArgs) -> Result<()> {
    let dataset = load_dataset(&a.data)?;
    if let Some(task) = a.task {
        if task != dataset.task {
            return Err(Error::ConfigMismatch(format!(
                "--task {task} but the dataset holds {}",
                dataset.task
            )));
        }
    }
    if a.fold >= a.folds {
        return Err(Error::InvalidArgument(format!(
            "--fold {} out of range for {} folds",
            a.fold, a.folds
        )));
    }
    let pf = pipeline_for(&a.data, &dataset, a.mode)?;
    let (features, _) = cached_features(&a.data, &dataset, &pf, false)?;
    let mut config = CvConfig::new(a.mode, a.seed);
    config.pipeline = pf.pipeline.clone();
    config.folds = a.folds;
    config.steps = vec![a.fold];
    config.schedule.epochs_max = a.epochs_max;
    if let Some(p) = a.dropout {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout must lie in [0, 1), got {p}")));
        }
        config.shape.dropout = p;
    }
    let run = run_cv_prepared(&dataset, &config, pf.banks.clone(), &features)?;
    let model = run
        .models
        .into_iter()
        .next()
        .ok_or_else(|| Error::InvalidArgument("no model trained".into()))?;
    let header = ModelHeader {
        task: dataset.task,
        config: model.config.clone(),
        pipeline: pf.pipeline,
        banks: pf.banks,
        cv: CvInfo {
            folds: a.folds,
            seed: a.seed,
            step: a.fold,
        },
        manifest: model.manifest(),
    };
    save_model(&a.out, &header, &model)?;
    if let Some(path) = &a.metrics {
        write_metrics_csv(path, &run.metrics)?;
    }
    print_json(&run.summary)
}

#[derive(Debug, Serialize)]
struct EvalSummary {
    fold: usize,
    rotated: bool,
    test_graphs: usize,
    mse: f64,
    seconds: f64,
}

fn eval(a: EvalArgs) -> Result<()> {
    let dataset = load_dataset(&a.data)?;
    let (header, model) = load_model(&a.model)?;
    if header.task != dataset.task {
        return Err(Error::ConfigMismatch(format!(
            "model trained for {} but the dataset holds {}",
            header.task, dataset.task
        )));
    }
    let plan = CvPlan::new(dataset.len(), header.cv.folds, header.cv.seed)?;
    let test = plan.split(header.cv.step).test;
    let started = Instant::now();
    let samples: Vec<Sample> = if a.rotate_test == OnOff::On {
        let d = dataset.records[0].graph.d();
        rotated_samples(&dataset, &test, &default_test_rotation(d)?, &header.banks, &header.pipeline)?
    } else {
        let pf = PipelineFile {
            pipeline: header.pipeline.clone(),
            banks: header.banks.clone(),
        };
        let subset = Dataset {
            records: test.iter().map(|&i| dataset.records[i].clone()).collect(),
            ..dataset.clone()
        };
        let (features, _) = cached_features(&a.data, &subset, &pf, false)?;
        features
            .into_iter()
            .zip(&subset.records)
            .map(|(features, r)| {
                Ok(Sample {
                    features,
                    target: crate::training_bench::record_target(r)?,
                })
            })
            .collect::<Result<_>>()?
    };
    let mse = evaluate_mse(&model, &samples)?;
    let seconds = started.elapsed().as_secs_f64();
    if let Some(path) = &a.metrics {
        let row = MetricsRow {
            fold: header.cv.step,
            epoch: 0,
            split: if a.rotate_test == OnOff::On { "test" } else { "test_unrotated" }.into(),
            mse,
            lr: 0.0,
            wall_seconds: seconds,
            is_best: true,
        };
        write_metrics_csv(path, std::iter::once(&row))?;
    }
    print_json(&EvalSummary {
        fold: header.cv.step,
        rotated: a.rotate_test == OnOff::On,
        test_graphs: samples.len(),
        mse,
        seconds,
    })
}

fn verify(a: VerifyArgs) -> Result<()> {
    let report = verify_suite(a.seed)?;
    let json = serde_json::to_string_pretty(&report)?;
    match &a.report {
        Some(path) => std::fs::write(path, format!("{json}\n"))?,
        None => print_json(&report)?,
    }
    for c in report.checks.iter().filter(|c| !c.passed) {
        log::error!("check {} failed: measured {:e}, threshold {:e}", c.name, c.measured, c.threshold);
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Error::VerificationFailed(failed));
    }
    Ok(())
}
