use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::features::{precompute_features, select_banks, Banks, PipelineConfig};
use super::train::{evaluate_mse, train_fold, CvPlan, MetricsRow, Sample, Schedule};
use crate::error::{Error, Result};
use crate::geometry::{GeometricGraph, Rotation};
use crate::nn_model::{EscGnn, GraphFeatures, ModelConfig, ModelMode, TargetKind};
use crate::synthetic_data::{rotate_record, Dataset, DatasetRecord, Task};

/// Layer widths and regularization, independent of the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub k_scalar: usize,
    pub k_vector: usize,
    pub scalar_hidden: Vec<usize>,
    pub vector_hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub gate_hidden: Vec<usize>,
    pub dropout: f64,
}

impl Default for ModelShape {
    fn default() -> Self {
        let c = ModelConfig::standard(ModelMode::Equivariant, TargetKind::GraphScalar, 3, 1, 1);
        Self {
            k_scalar: c.k_scalar,
            k_vector: c.k_vector,
            scalar_hidden: c.scalar_hidden,
            vector_hidden: c.vector_hidden,
            head_hidden: c.head_hidden,
            gate_hidden: c.gate_hidden,
            dropout: c.dropout,
        }
    }
}

pub fn target_kind(task: Task) -> TargetKind {
    match task {
        Task::Diameter => TargetKind::GraphScalar,
        Task::VectorField => TargetKind::NodeVector,
    }
}

/// Model configuration for a dataset and feature pipeline.
pub fn model_config(
    task: Task,
    d: usize,
    pipeline: &PipelineConfig,
    banks: &Banks,
    shape: &ModelShape,
) -> ModelConfig {
    let mut c = ModelConfig::standard(
        pipeline.mode,
        target_kind(task),
        d,
        banks.scalar_paths(&pipeline.scattering),
        banks.vector_paths(&pipeline.scattering),
    );
    c.k_scalar = shape.k_scalar;
    c.k_vector = shape.k_vector;
    c.scalar_hidden.clone_from(&shape.scalar_hidden);
    c.vector_hidden.clone_from(&shape.vector_hidden);
    c.head_hidden.clone_from(&shape.head_hidden);
    c.gate_hidden.clone_from(&shape.gate_hidden);
    c.dropout = shape.dropout;
    c
}

/// Rotation applied to test folds: a quarter turn about `z` (about the
/// origin for planar data).
pub fn default_test_rotation(d: usize) -> Result<Rotation> {
    match d {
        3 => Ok(Rotation::quarter_turn_z()),
        2 => Ok(Rotation::planar(std::f64::consts::FRAC_PI_2)),
        other => Err(Error::UnsupportedDimension(other)),
    }
}

pub fn record_target(rec: &DatasetRecord) -> Result<Array2<f64>> {
    match (&rec.graph_target, &rec.node_targets) {
        (Some(y), None) => Ok(Array2::from_elem((1, 1), *y)),
        (None, Some(t)) => Ok(t.clone()),
        _ => Err(Error::Format(
            "record must carry exactly one of graph or node targets".into(),
        )),
    }
}

/// Mean and standard deviation used to standardize scalar targets.
pub fn target_moments(targets: &[&Array2<f64>]) -> (f64, f64) {
    let values: Vec<f64> = targets.iter().flat_map(|t| t.iter().copied()).collect();
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub pipeline: PipelineConfig,
    pub schedule: Schedule,
    pub shape: ModelShape,
    pub folds: usize,
    /// CV steps to run (test fold indices).
    pub steps: Vec<usize>,
    pub seed: u64,
}

impl CvConfig {
    pub fn new(mode: ModelMode, seed: u64) -> Self {
        Self {
            pipeline: PipelineConfig::new(mode),
            schedule: Schedule::default(),
            shape: ModelShape::default(),
            folds: 5,
            steps: (0..5).collect(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub step: usize,
    pub best_val_mse: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub restarts: usize,
    /// Best-validation weights on the rotated test fold.
    pub test_mse_rotated: f64,
    pub test_mse_unrotated: f64,
    pub train_seconds_per_epoch: f64,
    /// Wall time of featurizing and predicting the rotated test fold.
    pub inference_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub task: Task,
    pub mode: ModelMode,
    pub parameter_count: usize,
    pub banks: Banks,
    pub scalar_paths: usize,
    pub vector_paths: usize,
    pub folds: Vec<FoldSummary>,
    pub val_mse_mean: f64,
    pub val_mse_std: f64,
    pub test_mse_mean: f64,
    pub test_mse_std: f64,
}

pub struct CvRun {
    pub summary: CvSummary,
    pub metrics: Vec<MetricsRow>,
    pub models: Vec<EscGnn>,
    pub plan: CvPlan,
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Trains one model per requested CV step and evaluates it on the held-out
/// fold both as generated and rotated.
pub fn run_cv(dataset: &Dataset, config: &CvConfig) -> Result<CvRun> {
    let graphs: Vec<GeometricGraph> = dataset.records.iter().map(|r| r.graph.clone()).collect();
    if graphs.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let banks = select_banks(&graphs, &config.pipeline)?;
    log::info!(
        "scales: scalar {:?}, vector {:?}",
        banks.scalar.scales(),
        banks.vector.as_ref().map(|b| b.scales().to_vec())
    );
    let features = precompute_features(&graphs, &banks, &config.pipeline)?;
    run_cv_prepared(dataset, config, banks, &features)
}

/// [`run_cv`] with banks and unrotated features already computed (one
/// feature set per record, in record order).
pub fn run_cv_prepared(
    dataset: &Dataset,
    config: &CvConfig,
    banks: Banks,
    features: &[GraphFeatures],
) -> Result<CvRun> {
    let d = dataset
        .records
        .first()
        .map(|r| r.graph.d())
        .ok_or_else(|| Error::InvalidArgument("empty dataset".into()))?;
    if features.len() != dataset.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature sets for {} records",
            features.len(),
            dataset.len()
        )));
    }
    let targets: Vec<Array2<f64>> = dataset
        .records
        .iter()
        .map(record_target)
        .collect::<Result<_>>()?;
    let plan = CvPlan::new(dataset.len(), config.folds, config.seed)?;
    let rotation = default_test_rotation(d)?;
    let base_config = model_config(dataset.task, d, &config.pipeline, &banks, &config.shape);

    let samples = |idx: &[usize]| -> Vec<Sample> {
        idx.iter()
            .map(|&i| Sample {
                features: features[i].clone(),
                target: targets[i].clone(),
            })
            .collect()
    };

    let mut folds = Vec::new();
    let mut metrics = Vec::new();
    let mut models = Vec::new();
    let mut parameter_count = 0;
    for &step in &config.steps {
        let split = plan.split(step);
        let train = samples(&split.train);
        let val = samples(&split.val);
        let test = samples(&split.test);
        let mut mc = base_config.clone();
        if mc.target != TargetKind::NodeVector {
            let refs: Vec<&Array2<f64>> = train.iter().map(|s| &s.target).collect();
            let (mean, std) = target_moments(&refs);
            mc.target_mean = mean;
            mc.target_std = std;
        }
        let model = EscGnn::new(mc, config.seed.wrapping_add(step as u64))?;
        parameter_count = model.parameter_count();
        let outcome = train_fold(
            model,
            &train,
            &val,
            &config.schedule,
            config.seed.wrapping_mul(31).wrapping_add(step as u64),
            step,
        )?;

        let test_unrotated = evaluate_mse(&outcome.model, &test)?;
        let started = Instant::now();
        let rotated = rotated_samples(dataset, &split.test, &rotation, &banks, &config.pipeline)?;
        let test_rotated = evaluate_mse(&outcome.model, &rotated)?;
        let inference_seconds = started.elapsed().as_secs_f64();
        log::info!(
            "step {step}: val {:.6} test(rotated) {:.6} test(unrotated) {:.6} after {} epochs",
            outcome.best_val_mse,
            test_rotated,
            test_unrotated,
            outcome.epochs_run
        );
        metrics.extend(outcome.metrics.iter().cloned());
        for (split_name, mse) in [("test", test_rotated), ("test_unrotated", test_unrotated)] {
            metrics.push(MetricsRow {
                fold: step,
                epoch: outcome.best_epoch,
                split: split_name.into(),
                mse,
                lr: outcome.final_lr,
                wall_seconds: outcome.train_seconds,
                is_best: true,
            });
        }
        folds.push(FoldSummary {
            step,
            best_val_mse: outcome.best_val_mse,
            best_epoch: outcome.best_epoch,
            epochs_run: outcome.epochs_run,
            restarts: outcome.restarts,
            test_mse_rotated: test_rotated,
            test_mse_unrotated: test_unrotated,
            train_seconds_per_epoch: outcome.train_seconds / outcome.epochs_run.max(1) as f64,
            inference_seconds,
        });
        models.push(outcome.model);
    }
    let vals: Vec<f64> = folds.iter().map(|f| f.best_val_mse).collect();
    let tests: Vec<f64> = folds.iter().map(|f| f.test_mse_rotated).collect();
    let (val_mse_mean, val_mse_std) = mean_std(&vals);
    let (test_mse_mean, test_mse_std) = mean_std(&tests);
    Ok(CvRun {
        summary: CvSummary {
            task: dataset.task,
            mode: config.pipeline.mode,
            parameter_count,
            scalar_paths: base_config.scalar_paths,
            vector_paths: base_config.vector_paths,
            banks,
            folds,
            val_mse_mean,
            val_mse_std,
            test_mse_mean,
            test_mse_std,
        },
        metrics,
        models,
        plan,
    })
}

/// Rotates the given records (graph and targets) and featurizes them from
/// scratch with fixed banks.
pub fn rotated_samples(
    dataset: &Dataset,
    indices: &[usize],
    rotation: &Rotation,
    banks: &Banks,
    pipeline: &PipelineConfig,
) -> Result<Vec<Sample>> {
    let mut recs: Vec<DatasetRecord> = indices.iter().map(|&i| dataset.records[i].clone()).collect();
    for r in &mut recs {
        rotate_record(r, rotation)?;
    }
    samples_for(&recs, banks, pipeline)
}

/// Featurizes records and pairs them with their targets.
pub fn samples_for(
    records: &[DatasetRecord],
    banks: &Banks,
    pipeline: &PipelineConfig,
) -> Result<Vec<Sample>> {
    let graphs: Vec<GeometricGraph> = records.iter().map(|r| r.graph.clone()).collect();
    let feats: Vec<GraphFeatures> = precompute_features(&graphs, banks, pipeline)?;
    feats
        .into_iter()
        .zip(records)
        .map(|(features, r)| {
            Ok(Sample {
                features,
                target: record_target(r)?,
            })
        })
        .collect()
}
