use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn_model::{AdamW, AdamWConfig, EscGnn, GraphFeatures};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub optimizer: AdamWConfig,
    pub batch: usize,
    pub burn_in: usize,
    pub patience: usize,
    pub check_every: usize,
    pub restarts_max: usize,
    pub epochs_max: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            optimizer: AdamWConfig::default(),
            batch: 32,
            burn_in: 50,
            patience: 50,
            check_every: 5,
            restarts_max: 2,
            epochs_max: 500,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.check_every == 0 || self.epochs_max == 0 {
            return Err(Error::InvalidArgument(
                "batch, check interval and epoch cap must be positive".into(),
            ));
        }
        if !self.patience.is_multiple_of(self.check_every) {
            return Err(Error::InvalidArgument(format!(
                "patience {} is not a multiple of the check interval {}",
                self.patience, self.check_every
            )));
        }
        Ok(())
    }
}

/// Seeded assignment of records to folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub folds: usize,
    /// Fold of each record.
    pub assignment: Vec<usize>,
}

/// Record indices of one CV step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl CvPlan {
    /// Shuffles the records and deals them round-robin into `folds` folds.
    pub fn new(records: usize, folds: usize, seed: u64) -> Result<Self> {
        if folds < 3 || records < folds {
            return Err(Error::InvalidArgument(format!(
                "need at least 3 folds and one record per fold ({records} records, {folds} folds)"
            )));
        }
        let mut order: Vec<usize> = (0..records).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut assignment = vec![0; records];
        for (pos, &r) in order.iter().enumerate() {
            assignment[r] = pos % folds;
        }
        Ok(Self { folds, assignment })
    }

    /// Step `s`: fold `s` is the test fold, fold `s + 1` the validation fold.
    pub fn split(&self, step: usize) -> CvSplit {
        let test_fold = step % self.folds;
        let val_fold = (step + 1) % self.folds;
        let mut split = CvSplit {
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for (r, &f) in self.assignment.iter().enumerate() {
            if f == test_fold {
                split.test.push(r);
            } else if f == val_fold {
                split.val.push(r);
            } else {
                split.train.push(r);
            }
        }
        split
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub fold: usize,
    pub epoch: usize,
    pub split: String,
    pub mse: f64,
    pub lr: f64,
    pub wall_seconds: f64,
    pub is_best: bool,
}

/// A graph's features with its target in target units (`1 x 1` for graph
/// scalars, `n x 1` or `n x d` for node targets).
#[derive(Debug, Clone)]
pub struct Sample {
    pub features: GraphFeatures,
    pub target: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    /// Parameters of the best validation epoch.
    pub model: EscGnn,
    pub best_val_mse: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub restarts: usize,
    pub final_lr: f64,
    pub metrics: Vec<MetricsRow>,
    pub train_seconds: f64,
}

/// MSE over all target components, predictions in target units.
pub fn evaluate_mse(model: &EscGnn, samples: &[Sample]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for s in samples {
        let pred = model.predict(&s.features)?;
        if pred.dim() != s.target.dim() {
            return Err(Error::ShapeMismatch(format!(
                "prediction {:?} vs target {:?}",
                pred.dim(),
                s.target.dim()
            )));
        }
        sum += (&pred - &s.target).iter().map(|v| v * v).sum::<f64>();
        count += s.target.len();
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no samples to evaluate".into()));
    }
    Ok(sum / count as f64)
}

/// Trains with AdamW on mini-batches, evaluating validation MSE after every
/// epoch. After burn-in, every `check_every` epochs a stall of `patience`
/// epochs without strict improvement halves the learning rate and reloads
/// the best weights; the trigger after `restarts_max` restarts ends training.
pub fn train_fold(
    mut model: EscGnn,
    train: &[Sample],
    val: &[Sample],
    schedule: &Schedule,
    seed: u64,
    fold: usize,
) -> Result<FoldOutcome> {
    schedule.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument("empty train or validation split".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let standardized: Vec<Array2<f64>> = train
        .iter()
        .map(|s| s.target.mapv(|v| model.config.standardize(v)))
        .collect();
    let unit_sq = match model.config.target {
        crate::nn_model::TargetKind::NodeVector => 1.0,
        _ => model.config.target_std * model.config.target_std,
    };

    let mut params = model.params_flat();
    let mut opt = AdamW::new(schedule.optimizer, params.len());
    let mut best_params = params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut stall_from = 0;
    let mut restarts = 0;
    let mut metrics = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let start = Instant::now();
    let mut epochs_run = 0;

    for epoch in 1..=schedule.epochs_max {
        epochs_run = epoch;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(schedule.batch) {
            let batch: Vec<(&GraphFeatures, &Array2<f64>)> = chunk
                .iter()
                .map(|&i| (&train[i].features, &standardized[i]))
                .collect();
            let (loss, grads) = model.loss_and_grad(&batch, Some(&mut rng))?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            opt.step(&mut params, &grads.params_flat());
            model.set_params_flat(&params)?;
            loss_sum += loss;
            batches += 1;
        }
        let train_mse = loss_sum / batches as f64 * unit_sq;
        let val_mse = evaluate_mse(&model, val)?;
        if !val_mse.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let improved = val_mse < best_val - 1e-12;
        if improved {
            best_val = val_mse;
            best_epoch = epoch;
            best_params.clone_from(&params);
            stall_from = epoch;
        }
        let wall = start.elapsed().as_secs_f64();
        metrics.push(MetricsRow {
            fold,
            epoch,
            split: "train".into(),
            mse: train_mse,
            lr: opt.lr,
            wall_seconds: wall,
            is_best: false,
        });
        metrics.push(MetricsRow {
            fold,
            epoch,
            split: "val".into(),
            mse: val_mse,
            lr: opt.lr,
            wall_seconds: wall,
            is_best: improved,
        });
        log::debug!("fold {fold} epoch {epoch}: train {train_mse:.6} val {val_mse:.6}");

        if epoch > schedule.burn_in
            && epoch % schedule.check_every == 0
            && epoch - stall_from >= schedule.patience
        {
            if restarts == schedule.restarts_max {
                break;
            }
            restarts += 1;
            opt.lr *= 0.5;
            opt.reset_moments();
            params.clone_from(&best_params);
            model.set_params_flat(&params)?;
            stall_from = epoch;
            log::info!("fold {fold} epoch {epoch}: restart {restarts}, lr {}", opt.lr);
        }
    }
    let train_seconds = start.elapsed().as_secs_f64();
    model.set_params_flat(&best_params)?;
    Ok(FoldOutcome {
        model,
        best_val_mse: best_val,
        best_epoch,
        epochs_run,
        restarts,
        final_lr: opt.lr,
        metrics,
        train_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_partitions_records() {
        let plan = CvPlan::new(23, 5, 4).unwrap();
        let mut test_count = vec![0; 23];
        let mut val_count = vec![0; 23];
        for step in 0..5 {
            let s = plan.split(step);
            assert_eq!(s.train.len() + s.val.len() + s.test.len(), 23);
            for &r in &s.test {
                test_count[r] += 1;
            }
            for &r in &s.val {
                val_count[r] += 1;
            }
        }
        assert!(test_count.iter().all(|&c| c == 1));
        assert!(val_count.iter().all(|&c| c == 1));
    }

    #[test]
    fn schedule_rejects_misaligned_patience() {
        let s = Schedule {
            patience: 12,
            ..Default::default()
        };
        assert!(s.validate().is_err());
        assert!(Schedule::default().validate().is_ok());
    }
}
