use geoscatter::nn_model::{AdamWConfig, EscGnn, ModelMode};
use geoscatter::synthetic_data::{make_diameter_dataset, Dataset, DiameterConfig};
use geoscatter::training_bench::{
    evaluate_mse, model_config, precompute_features, record_target, run_cv, select_banks, train_fold, Banks, CvConfig,
    ModelShape, PipelineConfig, Sample, ScaleSelection, Schedule,
};

fn small_dataset(n_graphs: usize, seed: u64) -> Dataset {
    make_diameter_dataset(&DiameterConfig { n_graphs, n_points: 24, k: 5, seed }).unwrap()
}

fn pipeline() -> PipelineConfig {
    PipelineConfig { scales: ScaleSelection::Dyadic { j: 2 }, ..PipelineConfig::new(ModelMode::Equivariant) }
}

fn samples(data: &Dataset) -> (Banks, Vec<Sample>) {
    let graphs: Vec<_> = data.records.iter().map(|r| r.graph.clone()).collect();
    let banks = select_banks(&graphs, &pipeline()).unwrap();
    let feats = precompute_features(&graphs, &banks, &pipeline()).unwrap();
    let samples = feats
        .into_iter()
        .zip(&data.records)
        .map(|(features, r)| Sample { features, target: record_target(r).unwrap() })
        .collect();
    (banks, samples)
}

fn model(banks: &Banks, dropout: f64, mean: f64, seed: u64) -> EscGnn {
    let shape = ModelShape { dropout, ..ModelShape::default() };
    let mut c = model_config(geoscatter::synthetic_data::Task::Diameter, 3, &pipeline(), banks, &shape);
    c.target_mean = mean;
    EscGnn::new(c, seed).unwrap()
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let data = small_dataset(6, 1);
    let (banks, s) = samples(&data);
    let m = model(&banks, 0.0, 0.0, 3);
    let schedule = Schedule {
        optimizer: AdamWConfig { lr: 0.0, ..Default::default() },
        batch: 64,
        epochs_max: 4,
        ..Default::default()
    };
    // one training graph, so the epoch loss does not depend on summation order
    let out = train_fold(m.clone(), &s[..1], &s[4..], &schedule, 0, 0).unwrap();
    assert_eq!(bits(&out.model.params_flat()), bits(&m.params_flat()));
    let train: Vec<f64> = out.metrics.iter().filter(|r| r.split == "train").map(|r| r.mse).collect();
    assert_eq!(train.len(), 4);
    assert!(train.iter().all(|&v| v == train[0]));
}

#[test]
fn constant_target_reaches_the_constant_predictor() {
    let data = small_dataset(1, 2);
    let (banks, s) = samples(&data);
    let mut copies: Vec<Sample> = (0..8).map(|_| s[0].clone()).collect();
    for c in &mut copies {
        c.target.fill(2.5);
    }
    // mean deliberately left at zero so the network has to learn the offset
    let m = model(&banks, 0.0, 0.0, 4);
    let schedule = Schedule { epochs_max: 200, batch: 8, ..Default::default() };
    let out = train_fold(m, &copies, &copies[..2], &schedule, 1, 0).unwrap();
    let mse = evaluate_mse(&out.model, &copies).unwrap();
    assert!(mse <= 1e-6, "final MSE {mse}");
}

#[test]
fn plateau_triggers_halvings_and_reloads() {
    let data = small_dataset(6, 3);
    let (banks, s) = samples(&data);
    let m = model(&banks, 0.0, 0.0, 5);
    // steps far below one ulp of any nonzero weight: the validation loss never moves
    let lr = 1e-300;
    let schedule = Schedule {
        optimizer: AdamWConfig { lr, ..Default::default() },
        batch: 4,
        burn_in: 2,
        patience: 3,
        check_every: 1,
        restarts_max: 2,
        epochs_max: 40,
    };
    let out = train_fold(m.clone(), &s[..4], &s[4..], &schedule, 0, 0).unwrap();
    assert_eq!(out.restarts, 2);
    assert_eq!(out.best_epoch, 1);
    assert_eq!(out.final_lr, lr / 4.0);
    // triggers at epochs 4, 7 and 10; the third ends training
    assert_eq!(out.epochs_run, 10);
    let lrs: Vec<f64> = out.metrics.iter().filter(|r| r.split == "val").map(|r| r.lr).collect();
    assert_eq!(lrs[..4], [lr; 4]);
    assert_eq!(lrs[4..7], [lr / 2.0; 3]);
    assert_eq!(lrs[7..], [lr / 4.0; 3]);
    // zero-valued biases move by about lr; everything else is frozen
    let drift = out.model.params_flat().iter().zip(m.params_flat()).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    assert!(drift <= 1e-290);
    assert_eq!(evaluate_mse(&out.model, &s[4..]).unwrap(), out.best_val_mse);
}

#[test]
fn returned_weights_are_the_best_validation_snapshot() {
    let data = small_dataset(12, 4);
    let (banks, s) = samples(&data);
    let m = model(&banks, 0.7, 0.0, 6);
    let schedule = Schedule { epochs_max: 30, batch: 4, burn_in: 5, patience: 5, check_every: 5, ..Default::default() };
    let out = train_fold(m, &s[..8], &s[8..], &schedule, 9, 0).unwrap();
    let curve: Vec<f64> = out.metrics.iter().filter(|r| r.split == "val").map(|r| r.mse).collect();
    let min = curve.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(out.best_val_mse, min);
    assert_eq!(evaluate_mse(&out.model, &s[8..]).unwrap(), min);
    let best: Vec<usize> = out.metrics.iter().filter(|r| r.is_best).map(|r| r.epoch).collect();
    assert_eq!(*best.last().unwrap(), out.best_epoch);
    assert!(out.metrics.iter().all(|r| r.mse >= 0.0));
}

#[test]
fn seeded_cross_validation_is_bitwise_repeatable() {
    let data = small_dataset(15, 5);
    let mut cfg = CvConfig::new(ModelMode::Equivariant, 3);
    cfg.pipeline = pipeline();
    cfg.schedule.epochs_max = 4;
    cfg.steps = vec![0, 1];
    let a = run_cv(&data, &cfg).unwrap();
    let b = run_cv(&data, &cfg).unwrap();
    for (x, y) in a.summary.folds.iter().zip(&b.summary.folds) {
        assert_eq!(x.best_val_mse.to_bits(), y.best_val_mse.to_bits());
        assert_eq!(x.test_mse_rotated.to_bits(), y.test_mse_rotated.to_bits());
        assert_eq!(x.test_mse_unrotated.to_bits(), y.test_mse_unrotated.to_bits());
    }
    for (x, y) in a.models.iter().zip(&b.models) {
        assert_eq!(bits(&x.params_flat()), bits(&y.params_flat()));
    }
    // across the five steps every record lands in a test fold exactly once
    let mut tested = vec![0; data.len()];
    for step in 0..5 {
        a.plan.split(step).test.iter().for_each(|&r| tested[r] += 1);
    }
    assert!(tested.iter().all(|&c| c == 1));
}
