//! Node-level vector targets: outward normals with a smooth random magnitude.

use geoscatter::nn_model::ModelMode;
use geoscatter::synthetic_data::{make_vector_target_dataset, VectorFieldConfig};
use geoscatter::training_bench::{run_cv, CvConfig};

fn main() -> geoscatter::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let data = make_vector_target_dataset(&VectorFieldConfig {
        n_graphs: 64,
        ..Default::default()
    })?;
    let mut config = CvConfig::new(ModelMode::Equivariant, 0);
    config.steps = vec![0];
    config.schedule.epochs_max = 150;
    let run = run_cv(&data, &config)?;
    let f = &run.summary.folds[0];
    println!(
        "val {:.4}, rotated test {:.4}, unrotated test {:.4}, {:.3}s per epoch",
        f.best_val_mse, f.test_mse_rotated, f.test_mse_unrotated, f.train_seconds_per_epoch
    );
    Ok(())
}
