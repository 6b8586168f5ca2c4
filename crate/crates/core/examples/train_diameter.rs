//! One cross-validation step of the diameter task in both modes, with the
//! test fold rotated by a quarter turn.

use geoscatter::nn_model::ModelMode;
use geoscatter::synthetic_data::{make_diameter_dataset, DiameterConfig};
use geoscatter::training_bench::{run_cv, CvConfig};

fn main() -> geoscatter::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let data = make_diameter_dataset(&DiameterConfig {
        n_graphs: 128,
        n_points: 64,
        k: 5,
        seed: 0,
    })?;
    for mode in [ModelMode::Equivariant, ModelMode::Ablated] {
        let mut config = CvConfig::new(mode, 0);
        config.steps = vec![0];
        config.schedule.epochs_max = 150;
        let run = run_cv(&data, &config)?;
        let f = &run.summary.folds[0];
        println!(
            "{mode:?}: {} parameters, val {:.4}, rotated test {:.4}, unrotated test {:.4}",
            run.summary.parameter_count, f.best_val_mse, f.test_mse_rotated, f.test_mse_unrotated
        );
    }
    Ok(())
}
