//! Default-size diameter benchmark: 512 graphs of 128 points, full schedule,
//! five folds, both modes. Takes hours on one core.

use geoscatter::nn_model::ModelMode;
use geoscatter::synthetic_data::{make_diameter_dataset, DiameterConfig};
use geoscatter::training_bench::{run_cv, CvConfig};

fn main() -> geoscatter::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let data = make_diameter_dataset(&DiameterConfig::default())?;
    for mode in [ModelMode::Equivariant, ModelMode::Ablated] {
        let run = run_cv(&data, &CvConfig::new(mode, 0))?;
        let s = &run.summary;
        println!(
            "{mode:?}: val {:.4} +- {:.4}, rotated test {:.4} +- {:.4}",
            s.val_mse_mean, s.val_mse_std, s.test_mse_mean, s.test_mse_std
        );
        println!("{}", serde_json::to_string_pretty(s)?);
    }
    Ok(())
}
