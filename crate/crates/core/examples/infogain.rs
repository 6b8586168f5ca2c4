//! Data-driven wavelet scales from l1 decay quantiles, pooled over graphs.

use geoscatter::nn_model::ModelMode;
use geoscatter::synthetic_data::{make_diameter_dataset, DiameterConfig};
use geoscatter::training_bench::{select_banks, PipelineConfig};

fn main() -> geoscatter::Result<()> {
    let data = make_diameter_dataset(&DiameterConfig {
        n_graphs: 32,
        n_points: 64,
        ..Default::default()
    })?;
    let graphs: Vec<_> = data.records.iter().map(|r| r.graph.clone()).collect();
    for mode in [ModelMode::Equivariant, ModelMode::Ablated] {
        let banks = select_banks(&graphs, &PipelineConfig::new(mode))?;
        println!(
            "{mode:?}: scalar scales {:?}, vector scales {:?}",
            banks.scalar.scales(),
            banks.vector.as_ref().map(|b| b.scales().to_vec())
        );
    }
    Ok(())
}
