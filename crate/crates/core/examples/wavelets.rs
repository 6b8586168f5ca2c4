//! Dyadic diffusion wavelets and the telescoping identity.

use geoscatter::diffusion_ops::build_lazy_walk;
use geoscatter::geometry::{build_knn_graph, kernel_weights, place_dirac_signals, EpsilonMode};
use geoscatter::synthetic_data::{sample_ellipsoid_cloud, EllipsoidSpec};
use geoscatter::wavelets::{wavelet_transform, WaveletBank};

fn main() -> geoscatter::Result<()> {
    let points = sample_ellipsoid_cloud(&EllipsoidSpec::new(2.5, 1.0, 1.0, 2)?, 96);
    let graph = kernel_weights(&build_knn_graph(&points, 5)?, EpsilonMode::MeanNeighborSq)?;
    let p = build_lazy_walk(&graph, true)?;
    let bank = WaveletBank::dyadic(4);
    println!("scales {:?}", bank.scales());
    let x = place_dirac_signals(&graph)?.column(0).to_vec();
    let coeffs = wavelet_transform(&p, &bank, &x)?;
    for (j, c) in coeffs.iter().enumerate() {
        let label = if j + 1 == coeffs.len() { "low-pass".to_string() } else { format!("Psi_{j}") };
        let l2 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        println!("{label:<9} l2 norm {l2:.5}");
    }
    let err = (0..x.len())
        .map(|i| (coeffs.iter().map(|c| c[i]).sum::<f64>() - x[i]).abs())
        .fold(0.0, f64::max);
    println!("telescoping residual {err:.2e}");
    Ok(())
}
