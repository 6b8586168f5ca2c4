//! Rotating the point cloud rotates every vector scattering coefficient.

use geoscatter::geometry::random_rotation;
use geoscatter::training_bench::{ellipsoid_population, scattering_equivariance, operator_power_equivariance};
use geoscatter::wavelets::WaveletBank;

fn main() -> geoscatter::Result<()> {
    let population = ellipsoid_population(5, 64, 5, 3)?;
    let powers = operator_power_equivariance(&population, 3, &[1, 2, 4, 8], true, 3)?;
    println!("Q^m equivariance: max relative error {:.2e}", powers.max_relative_error);
    let paths = scattering_equivariance(&population, 3, &WaveletBank::dyadic(3), 3)?;
    println!(
        "scattering paths: max relative error {:.2e} over {} graphs",
        paths.max_relative_error, paths.graphs_used
    );
    let raw = operator_power_equivariance(&population, 3, &[1], false, 3)?;
    println!("without sign canonicalization: {:.2e}", raw.max_relative_error);
    let r = random_rotation(9, 3)?;
    println!("a random rotation:\n{:.4}", r.matrix());
    Ok(())
}
