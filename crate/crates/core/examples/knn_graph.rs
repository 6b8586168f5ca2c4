//! Builds a symmetrized kNN graph on an ellipsoid cloud and kernel-weights it.

use geoscatter::geometry::{build_knn_graph, kernel_weights, place_dirac_signals, EpsilonMode};
use geoscatter::synthetic_data::{sample_ellipsoid_cloud, EllipsoidSpec};

fn main() -> geoscatter::Result<()> {
    let spec = EllipsoidSpec::new(3.0, 1.0, 0.8, 11)?;
    let points = sample_ellipsoid_cloud(&spec, 128);
    let graph = kernel_weights(&build_knn_graph(&points, 5)?, EpsilonMode::MeanNeighborSq)?;
    println!("vertices {}", graph.n());
    println!("undirected edges {}", graph.edge_count());
    println!("degree range {}..={}", graph.min_degree(), graph.max_degree());
    println!("kernel scale {:.4}", graph.epsilon());
    println!("diameter {:.4}", graph.diameter());
    let diracs = place_dirac_signals(&graph)?;
    let hot: Vec<usize> = (0..2)
        .map(|c| diracs.column(c).iter().position(|&v| v == 1.0).unwrap_or(usize::MAX))
        .collect();
    println!("Dirac vertices (nearest, farthest from centroid) {hot:?}");
    Ok(())
}
