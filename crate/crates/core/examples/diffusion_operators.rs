//! Lazy random walk `P`, local frames and the vector diffusion operator `Q`.

use geoscatter::diffusion_ops::{build_lazy_walk, build_local_frames, build_vector_diffusion, DiffusionOperator};
use geoscatter::geometry::{build_knn_graph, kernel_weights, EpsilonMode};
use geoscatter::synthetic_data::{sample_ellipsoid_cloud, EllipsoidSpec};

fn main() -> geoscatter::Result<()> {
    let points = sample_ellipsoid_cloud(&EllipsoidSpec::new(3.0, 1.2, 0.9, 5)?, 64);
    let graph = kernel_weights(&build_knn_graph(&points, 5)?, EpsilonMode::MeanNeighborSq)?;
    let p = build_lazy_walk(&graph, true)?;
    let frames = build_local_frames(&graph)?;
    let q = build_vector_diffusion(&p, &frames)?;
    println!("P: {} x {}, {} nonzeros, row stochastic {}", p.n(), p.n(), p.nnz(), p.is_row_stochastic());
    println!("Q: {} x {} in {}x{} blocks, {} blocks", q.signal_len(), q.signal_len(), q.d(), q.d(), q.nnz());
    println!("flagged frames {}", frames.flagged_nodes().len());
    println!("frame at node 0:\n{:.4}", frames.basis(0));
    let field: Vec<f64> = points.iter().copied().collect();
    let smoothed = q.apply(&field)?;
    println!("Q applied to the coordinate field, node 0: {:.4?}", &smoothed[..3]);
    Ok(())
}
