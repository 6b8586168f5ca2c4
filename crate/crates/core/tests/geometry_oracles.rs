use std::collections::BTreeSet;

use geoscatter::geometry::{
    build_knn_graph, dataset_epsilon, dirac_indices, kernel_weights, random_rotation, rotate_graph,
    EpsilonMode, Rotation,
};
use geoscatter::synthetic_data::{sample_ellipsoid_cloud, EllipsoidSpec};
use geoscatter::Error;
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_points(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
}

/// Union of each vertex's k nearest others, by exhaustive search.
fn brute_force_knn(points: &Array2<f64>, k: usize) -> BTreeSet<(usize, usize)> {
    let n = points.nrows();
    let mut edges = BTreeSet::new();
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d2: f64 = points
                    .row(i)
                    .iter()
                    .zip(points.row(j).iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, j)
            })
            .collect();
        others.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for &(_, j) in others.iter().take(k) {
            edges.insert((i.min(j), i.max(j)));
        }
    }
    edges
}

#[test]
fn knn_matches_exhaustive_search() {
    for (seed, d, k) in [(1, 3, 5), (2, 3, 8), (3, 2, 4), (4, 2, 6)] {
        let pts = random_points(70, d, seed);
        let g = build_knn_graph(&pts, k).unwrap();
        let got: BTreeSet<(usize, usize)> = g.edges().iter().map(|&(i, j, _)| (i, j)).collect();
        assert_eq!(got, brute_force_knn(&pts, k), "seed {seed}");
        assert!(g.edges().iter().all(|e| e.2 == 1.0));
    }
}

#[test]
fn kernel_weights_follow_the_gaussian_formula() {
    let pts = random_points(40, 3, 9);
    let g = build_knn_graph(&pts, 5).unwrap();
    let eps = 0.37;
    let w = kernel_weights(&g, EpsilonMode::Explicit(eps)).unwrap();
    for (i, j, wt) in w.edges() {
        let d2: f64 = (0..3).map(|c| (pts[[i, c]] - pts[[j, c]]).powi(2)).sum();
        assert!((wt - (-d2 / eps).exp()).abs() <= 1e-15);
    }
    // mean neighbor distance squared, computed directly
    let mut total = 0.0;
    for i in 0..g.n() {
        let nb = g.neighbor_indices(i);
        let mean: f64 = nb
            .iter()
            .map(|&j| (0..3).map(|c| (pts[[i, c]] - pts[[j, c]]).powi(2)).sum::<f64>().sqrt())
            .sum::<f64>()
            / nb.len() as f64;
        total += mean;
    }
    let expected = (total / g.n() as f64).powi(2);
    assert!((dataset_epsilon(std::iter::once(&g)) - expected).abs() <= 1e-14);
}

#[test]
fn disconnected_clusters_are_reported() {
    let mut pts = random_points(20, 3, 5);
    for i in 10..20 {
        pts[[i, 0]] += 100.0;
    }
    match build_knn_graph(&pts, 3) {
        Err(Error::DisconnectedGraph { components }) => assert_eq!(components, 2),
        other => panic!("expected disconnection, got {other:?}"),
    }
}

#[test]
fn duplicate_points_are_rejected() {
    let pts = array![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
    assert!(matches!(build_knn_graph(&pts, 2), Err(Error::DegeneratePoints(0, 2))));
}

#[test]
fn dirac_placement_matches_direct_search() {
    let pts = random_points(50, 3, 12);
    let c: Vec<f64> = (0..3).map(|k| pts.column(k).sum() / 50.0).collect();
    let dist = |i: usize| (0..3).map(|k| (pts[[i, k]] - c[k]).powi(2)).sum::<f64>();
    let near = (0..50).min_by(|&a, &b| dist(a).partial_cmp(&dist(b)).unwrap()).unwrap();
    let far = (0..50).max_by(|&a, &b| dist(a).partial_cmp(&dist(b)).unwrap()).unwrap();
    assert_eq!(dirac_indices(&pts).unwrap(), (near, far));
}

#[test]
fn ellipsoid_samples_lie_on_the_surface_and_reach_the_tips() {
    let spec = EllipsoidSpec::new(3.0, 1.0, 0.7, 21).unwrap();
    let pts = sample_ellipsoid_cloud(&spec, 20_000);
    for row in pts.rows() {
        let level = (row[0] / 3.0).powi(2) + row[1].powi(2) + (row[2] / 0.7).powi(2);
        assert!((level - 1.0).abs() < 1e-12);
    }
    for (axis, semi) in [(0, 3.0), (1, 1.0), (2, 0.7)] {
        let max = pts.column(axis).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= semi + 1e-12 && max > 0.97 * semi, "axis {axis}: {max}");
    }
    let diam = geoscatter::geometry::diameter(&pts);
    assert!(diam <= 6.0 + 1e-12 && diam > 5.8, "{diam}");
}

#[test]
fn haar_rotations_are_proper_and_unbiased() {
    let samples = 4000;
    let mut mean = Array2::<f64>::zeros((3, 3));
    let mut z2 = 0.0;
    for s in 0..samples {
        let r = random_rotation(s, 3).unwrap();
        let m = r.matrix();
        let rtr = m.t().dot(m) - Array2::<f64>::eye(3);
        assert!(rtr.iter().all(|v| v.abs() < 1e-12));
        let det = m[[0, 0]] * (m[[1, 1]] * m[[2, 2]] - m[[1, 2]] * m[[2, 1]])
            - m[[0, 1]] * (m[[1, 0]] * m[[2, 2]] - m[[1, 2]] * m[[2, 0]])
            + m[[0, 2]] * (m[[1, 0]] * m[[2, 1]] - m[[1, 1]] * m[[2, 0]]);
        assert!((det - 1.0).abs() < 1e-12);
        mean = mean + m;
        z2 += m[[2, 2]] * m[[2, 2]];
    }
    mean /= samples as f64;
    // each entry has variance 1/3; 5 standard errors
    let tol = 5.0 * (1.0f64 / 3.0 / samples as f64).sqrt();
    assert!(mean.iter().all(|v| v.abs() < tol), "{mean}");
    assert!((z2 / samples as f64 - 1.0 / 3.0).abs() < 0.03);
}

#[test]
fn rotate_graph_keeps_structure_and_rotates_fields() {
    let pts = random_points(30, 3, 4);
    let g = kernel_weights(&build_knn_graph(&pts, 4).unwrap(), EpsilonMode::MeanNeighborSq)
        .unwrap()
        .with_coordinate_field();
    let r = Rotation::quarter_turn_z();
    let rg = rotate_graph(&g, &r).unwrap();
    assert_eq!(rg.edges(), g.edges());
    for i in 0..30 {
        assert_eq!(rg.coords()[[i, 0]], -g.coords()[[i, 1]]);
        assert_eq!(rg.coords()[[i, 1]], g.coords()[[i, 0]]);
        assert_eq!(rg.vector_signals()[[i, 0, 0]], -g.vector_signals()[[i, 0, 1]]);
    }
    // rebuilding from rotated points gives the same graph
    let rebuilt = build_knn_graph(&r.apply_rows(&pts), 4).unwrap();
    let before: Vec<_> = g.edges().iter().map(|e| (e.0, e.1)).collect();
    let after: Vec<_> = rebuilt.edges().iter().map(|e| (e.0, e.1)).collect();
    assert_eq!(before, after);
}
