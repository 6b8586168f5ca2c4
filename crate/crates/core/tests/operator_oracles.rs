use geoscatter::diffusion_ops::{
    apply_power, build_lazy_walk, build_local_frames, build_raw_local_frames, build_vector_diffusion,
    dense_materialize, DiffusionOperator, LocalFrameSet, SignProvenance,
};
use geoscatter::geometry::{build_knn_graph, kernel_weights, EpsilonMode, GeometricGraph};
use geoscatter::synthetic_data::{sample_ellipsoid_cloud, sym_laplacian_eigs, EllipsoidSpec};
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ellipsoid_graph(n: usize, seed: u64) -> GeometricGraph {
    let spec = EllipsoidSpec::new(2.5, 1.1, 0.8, seed).unwrap();
    let pts = sample_ellipsoid_cloud(&spec, n);
    kernel_weights(&build_knn_graph(&pts, 5).unwrap(), EpsilonMode::MeanNeighborSq).unwrap()
}

/// `P = (I + D^-1 W) / 2` assembled entry by entry.
fn dense_walk(g: &GeometricGraph, weighted: bool) -> Array2<f64> {
    let n = g.n();
    let mut w = Array2::<f64>::zeros((n, n));
    for (i, j, wt) in g.edges() {
        let v = if weighted { wt } else { 1.0 };
        w[[i, j]] = v;
        w[[j, i]] = v;
    }
    let mut p = Array2::<f64>::eye(n) * 0.5;
    for i in 0..n {
        let deg: f64 = w.row(i).sum();
        for j in 0..n {
            p[[i, j]] += 0.5 * w[[i, j]] / deg;
        }
    }
    p
}

#[test]
fn lazy_walk_matches_dense_assembly() {
    let g = ellipsoid_graph(60, 3);
    for weighted in [true, false] {
        let p = dense_materialize(&build_lazy_walk(&g, weighted).unwrap()).unwrap();
        let oracle = dense_walk(&g, weighted);
        let err = (&p - &oracle).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err <= 1e-15, "weighted {weighted}: {err}");
    }
}

#[test]
fn sparse_powers_match_dense_powers() {
    let g = ellipsoid_graph(48, 4);
    let p = build_lazy_walk(&g, true).unwrap();
    let q = build_vector_diffusion(&p, &build_local_frames(&g).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for op in [&p as &dyn DiffusionOperator, &q as &dyn DiffusionOperator] {
        let dense = op.to_dense().unwrap();
        let x: Vec<f64> = (0..op.signal_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut power = Array2::<f64>::eye(op.signal_len());
        for m in 1..=8 {
            power = power.dot(&dense);
            let expected = power.dot(&ndarray::Array1::from(x.clone()));
            let got = apply_power(op, &x, m).unwrap();
            let err = got.iter().zip(expected.iter()).fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
            assert!(err <= 1e-13, "m = {m}: {err}");
        }
    }
}

#[test]
fn vector_operator_matches_blockwise_formula() {
    let g = ellipsoid_graph(30, 5);
    let p = build_lazy_walk(&g, true).unwrap();
    let frames = build_local_frames(&g).unwrap();
    let q = dense_materialize(&build_vector_diffusion(&p, &frames).unwrap()).unwrap();
    let pd = dense_walk(&g, true);
    let d = 3;
    for i in 0..30 {
        for j in 0..30 {
            let ui = frames.basis(i);
            let uj = frames.basis(j);
            let o = ui.dot(&uj.t());
            for r in 0..d {
                for c in 0..d {
                    let expected = pd[[i, j]] * o[[r, c]];
                    assert!((q[[i * d + r, j * d + c]] - expected).abs() <= 1e-15);
                }
            }
        }
    }
}

#[test]
fn identity_frames_give_kronecker_product() {
    let g = ellipsoid_graph(20, 6);
    let p = build_lazy_walk(&g, true).unwrap();
    let q = dense_materialize(&build_vector_diffusion(&p, &LocalFrameSet::identity(20, 3)).unwrap()).unwrap();
    let pd = dense_walk(&g, true);
    for a in 0..60 {
        for b in 0..60 {
            let expected = if a % 3 == b % 3 { pd[[a / 3, b / 3]] } else { 0.0 };
            assert!((q[[a, b]] - expected).abs() <= 1e-15);
        }
    }
}

/// Frames against an independent symmetric eigensolver applied to the
/// kernel-weighted neighborhood Gram matrix.
#[test]
fn local_frames_match_independent_eigensolver() {
    let g = ellipsoid_graph(64, 7);
    let raw = build_raw_local_frames(&g).unwrap();
    let canon = build_local_frames(&g).unwrap();
    for i in 0..g.n() {
        let mut gram = DMatrix::<f64>::zeros(3, 3);
        let vi = g.point(i);
        let mut offsets = Vec::new();
        for &j in g.neighbor_indices(i) {
            let off: Vec<f64> = (0..3).map(|c| g.point(j)[c] - vi[c]).collect();
            let k = g.kernel(i, j);
            for r in 0..3 {
                for c in 0..3 {
                    gram[(r, c)] += k * off[r] * off[c];
                }
            }
            offsets.push((off, k));
        }
        let eig = nalgebra::SymmetricEigen::new(gram.clone());
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let frame = raw.frame(i);
        for (col, &e) in order.iter().enumerate() {
            let sv = eig.eigenvalues[e].max(0.0).sqrt();
            assert!((frame.singular_values[col] - sv).abs() <= 1e-10 * (1.0 + sv));
            // same eigenvector up to sign
            let dot: f64 = (0..3).map(|r| frame.basis[[r, col]] * eig.eigenvectors[(r, e)]).sum();
            assert!((dot.abs() - 1.0).abs() <= 1e-9, "node {i} column {col}: {dot}");
            // canonical sign makes the weighted third moment non-negative
            let u: Vec<f64> = (0..3).map(|r| canon.basis(i)[[r, col]]).collect();
            let moment: f64 = offsets
                .iter()
                .map(|(off, k)| k * (0..3).map(|r| off[r] * u[r]).sum::<f64>().powi(3))
                .sum();
            if canon.frame(i).signs[col] == SignProvenance::Skewness {
                assert!(moment > 0.0);
            }
        }
    }
}

#[test]
fn laplacian_eigenpairs_satisfy_dense_residual() {
    let g = build_knn_graph(&sample_ellipsoid_cloud(&EllipsoidSpec::new(3.0, 1.0, 1.0, 8).unwrap(), 200), 6).unwrap();
    let n = g.n();
    let (vals, vecs) = sym_laplacian_eigs(&g, 10).unwrap();
    let mut l = DMatrix::<f64>::identity(n, n);
    for (i, j, _) in g.edges() {
        let s = 1.0 / ((g.degree(i) * g.degree(j)) as f64).sqrt();
        l[(i, j)] -= s;
        l[(j, i)] -= s;
    }
    let reference = nalgebra::SymmetricEigen::new(l.clone());
    let mut ref_vals: Vec<f64> = reference.eigenvalues.iter().copied().collect();
    ref_vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert!(vals[0].abs() < 1e-10);
    for k in 0..11 {
        assert!((vals[k] - ref_vals[k]).abs() < 1e-10);
        let v = DMatrix::from_iterator(n, 1, vecs.column(k).iter().copied());
        let residual = (&l * &v - &v * vals[k]).norm();
        assert!(residual < 1e-9, "pair {k}: {residual}");
        assert!((v.norm() - 1.0).abs() < 1e-12);
        let big = vecs.column(k).iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        assert!(big > 0.0);
    }
}
