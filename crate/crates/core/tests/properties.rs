use geoscatter::diffusion_ops::{apply_power, build_lazy_walk, build_local_frames, build_vector_diffusion, DiffusionOperator};
use geoscatter::geometry::{build_knn_graph, kernel_weights, random_rotation, EpsilonMode, GeometricGraph};
use geoscatter::scattering::{cosine, radial_activation, RadialActivation};
use geoscatter::synthetic_data::{sample_ellipsoid_cloud, EllipsoidSpec};
use geoscatter::training_bench::{relative_error, CvPlan};
use geoscatter::wavelets::{wavelet_transform, WaveletBank};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(a: f64, b: f64, c: f64, n: usize, seed: u64) -> Array2<f64> {
    sample_ellipsoid_cloud(&EllipsoidSpec::new(a, b, c, seed).unwrap(), n)
}

fn weighted(points: &Array2<f64>, k: usize) -> Option<GeometricGraph> {
    let g = build_knn_graph(points, k).ok()?;
    kernel_weights(&g, EpsilonMode::MeanNeighborSq).ok()
}

fn bank_from_steps(steps: &[usize]) -> WaveletBank {
    let mut scales = vec![0];
    for s in steps {
        scales.push(scales.last().unwrap() + s);
    }
    WaveletBank::custom(scales).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lazy_walk_is_row_stochastic(seed in 0u64..10_000, n in 20usize..60, k in 3usize..8, w in any::<bool>()) {
        let g = weighted(&cloud(2.0, 1.0, 0.7, n, seed), k);
        prop_assume!(g.is_some());
        let p = build_lazy_walk(&g.unwrap(), w).unwrap().to_dense().unwrap();
        for row in p.rows() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-14);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn filters_telescope_to_the_input(
        seed in 0u64..10_000,
        steps in proptest::collection::vec(1usize..5, 1..6),
        vector in any::<bool>(),
    ) {
        let g = weighted(&cloud(1.5, 1.0, 0.8, 30, seed), 5);
        prop_assume!(g.is_some());
        let g = g.unwrap();
        let p = build_lazy_walk(&g, true).unwrap();
        let q = build_vector_diffusion(&p, &build_local_frames(&g).unwrap()).unwrap();
        let op: &dyn DiffusionOperator = if vector { &q } else { &p };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..op.signal_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bank = bank_from_steps(&steps);
        let parts = wavelet_transform(op, &bank, &x).unwrap();
        prop_assert_eq!(parts.len(), steps.len() + 1);
        for (i, xi) in x.iter().enumerate() {
            let sum: f64 = parts.iter().map(|c| c[i]).sum();
            prop_assert!((sum - xi).abs() <= 1e-12);
        }
    }

    #[test]
    fn vector_diffusion_commutes_with_rotation(seed in 0u64..10_000, rot in 0u64..10_000, m in 1usize..9) {
        let pts = cloud(2.5, 1.2, 0.6, 40, seed);
        let r = random_rotation(rot, 3).unwrap();
        let (g, gr) = (weighted(&pts, 5), weighted(&r.apply_rows(&pts), 5));
        prop_assume!(g.is_some() && gr.is_some());
        let (g, gr) = (g.unwrap(), gr.unwrap());
        prop_assume!(g.edges().iter().map(|e| (e.0, e.1)).eq(gr.edges().iter().map(|e| (e.0, e.1))));
        let (f, fr) = (build_local_frames(&g).unwrap(), build_local_frames(&gr).unwrap());
        prop_assume!(!f.any_flagged() && !fr.any_flagged());
        let q = build_vector_diffusion(&build_lazy_walk(&g, true).unwrap(), &f).unwrap();
        let qr = build_vector_diffusion(&build_lazy_walk(&gr, true).unwrap(), &fr).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ rot);
        let w: Vec<f64> = (0..120).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs = apply_power(&qr, &r.apply_flat(&w), m).unwrap();
        let rhs = r.apply_flat(&apply_power(&q, &w, m).unwrap());
        prop_assert!(relative_error(&lhs, &rhs) <= 1e-9);
    }

    #[test]
    fn frames_are_orthonormal(seed in 0u64..10_000, k in 4usize..9) {
        let g = weighted(&cloud(1.0, 1.0, 1.0, 40, seed), k);
        prop_assume!(g.is_some());
        let frames = build_local_frames(&g.unwrap()).unwrap();
        for fr in frames.frames() {
            let gram = fr.basis.t().dot(&fr.basis);
            for r in 0..3 {
                for c in 0..3 {
                    let e = if r == c { 1.0 } else { 0.0 };
                    prop_assert!((gram[[r, c]] - e).abs() <= 1e-12);
                }
            }
            prop_assert!(fr.singular_values.windows(2).into_iter().all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn cv_steps_partition_the_records(records in 3usize..200, folds in 3usize..10, seed in any::<u64>()) {
        prop_assume!(records >= folds);
        let plan = CvPlan::new(records, folds, seed).unwrap();
        let mut sizes = vec![0usize; folds];
        for &f in &plan.assignment {
            sizes[f] += 1;
        }
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for s in 0..folds {
            let split = plan.split(s);
            let mut all: Vec<usize> = split.train.iter().chain(&split.val).chain(&split.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..records).collect::<Vec<_>>());
            prop_assert!(split.test.iter().all(|&r| plan.assignment[r] == s));
            prop_assert!(split.val.iter().all(|&r| plan.assignment[r] == (s + 1) % folds));
        }
    }

    #[test]
    fn radial_activation_commutes_with_rotation(
        w in proptest::array::uniform3(-5.0f64..5.0),
        rot in 0u64..10_000,
    ) {
        let r = random_rotation(rot, 3).unwrap();
        let lhs = radial_activation(&r.apply_flat(&w), RadialActivation::Tanh);
        let rhs = r.apply_flat(&radial_activation(&w, RadialActivation::Tanh));
        for (a, b) in lhs.iter().zip(&rhs) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn cosine_is_bounded_and_rotation_invariant(
        a in proptest::array::uniform3(-3.0f64..3.0),
        b in proptest::array::uniform3(-3.0f64..3.0),
        rot in 0u64..10_000,
    ) {
        let c = cosine(&a, &b);
        prop_assert!((-1.0 - 1e-15..=1.0 + 1e-15).contains(&c));
        let r = random_rotation(rot, 3).unwrap();
        prop_assert!((cosine(&r.apply_flat(&a), &r.apply_flat(&b)) - c).abs() <= 1e-12);
    }
}
